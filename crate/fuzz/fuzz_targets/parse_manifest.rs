#![no_main]

use libfuzzer_sys::fuzz_target;
use mksr::io::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_json(text) {
        let again = Manifest::from_json(&m.to_json().unwrap()).expect("written manifest parses");
        assert_eq!(again.to_json().unwrap(), m.to_json().unwrap());
    }
});
