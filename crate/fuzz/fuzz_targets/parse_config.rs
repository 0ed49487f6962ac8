#![no_main]

use libfuzzer_sys::fuzz_target;
use mksr::io::config::{config_to_string, parse_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        let again = parse_config(&config_to_string(&cfg).unwrap()).expect("written config parses");
        assert_eq!(config_to_string(&again).unwrap(), config_to_string(&cfg).unwrap());
    }
});
