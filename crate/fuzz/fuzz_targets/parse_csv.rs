#![no_main]

use libfuzzer_sys::fuzz_target;
use mksr::io::matrix::{parse_csv, to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = parse_csv(text) {
        let back = parse_csv(&to_csv(a.view())).expect("written CSV parses");
        assert_eq!(a.dim(), back.dim());
        for (x, y) in a.iter().zip(back.iter()) {
            assert!(x == y || (x.is_nan() && y.is_nan()));
        }
    }
});
