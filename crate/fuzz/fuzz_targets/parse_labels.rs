#![no_main]

use libfuzzer_sys::fuzz_target;
use mksr::io::labels::{check_contiguous, labels_to_string, parse_labels};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = parse_labels(text) {
        assert_eq!(parse_labels(&labels_to_string(&labels)).unwrap(), labels);
        let _ = check_contiguous(&labels);
    }
});
