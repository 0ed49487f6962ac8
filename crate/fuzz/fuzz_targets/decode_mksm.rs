#![no_main]

use libfuzzer_sys::fuzz_target;
use mksr::io::matrix::{decode_matrix, decode_mksm, encode_mksm};

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = decode_mksm(data) {
        // decoding is exact, so re-encoding must reproduce the input
        assert_eq!(encode_mksm(a.view()), data);
    }
    let _ = decode_matrix(data);
});
