#![no_main]

//! Input framing: repeated `[name_len u16 LE][name][len u32 LE][bytes]`.

use std::collections::BTreeMap;

use libfuzzer_sys::fuzz_target;
use mksr::io::model::{decode_container, encode_container};

fn split(mut data: &[u8]) -> Option<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    while !data.is_empty() {
        let name_len = u16::from_le_bytes(data.get(..2)?.try_into().ok()?) as usize;
        let name = std::str::from_utf8(data.get(2..2 + name_len)?).ok()?;
        data = &data[2 + name_len..];
        let len = u32::from_le_bytes(data.get(..4)?.try_into().ok()?) as usize;
        let body = data.get(4..4 + len)?;
        files.insert(name.to_owned(), body.to_vec());
        data = &data[4 + len..];
    }
    Some(files)
}

fuzz_target!(|data: &[u8]| {
    let Some(files) = split(data) else { return };
    if let Ok(model) = decode_container(&files) {
        let again = encode_container(&model).expect("decoded model encodes");
        assert!(decode_container(&again).is_ok());
    }
});
