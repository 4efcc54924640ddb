#![no_main]

use libfuzzer_sys::fuzz_target;
use xaiseg_core::formats::{decode_attr, encode_attr};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = decode_attr(data) {
        assert_eq!(encode_attr(&map).unwrap(), data);
    }
});
