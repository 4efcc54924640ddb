#![no_main]

use libfuzzer_sys::fuzz_target;
use xaiseg_core::formats::{decode_pgm, encode_pgm};

fuzz_target!(|data: &[u8]| {
    // headers may be written differently; the decoded image must survive a roundtrip
    if let Ok(img) = decode_pgm(data) {
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }
});
