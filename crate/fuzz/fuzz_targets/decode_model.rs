#![no_main]

use libfuzzer_sys::fuzz_target;
use xaiseg_core::nn::{decode_model, encode_model};

fuzz_target!(|data: &[u8]| {
    // the JSON header admits spelling variants, so compare canonical encodings
    if let Ok(net) = decode_model(data) {
        let once = encode_model(&net);
        assert_eq!(encode_model(&decode_model(&once).unwrap()), once);
    }
});
