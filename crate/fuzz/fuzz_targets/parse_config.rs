#![no_main]

use libfuzzer_sys::fuzz_target;
use xaiseg_cli::config::RunConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::parse(text) {
        // serializing is a fixed point after one roundtrip (NaN-safe)
        if let Ok(once) = cfg.to_toml() {
            let twice = RunConfig::parse(&once).unwrap().to_toml().unwrap();
            assert_eq!(once, twice);
        }
    }
});
