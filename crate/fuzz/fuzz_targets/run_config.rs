#![no_main]

use libfuzzer_sys::fuzz_target;
use telegraph_core::cli::RunConfig;
use telegraph_core::model::validate_model;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<RunConfig>(data) {
        let _ = validate_model(&cfg.model);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
});
