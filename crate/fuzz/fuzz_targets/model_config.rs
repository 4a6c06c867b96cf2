#![no_main]

use libfuzzer_sys::fuzz_target;
use specsense::frcnn::ModelConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = text.parse::<ModelConfig>() {
        cfg.validate().expect("parsed configs are valid");
        let again: ModelConfig = cfg.to_string().parse().expect("display round-trips");
        assert_eq!(again, cfg);
    }
});
