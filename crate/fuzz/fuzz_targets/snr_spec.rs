#![no_main]

use libfuzzer_sys::fuzz_target;
use specsense::synth::SnrSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<SnrSpec>() {
        let values = spec.values();
        assert!(!values.is_empty());
        assert!(values.iter().all(|v| !v.is_nan()));
        assert_eq!(spec.expand().len(), if matches!(spec, SnrSpec::Sweep { .. }) { values.len() } else { 1 });
    }
});
