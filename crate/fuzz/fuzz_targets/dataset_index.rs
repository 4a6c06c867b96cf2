#![no_main]

use libfuzzer_sys::fuzz_target;
use specsense::synth::parse_index;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((header, entries)) = parse_index(text) {
        for e in &entries {
            assert!(e.truths.iter().all(|t| t.interval.within(header.fft_size as f64)));
            assert!(e.truths.windows(2).all(|w| w[0].interval.end() <= w[1].interval.start()));
        }
    }
});
