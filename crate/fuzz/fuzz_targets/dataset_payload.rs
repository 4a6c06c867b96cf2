#![no_main]

use libfuzzer_sys::fuzz_target;
use specsense::synth::{decode_payload, parse_index};

/// Two spectrum-only records of 8 bins, then one with 4 baseband samples.
const PLAIN: &str = "#specsense-dataset\tversion=1\tfft_size=8\tsample_rate_hz=200000\tbaseband=0\n\
0\t1\t20\t0\t0\t1-3:bpsk\n\
1\t2\t-5\t32\t0\t-\n";
const BASEBAND: &str = "#specsense-dataset\tversion=1\tfft_size=8\tsample_rate_hz=200000\tbaseband=1\n\
0\t1\t20\t0\t4\t2-6:qpsk\n";

fuzz_target!(|data: &[u8]| {
    for index in [PLAIN, BASEBAND] {
        let (header, entries) = parse_index(index).expect("fixed index parses");
        if let Ok(records) = decode_payload(&header, &entries, data) {
            assert_eq!(records.len(), entries.len());
            for r in &records {
                assert_eq!(r.spectrum.fft_size(), header.fft_size);
                assert!(r.spectrum.bins().iter().all(|b| b.is_finite()));
                assert_eq!(r.baseband.is_some(), header.has_baseband);
            }
        }
    }
});
