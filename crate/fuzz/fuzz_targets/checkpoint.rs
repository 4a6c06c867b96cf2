#![no_main]

use libfuzzer_sys::fuzz_target;
use specsense::nn::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        let bytes = ckpt.encode();
        assert_eq!(Checkpoint::decode(&bytes).expect("re-decodes"), ckpt);
    }
});
