#![no_main]

use libfuzzer_sys::fuzz_target;
use lrntf::synth::parse_spectral_library;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((mat, names)) = parse_spectral_library(text) {
        assert_eq!(names.len(), mat.cols());
        assert!(mat.rows() > 0);
        assert!(mat.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
