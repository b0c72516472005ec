#![no_main]

use libfuzzer_sys::fuzz_target;
use lrntf::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        // Accepted configs must survive a serialize/parse cycle.
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml())
            .expect("accepted config must round-trip through TOML");
        let _ = again;
    }
});
