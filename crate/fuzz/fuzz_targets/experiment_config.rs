//! Config decoding must never panic; decoded configs must re-serialize
//! and re-parse, and epsilon grids must expand or fail cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = serde_json::from_str::<epkit::io::ExperimentConfig>(text) else {
        return;
    };
    if let epkit::io::ExperimentConfig::Perturb { epsilons, .. } = &config {
        let _ = epsilons.values();
    }
    let serialized = serde_json::to_string(&config).expect("decoded configs serialize");
    serde_json::from_str::<epkit::io::ExperimentConfig>(&serialized)
        .expect("serialized configs reparse");
});
