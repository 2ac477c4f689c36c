#![no_main]

use libfuzzer_sys::fuzz_target;
use w2s_core::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_json_str(text) {
        let back = ExperimentConfig::from_json_str(&cfg.to_json()).expect("accepted config re-parses");
        assert_eq!(back, cfg);
        for &u in &cfg.u_grid {
            let _ = cfg.w2s(u);
        }
    }
});
