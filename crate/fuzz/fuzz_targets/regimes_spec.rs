#![no_main]

use libfuzzer_sys::fuzz_target;
use w2s_core::harness::{run_regimes, RegimesSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<RegimesSpec>(data) else {
        return;
    };
    // keep iterations fast; the cell cap itself is covered by unit tests
    let small = |a: &w2s_core::regimes::Axis| a.points().map(|p| p.len() <= 256).unwrap_or(true);
    if small(&spec.x) && small(&spec.y) {
        if let Ok(rows) = run_regimes(&spec) {
            assert!(!rows.is_empty());
        }
    }
});
