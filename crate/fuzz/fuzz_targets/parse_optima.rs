#![no_main]

use libfuzzer_sys::fuzz_target;
use lrscale::transfer::{evaluate_transfer, OptimaSet};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(set) = OptimaSet::from_json(text) else { return };
    let horizons: Vec<f64> = set.optima.iter().take(2).map(|p| p.token_horizon).collect();
    let _ = evaluate_transfer(&set.optima, &horizons);
});
