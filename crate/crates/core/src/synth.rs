//! Synthetic sweeps generated from a planted joint law.
//!
//! Each `(N, D)` cell is a parabola in log10 LR centred on the planted
//! optimum, so the fitting pipeline can be checked against known constants:
//!
//! ```text
//! LR*  = C (N/N0)^-alpha (D/D0)^-beta (BS/BS0)^kappa
//! loss = L0 + a(D) (log10 LR - log10 LR*)^2 + noise,   a(D) = a0 (D/D0)^-gamma
//! ```

use serde::{Deserialize, Serialize};

use crate::data::{Parametrization, RunRecord, RunStatus, DEFAULT_BATCH_SIZE_TOKENS};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::scaling::JointLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub law: JointLaw,
    /// Quadratic coefficient in loss per squared decade at `D = D0`.
    pub curvature: f64,
    /// Flattening exponent: curvature scales as `(D/D0)^-gamma`.
    pub flattening_gamma: f64,
    pub floor_loss: f64,
    /// Standard deviation of additive Gaussian loss noise.
    pub noise_sigma: f64,
    /// Runs at or beyond this multiple of the planted optimum diverge.
    /// `None` means no run diverges.
    pub divergence_lr_multiple: Option<f64>,
    /// Exponent of the batch-size factor `(BS / BS0)^kappa`.
    pub batch_size_exponent: f64,
    pub batch_size_ref: f64,
    pub rng_seed: u64,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            law: JointLaw::new(1.55e-3, 0.23, 0.32),
            curvature: 0.05,
            flattening_gamma: 0.0,
            floor_loss: 2.5,
            noise_sigma: 0.0,
            divergence_lr_multiple: None,
            batch_size_exponent: 0.0,
            batch_size_ref: DEFAULT_BATCH_SIZE_TOKENS,
            rng_seed: 0,
        }
    }
}

impl SurfaceSpec {
    /// Planted optimum of one cell.
    pub fn optimum(&self, n_params: f64, tokens: f64, batch_size: f64) -> f64 {
        self.law.c
            * (n_params / self.law.n_ref).powf(-self.law.alpha)
            * (tokens / self.law.d_ref).powf(-self.law.beta)
            * (batch_size / self.batch_size_ref).powf(self.batch_size_exponent)
    }

    pub fn curvature_at(&self, tokens: f64) -> f64 {
        self.curvature * (tokens / self.law.d_ref).powf(-self.flattening_gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_params: Vec<f64>,
    pub token_horizons: Vec<f64>,
    /// Learning rates as multiples of each cell's planted optimum.
    pub lr_multipliers: Vec<f64>,
    pub batch_sizes: Vec<f64>,
    /// Seed replicates per learning rate.
    pub seeds: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n_params: vec![0.76e9, 1.3e9, 2.7e9],
            token_horizons: vec![25e9, 50e9, 100e9, 200e9],
            lr_multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            batch_sizes: vec![DEFAULT_BATCH_SIZE_TOKENS],
            seeds: 1,
        }
    }
}

/// Name such as `350m` or `1.3b` for a parameter count.
pub fn model_label(n_params: f64) -> String {
    if n_params >= 1e9 {
        format!("{}b", round_sig(n_params / 1e9))
    } else {
        format!("{}m", round_sig(n_params / 1e6))
    }
}

fn round_sig(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Emits one record per grid point, in grid order.
pub fn generate(spec: &SurfaceSpec, grid: &Grid) -> Result<Vec<RunRecord>> {
    let dims = [
        ("n_params", &grid.n_params),
        ("token_horizons", &grid.token_horizons),
        ("lr_multipliers", &grid.lr_multipliers),
        ("batch_sizes", &grid.batch_sizes),
    ];
    for (name, values) in dims {
        if values.is_empty() {
            return Err(Error::InvalidInput(format!("grid dimension `{name}` is empty")));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "grid dimension `{name}` has non-positive value {bad}"
            )));
        }
    }
    if grid.seeds == 0 {
        return Err(Error::InvalidInput("grid needs at least one seed".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.curvature > 0.0 && spec.floor_loss > 0.0) {
        return Err(Error::InvalidInput(
            "curvature and floor loss must be positive and noise non-negative".into(),
        ));
    }

    let mut records = Vec::new();
    for (bi, &bs) in grid.batch_sizes.iter().enumerate() {
        for (ni, &n) in grid.n_params.iter().enumerate() {
            for (di, &d) in grid.token_horizons.iter().enumerate() {
                let optimum = spec.optimum(n, d, bs);
                let curvature = spec.curvature_at(d);
                for (li, &mult) in grid.lr_multipliers.iter().enumerate() {
                    let lr = optimum * mult;
                    let diverged = spec.divergence_lr_multiple.is_some_and(|m| mult >= m);
                    for seed in 0..grid.seeds {
                        let loss = if diverged {
                            None
                        } else {
                            let mut value = spec.floor_loss + curvature * mult.log10().powi(2);
                            if spec.noise_sigma > 0.0 {
                                let mut stream = Stream::new(spec.rng_seed, cell_stream(bi, ni, di, li, seed));
                                value += spec.noise_sigma * stream.standard_normal();
                            }
                            Some(value)
                        };
                        records.push(RunRecord {
                            model_name: model_label(n),
                            n_params: n,
                            n_layers: None,
                            batch_size_tokens: bs,
                            token_horizon: d,
                            max_lr: lr,
                            final_val_loss: loss,
                            seed: seed as u64,
                            status: if diverged {
                                RunStatus::Diverged
                            } else {
                                RunStatus::Completed
                            },
                            parametrization: Parametrization::Standard,
                            unique_tokens: None,
                            architecture: None,
                        });
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Stream id for one run: 12 bits per grid index, 16 bits for the seed.
fn cell_stream(batch: usize, n: usize, d: usize, lr: usize, seed: usize) -> u64 {
    let field = |v: usize, bits: u32| (v as u64) & ((1u64 << bits) - 1);
    (field(batch, 12) << 52) | (field(n, 12) << 40) | (field(d, 12) << 28) | (field(lr, 12) << 16) | field(seed, 16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(model_label(350e6), "350m");
        assert_eq!(model_label(0.76e9), "760m");
        assert_eq!(model_label(1.3e9), "1.3b");
        assert_eq!(model_label(7e9), "7b");
    }

    #[test]
    fn divergence_is_inclusive() {
        let spec = SurfaceSpec {
            divergence_lr_multiple: Some(4.0),
            ..SurfaceSpec::default()
        };
        let records = generate(&spec, &Grid::default()).unwrap();
        let diverged: Vec<_> = records.iter().filter(|r| !r.is_completed()).collect();
        assert_eq!(diverged.len(), 12);
        assert!(diverged.iter().all(|r| r.final_val_loss.is_none()));
    }

    #[test]
    fn empty_dimension_errors() {
        let grid = Grid {
            token_horizons: vec![],
            ..Grid::default()
        };
        assert!(generate(&SurfaceSpec::default(), &grid).is_err());
    }

    #[test]
    fn noise_is_reproducible() {
        let spec = SurfaceSpec {
            noise_sigma: 2e-3,
            rng_seed: 9,
            ..SurfaceSpec::default()
        };
        let a = generate(&spec, &Grid::default()).unwrap();
        let b = generate(&spec, &Grid::default()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SurfaceSpec { rng_seed: 10, ..spec }, &Grid::default()).unwrap();
        assert_ne!(a, c);
    }
}
