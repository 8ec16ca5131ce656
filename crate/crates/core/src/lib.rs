//! Learning-rate scaling across token horizons.
//!
//! Ingest LR sweeps, fit per-cell loss parabolas, fit horizon and joint
//! scaling laws, quantify their uncertainty, and transfer an optimal learning
//! rate from a short run to a long one.
//!
//! ```
//! use lrscale::scaling::{JointLaw, LrLaw};
//!
//! let law: JointLaw = "C=1.55e-3,alpha=0.23,beta=0.32".parse().unwrap();
//! let lr = law.predict_lr(1e12, Some(7e9)).unwrap();
//! assert!((lr / 1.1e-4 - 1.0).abs() < 0.02);
//! ```

pub mod curve_fit;
pub mod data;
pub mod error;
pub mod optim;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod scaling;
pub mod stats;
pub mod synth;
pub mod transfer;
pub mod uncertainty;

pub use curve_fit::{fit_quadratic, CellFit, LossCurveFit};
pub use data::{group, ingest, GroupKey, InputFormat, RunRecord, SweepGroup};
pub use error::{Error, Result};
pub use scaling::{fit_joint_law, fit_parallel_slopes, fit_power_law, JointLaw, LrLaw, PowerLaw};
pub use transfer::{audit_run, evaluate_transfer, kaplan_baseline, mup_depth_lr, rule_of_thumb};
pub use uncertainty::{bootstrap, seed_stats, BootstrapOptions, BootstrapTarget};
