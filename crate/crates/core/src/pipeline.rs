//! Records to fitted optima to scaling laws, in one place so the CLI and the
//! bootstrap run exactly the same steps.

use serde::{Deserialize, Serialize};

use crate::curve_fit::{fit_quadratic, fit_quadratic_points, CellFit, LossCurveFit};
use crate::data::{group, sort_canonical, FamilyKey, GroupKey, RunRecord, SweepGroup};
use crate::error::Result;
use crate::scaling::{fit_power_law, HorizonPoint, OptimumPoint, PowerLawFit};

/// Outcome of fitting one sweep cell.
#[derive(Debug)]
pub struct CellOutcome {
    pub key: GroupKey,
    pub result: Result<LossCurveFit>,
}

/// Fits every sweep cell. With `average_replicates`, seed replicates at the
/// same LR are averaged first; otherwise every record is its own point.
pub fn fit_cells(records: &[RunRecord], average_replicates: bool) -> Vec<CellOutcome> {
    if average_replicates {
        return group(records)
            .iter()
            .map(|g| CellOutcome {
                key: g.key.clone(),
                result: fit_quadratic(g),
            })
            .collect();
    }
    let mut completed: Vec<RunRecord> = records
        .iter()
        .filter(|r| r.is_completed() && r.final_val_loss.is_some())
        .cloned()
        .collect();
    sort_canonical(&mut completed);
    let mut out: Vec<(GroupKey, Vec<(f64, f64)>)> = Vec::new();
    for r in &completed {
        let key = GroupKey::of(r);
        match out.last_mut() {
            Some((k, pts)) if *k == key => pts.push((r.max_lr, r.final_val_loss.unwrap_or_default())),
            _ => out.push((key, vec![(r.max_lr, r.final_val_loss.unwrap_or_default())])),
        }
    }
    out.into_iter()
        .map(|(key, pts)| CellOutcome {
            key,
            result: fit_quadratic_points(&pts),
        })
        .collect()
}

/// Successful cell fits only.
pub fn successful(cells: Vec<CellOutcome>) -> Vec<CellFit> {
    cells
        .into_iter()
        .filter_map(|c| c.result.ok().map(|fit| CellFit { key: c.key, fit }))
        .collect()
}

pub fn optimum_points(cells: &[CellFit]) -> Vec<OptimumPoint> {
    cells
        .iter()
        .map(|c| OptimumPoint {
            n_params: c.key.n_params,
            token_horizon: c.key.token_horizon,
            lr_star: c.fit.lr_star,
        })
        .collect()
}

/// Cell fits collected per model family, families in canonical order and
/// horizons ascending.
pub fn by_family(cells: &[CellFit]) -> Vec<(FamilyKey, Vec<HorizonPoint>)> {
    let mut families: Vec<(FamilyKey, Vec<HorizonPoint>)> = Vec::new();
    for cell in cells {
        let family = cell.key.family();
        let point = HorizonPoint {
            token_horizon: cell.key.token_horizon,
            lr_star: cell.fit.lr_star,
        };
        match families.iter_mut().find(|(k, _)| *k == family) {
            Some((_, pts)) => pts.push(point),
            None => families.push((family, vec![point])),
        }
    }
    families.sort_by(|a, b| a.0.canonical_cmp(&b.0));
    for (_, pts) in &mut families {
        pts.sort_by(|a, b| a.token_horizon.total_cmp(&b.token_horizon));
    }
    families
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub family: FamilyKey,
    pub label: String,
    pub fit: PowerLawFit,
}

/// Horizon power law per family. Families with fewer than two distinct
/// horizons are skipped.
pub fn family_power_laws(cells: &[CellFit]) -> Vec<FamilyFit> {
    by_family(cells)
        .into_iter()
        .filter_map(|(family, pts)| {
            fit_power_law(&pts).ok().map(|fit| FamilyFit {
                label: family.label(),
                family,
                fit,
            })
        })
        .collect()
}

/// Returns the group for `key` from a slice of groups.
pub fn find_group<'a>(groups: &'a [SweepGroup], key: &GroupKey) -> Option<&'a SweepGroup> {
    groups.iter().find(|g| g.key == *key)
}
