//! Plot data as `series,x,y` CSV.
//!
//! Series names, with `<cell>` a sweep-cell label such as `350m@1e11` and
//! `<family>` a model-family label such as `350m`:
//!
//! | series             | x             | y      |
//! |--------------------|---------------|--------|
//! | `loss:<cell>`      | learning rate | loss   |
//! | `loss_fit:<cell>`  | learning rate | loss   |
//! | `loss_opt:<cell>`  | LR*           | loss   |
//! | `lr_star:<family>` | tokens        | LR*    |
//! | `lr_fit:<family>`  | tokens        | LR*    |
//!
//! Fitted series have [`CURVE_SAMPLES`] points spaced evenly in log10 x over
//! the range of the raw points. All x values are raw, so plot them on a log
//! axis.

use crate::curve_fit::CellFit;
use crate::data::SweepGroup;
use crate::scaling::{LrLaw, PowerLawFit};

pub const CURVE_SAMPLES: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(move |i| {
        if i + 1 == n {
            hi
        } else {
            10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
        }
    })
}

/// Loss against LR for every cell that has both raw points and a fit.
pub fn loss_curves(groups: &[SweepGroup], fits: &[CellFit]) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for fit in fits {
        let Some(group) = groups.iter().find(|g| g.key == fit.key) else {
            continue;
        };
        let label = fit.key.label();
        rows.extend(group.points.iter().map(|p| PlotRow {
            series: format!("loss:{label}"),
            x: p.lr,
            y: p.loss,
        }));
        rows.extend(
            log_space(fit.fit.lr_min, fit.fit.lr_max, CURVE_SAMPLES).map(|lr| PlotRow {
                series: format!("loss_fit:{label}"),
                x: lr,
                y: fit.fit.loss_at(lr),
            }),
        );
        rows.push(PlotRow {
            series: format!("loss_opt:{label}"),
            x: fit.fit.lr_star,
            y: fit.fit.min_loss(),
        });
    }
    rows
}

/// LR* against token horizon per labelled family, with the fitted power law.
pub fn horizon_curves<'a>(families: impl IntoIterator<Item = (&'a str, &'a PowerLawFit)>) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for (label, fit) in families {
        let points = &fit.points;
        rows.extend(points.iter().map(|p| PlotRow {
            series: format!("lr_star:{label}"),
            x: p.token_horizon,
            y: p.lr_star,
        }));
        let lo = points.iter().map(|p| p.token_horizon).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p.token_horizon).fold(f64::NEG_INFINITY, f64::max);
        for d in log_space(lo, hi, CURVE_SAMPLES) {
            if let Ok(lr) = fit.predict_lr(d, None) {
                rows.push(PlotRow {
                    series: format!("lr_fit:{label}"),
                    x: d,
                    y: lr,
                });
            }
        }
    }
    rows
}

pub fn to_csv(rows: &[PlotRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["series", "x", "y"]).expect("in-memory write");
    for row in rows {
        writer
            .write_record([row.series.as_str(), &row.x.to_string(), &row.y.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::group;
    use crate::pipeline::{family_power_laws, fit_cells, successful};
    use crate::synth::{generate, Grid, SurfaceSpec};

    #[test]
    fn curves_cover_fitted_range() {
        let records = generate(&SurfaceSpec::default(), &Grid::default()).unwrap();
        let groups = group(&records);
        let cells = successful(fit_cells(&records, true));
        let rows = loss_curves(&groups, &cells);
        let label = cells[0].key.label();
        let fitted: Vec<&PlotRow> = rows
            .iter()
            .filter(|r| r.series == format!("loss_fit:{label}"))
            .collect();
        assert_eq!(fitted.len(), CURVE_SAMPLES);
        assert_eq!(fitted[0].x, cells[0].fit.lr_min);
        assert_eq!(fitted.last().unwrap().x, cells[0].fit.lr_max);
        assert_eq!(rows.iter().filter(|r| r.series == format!("loss:{label}")).count(), 5);

        let laws = family_power_laws(&cells);
        let rows = horizon_curves(laws.iter().map(|f| (f.label.as_str(), &f.fit)));
        assert_eq!(
            rows.iter().filter(|r| r.series.starts_with("lr_fit:")).count(),
            3 * CURVE_SAMPLES
        );
        assert_eq!(rows.iter().filter(|r| r.series.starts_with("lr_star:")).count(), 12);
        assert!(to_csv(&rows).starts_with("series,x,y\n"));
    }
}
