//! Degeneracy of the regularized intrinsic metric.

use crate::error::Result;
use crate::grid::{torus_distance, GridSpec, TorusPoint};
use crate::harness::config::Config;
use crate::harness::thresholds::THRESHOLDS as T;
use crate::metric::{degeneracy_experiment, DegeneracyConfig};

use super::{csv_from, row, streams, Check, Outcome, Table};

const SOURCE: (f64, f64) = (0.25, 0.25);
const SEPARATIONS: [f64; 4] = [0.05, 0.1, 0.2, 0.35];

fn pairs() -> Vec<(TorusPoint, TorusPoint)> {
    let x = TorusPoint::new(SOURCE.0, SOURCE.1);
    SEPARATIONS
        .iter()
        .map(|d| (x, TorusPoint::new(SOURCE.0 + d, SOURCE.1 + d / 2.0)))
        .collect()
}

pub(crate) fn metric_degeneracy(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let tree = streams(cfg, "metric-degeneracy");
    let pairs = pairs();
    let report = degeneracy_experiment(&DegeneracyConfig {
        gamma: cfg.gamma,
        grid,
        levels: cfg.levels.clone(),
        pairs: pairs.clone(),
        replicas: cfg.replicas,
        seed: tree.child(0).seed(),
    })?;
    for p in 0..pairs.len() {
        let decreasing = report.median_dn.windows(2).all(|w| w[1][p] < w[0][p]);
        out.checks.push(Check::holds(
            11,
            format!("pair {p}: median d_n strictly decreasing over levels {:?}", cfg.levels),
            decreasing,
        ));
        let first = report.median_rescaled[0][p];
        let worst = report.median_rescaled.iter().map(|m| m[p]).fold(0.0, f64::max);
        out.checks.push(Check::at_most(
            11,
            format!("pair {p}: max median d_n e^(gamma^2 n/8) / its level-{} value", cfg.levels[0]),
            worst / first,
            T.metric_rescaled_factor,
        ));
    }
    out.files.push(csv_from("metric-degeneracy.csv", |w| report.write_csv(w))?);

    let flat = degeneracy_experiment(&DegeneracyConfig {
        gamma: 0.0,
        grid,
        levels: cfg.levels.clone(),
        pairs: pairs.clone(),
        replicas: 1,
        seed: tree.child(1).seed(),
    })?;
    let mut table = Table::new("metric-degeneracy-flat.csv", &["level", "pair_id", "distance", "euclidean", "ratio"])?;
    let mut spread: f64 = 0.0;
    let mut euclid_gap: f64 = 0.0;
    for (p, (x, y)) in pairs.iter().enumerate() {
        let cx = grid.cell_center(grid.cell_of(*x).0, grid.cell_of(*x).1);
        let cy = grid.cell_center(grid.cell_of(*y).0, grid.cell_of(*y).1);
        let euclid = torus_distance([cx.x, cx.y], [cy.x, cy.y]);
        let ds: Vec<f64> = flat.median_dn.iter().map(|m| m[p]).collect();
        let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().cloned().fold(0.0, f64::max);
        spread = spread.max((hi - lo) / lo);
        for (l, d) in ds.iter().enumerate() {
            euclid_gap = euclid_gap.max((d / euclid - 1.0).abs());
            table.row(row![cfg.levels[l], p, d, euclid, d / euclid])?;
        }
    }
    out.checks.push(Check::at_most(
        11,
        "gamma = 0: relative spread of d_n across levels",
        spread,
        T.metric_level_spread,
    ));
    out.checks.push(Check::at_most(
        11,
        "gamma = 0: max |d_n / Euclidean - 1|",
        euclid_gap,
        T.metric_euclidean_tol,
    ));
    out.files.push(table.finish()?);
    out.notes.push(format!(
        "gamma = {}, N = {}, levels {:?}, {} replicas, pairs from {SOURCE:?} at separations {SEPARATIONS:?} along (2, 1)",
        cfg.gamma, cfg.grid, cfg.levels, cfg.replicas
    ));
    Ok(out)
}
