//! Heat kernel, Chapman-Kolmogorov and Green function experiments.

use crate::chaos::chaos_measure;
use crate::error::Result;
use crate::fieldgen::{FieldSynthesizer, LayeredField};
use crate::grid::{GridFunction, GridSpec, TorusPoint};
use crate::harness::config::Config;
use crate::harness::thresholds::THRESHOLDS as T;
use crate::operators::{
    chapman_kolmogorov_check, green_apply, green_kernel_torus, heat_kernel as kernel, heat_kernel_symmetry,
    occupation_integral, wrapped_gaussian_bins, Start, TrigPolynomial,
};
use crate::pathkit::{max_time_step, LbmModel};

use super::{row, streams, z_score, Check, Outcome, Table};

/// Bins per axis of the normalization and `gamma = 0` checks.
const FINE_BINS: usize = 16;
/// Bins per axis of the symmetry and Chapman-Kolmogorov checks.
const COARSE_BINS: usize = 8;
const SYMMETRY_PAIRS: usize = 20;
/// Brownian steps per unit of `t` in the `gamma = 0` check.
const GAUSSIAN_STEPS: f64 = 25.0;
/// The `gamma = 0` paths are cheap, so they get this many times the replicas.
const GAUSSIAN_REPLICA_FACTOR: usize = 10;

fn model_for(cfg: &Config, field: &LayeredField) -> Result<LbmModel> {
    let n = cfg.level();
    match cfg.dt {
        Some(dt) => LbmModel::new(field, cfg.gamma, n, dt),
        None => LbmModel::with_max_step(field, cfg.gamma, n),
    }
}

/// Deterministic bin pairs at short range on the coarse grid.
fn symmetry_pairs(bins: usize) -> Vec<(usize, usize)> {
    let offsets = [(1, 0), (0, 1), (1, 1), (2, 1)];
    (0..SYMMETRY_PAIRS)
        .map(|k| {
            let (i, j) = ((3 * k + 1) % bins, (5 * k + 2) % bins);
            let (di, dj) = offsets[k % offsets.len()];
            (j * bins + i, ((j + dj) % bins) * bins + (i + di) % bins)
        })
        .collect()
}

pub(crate) fn heat_kernel(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let n = cfg.level();
    let t = cfg.times[0];
    let tree = streams(cfg, "heat-kernel");
    let field = FieldSynthesizer::new(grid, n)?.sample(tree.child(0).seed());
    let model = model_for(cfg, &field)?;
    let measure = chaos_measure(&field, cfg.gamma, n)?;
    let mut table = Table::new(
        "heat-kernel.csv",
        &["part", "gamma", "t", "bin", "count", "bin_mass", "density", "reference", "stderr", "z"],
    )?;

    let fine = (cfg.grid / FINE_BINS).max(1);
    let x = TorusPoint::new(0.3, 0.6);
    let k = kernel(&model, &measure, t, Start::Point(x), fine, cfg.replicas, tree.child(1).seed())?;
    for b in 0..k.bins.cells() {
        table.row(row!["kernel", cfg.gamma, t, b, k.counts[b], k.bin_mass[b], k.density[b], "", k.density_stderr(b), ""])?;
    }
    out.checks.push(Check::at_most(
        8,
        "normalization: |sum_B p_t(x, B) M(B) - 1|",
        (k.normalization() - 1.0).abs(),
        T.kernel_normalization,
    ));

    let dt = t / GAUSSIAN_STEPS;
    let flat = LbmModel::new(&field, 0.0, 1, dt.min(max_time_step(1)))?;
    let lebesgue = chaos_measure(&field, 0.0, 1)?;
    let x0 = TorusPoint::new(0.2, 0.9);
    let g = kernel(
        &flat,
        &lebesgue,
        t,
        Start::Point(x0),
        fine,
        cfg.replicas * GAUSSIAN_REPLICA_FACTOR,
        tree.child(2).seed(),
    )?;
    let exact = wrapped_gaussian_bins(g.bins, x0, t);
    let mut max_z: f64 = 0.0;
    for (b, p) in exact.iter().enumerate() {
        let reference = p / g.bin_mass[b];
        let z = z_score(g.density[b], reference, g.density_stderr(b));
        max_z = max_z.max(z);
        table.row(row!["gaussian", 0, t, b, g.counts[b], g.bin_mass[b], g.density[b], reference, g.density_stderr(b), z])?;
    }
    out.checks.push(Check::at_most(
        8,
        format!("gamma = 0: max over {} bins of |density - wrapped Gaussian| / s.e.", exact.len()),
        max_z,
        T.kernel_gaussian_z,
    ));

    let coarse = (cfg.grid / COARSE_BINS).max(1);
    let pairs = symmetry_pairs(cfg.grid / coarse);
    let sym = heat_kernel_symmetry(&model, &measure, t, &pairs, coarse, cfg.replicas, tree.child(3).seed())?;
    for r in &sym.rows {
        let z = z_score(r.forward, r.backward, r.stderr);
        table.row(row!["symmetry", cfg.gamma, t, format!("{}-{}", r.a, r.b), "", "", r.forward, r.backward, r.stderr, z])?;
    }
    out.checks.push(Check::at_most(
        8,
        format!("symmetry over {} pairs: |mean p_t(A,B) - p_t(B,A)| / joint s.e.", pairs.len()),
        z_score(sym.mean_difference, 0.0, sym.mean_stderr),
        T.kernel_symmetry_z,
    ));
    out.diagnostics.push(Check::at_most(
        None,
        "symmetry, largest single-pair z",
        sym.max_z,
        T.kernel_symmetry_z,
    ));
    out.files.push(table.finish()?);
    out.notes.push(format!(
        "gamma = {}, N = {}, level {n}, t = {t}, {} paths per kernel; gamma = 0 check with dt = t/{GAUSSIAN_STEPS} and {} paths",
        cfg.gamma,
        cfg.grid,
        cfg.replicas,
        cfg.replicas * GAUSSIAN_REPLICA_FACTOR
    ));
    Ok(out)
}

pub(crate) fn chapman(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let n = cfg.level();
    let (s, t) = (cfg.times[0], cfg.times[cfg.times.len().min(2) - 1]);
    let tree = streams(cfg, "chapman");
    let field = FieldSynthesizer::new(grid, n)?.sample(tree.child(0).seed());
    let model = model_for(cfg, &field)?;
    let measure = chaos_measure(&field, cfg.gamma, n)?;
    let coarse = (cfg.grid / COARSE_BINS).max(1);
    let x = TorusPoint::new(0.5, 0.5);
    let ck = chapman_kolmogorov_check(&model, &measure, s, t, x, coarse, cfg.replicas, tree.child(1).seed())?;
    let mut table = Table::new("chapman.csv", &["bin", "direct", "composed", "stderr", "z"])?;
    for b in 0..ck.direct.len() {
        let z = z_score(ck.direct[b], ck.composed[b], ck.stderr[b]);
        table.row(row![b, ck.direct[b], ck.composed[b], ck.stderr[b], z])?;
    }
    out.files.push(table.finish()?);
    out.checks.push(Check::at_most(
        8,
        format!("s = {s}, t = {t}: max over bins |p_(s+t) - p_s * p_t| / joint s.e."),
        ck.max_z,
        T.chapman_z,
    ));
    out.notes.push(format!(
        "gamma = {}, N = {}, level {n}, {}x{} bins, {} paths per stage",
        cfg.gamma,
        cfg.grid,
        cfg.grid / coarse,
        cfg.grid / coarse,
        cfg.replicas
    ));
    Ok(out)
}

/// Horizon of the occupation integrals; the spectral gap makes the remainder
/// negligible at `gamma = 0` (`e^{-2 pi^2 T}`).
const GREEN_HORIZON: f64 = 2.0;
const GREEN_FLAT_DT: f64 = 1e-3;

pub(crate) fn green(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let n = cfg.level();
    let tree = streams(cfg, "green");
    let table_g = green_kernel_torus(grid);
    out.checks.push(Check::at_most(
        None,
        "lattice Green kernel: max |-h^2 Lap G - (delta - h^2)|",
        table_g.laplacian_residual(),
        T.green_residual,
    ));
    let field = FieldSynthesizer::new(grid, n)?.sample(tree.child(0).seed());
    let cos = TrigPolynomial::cos_x();
    let x = TorusPoint::new(0.1, 0.3);
    let mut table = Table::new(
        "green.csv",
        &["gamma", "x", "y", "horizon", "occupation", "stderr", "two_green", "z"],
    )?;

    let flat = LbmModel::new(&field, 0.0, 1, GREEN_FLAT_DT)?;
    let lebesgue = chaos_measure(&field, 0.0, 1)?;
    let u = green_apply(&table_g, &lebesgue, &cos.on_grid(grid), 1e-9)?;
    let (occ, se) = occupation_integral(&flat, &cos, x, GREEN_HORIZON, cfg.replicas, tree.child(1).seed())?;
    let two_g = 2.0 * u.value_at(x);
    let z = z_score(occ, two_g, se);
    table.row(row![0, x.x, x.y, GREEN_HORIZON, occ, se, two_g, z])?;
    out.checks.push(Check::at_most(
        None,
        "gamma = 0: |occupation integral - 2 G f| / s.e.",
        z,
        T.green_z,
    ));

    let model = model_for(cfg, &field)?;
    let measure = chaos_measure(&field, cfg.gamma, n)?;
    let raw = cos.on_grid(grid);
    let mean = measure.mean_of(&raw)?;
    let centered = GridFunction::new(grid, raw.values().iter().map(|v| v - mean).collect())?;
    let u = green_apply(&table_g, &measure, &centered, 1e-9)?;
    let (occ, se) = occupation_integral(&model, &centered, x, GREEN_HORIZON, cfg.replicas, tree.child(2).seed())?;
    let two_g = 2.0 * u.value_at(x);
    let z = z_score(occ, two_g, se);
    table.row(row![cfg.gamma, x.x, x.y, GREEN_HORIZON, occ, se, two_g, z])?;
    out.diagnostics.push(Check::at_most(
        None,
        format!("gamma = {}: |occupation integral - 2 G f| / s.e. (finite horizon)", cfg.gamma),
        z,
        T.green_z,
    ));
    out.files.push(table.finish()?);
    out.notes.push(format!(
        "N = {}, level {n}, horizon {GREEN_HORIZON}, {} paths; G solves -h^2 Lap_h G = delta - h^2, so Brownian motion with generator Lap/2 accumulates 2 G f",
        cfg.grid, cfg.replicas
    ));
    Ok(out)
}
