//! Field covariance, chaos mass, ball exponents and clock scaling.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::chaos::{chaos_measure, structure_exponents_of, BallSampling};
use crate::error::{invalid, Result};
use crate::fieldgen::{covariance_cumulative, periodized_covariance, Ensemble, FieldSynthesizer, Resolution};
use crate::grid::GridSpec;
use crate::harness::config::Config;
use crate::harness::thresholds::THRESHOLDS as T;
use crate::pathkit::{clock_moment_scaling, max_time_step};
use crate::stats::Accumulator;

use super::{csv_from, log_spaced, row, streams, z_score, Check, Outcome, Table};

/// Grid and level of the exact field oracle.
const ORACLE_SIZE: usize = 16;
const ORACLE_LEVEL: usize = 3;
/// Lattice offsets of the covariance checks: `0`, `h`, `4h` and `1/4`. On
/// the 16-cell grid `4h = 1/4`, so the last one is taken along the other axis.
const OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (4, 0), (0, 4)];
/// Base cell of the single-pair estimator.
const PAIR_BASE: (usize, usize) = (3, 5);

pub(crate) fn field_validate(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(ORACLE_SIZE)?;
    let n = ORACLE_LEVEL;
    let h = grid.spacing();
    let synth = FieldSynthesizer::with_resolution(grid, n, Resolution::Relaxed)?;

    let clip = (1..=n).map(|k| synth.clip_fraction(k)).fold(0.0, f64::max);
    out.checks.push(Check::at_most(1, "clipped spectral mass / trace, max over layers", clip, T.clip_fraction));

    // Cholesky oracle of the periodized covariance matrix
    let cells = grid.cells();
    let cov = DMatrix::from_fn(cells, cells, |a, b| {
        let (ai, aj) = grid.coords(a);
        let (bi, bj) = grid.coords(b);
        periodized_covariance((bi as f64 - ai as f64) * h, (bj as f64 - aj as f64) * h, n)
    });
    let chol = Cholesky::new(cov).ok_or_else(|| invalid("periodized covariance is not positive definite"))?;
    let l = chol.l();
    let oracle = &l * l.transpose();
    let implied = synth.implied_covariance(n);
    let size = grid.size();
    let mut gap: f64 = 0.0;
    for a in 0..cells {
        let (ai, aj) = grid.coords(a);
        for b in 0..cells {
            let (bi, bj) = grid.coords(b);
            let off = grid.index((bi + size - ai) % size, (bj + size - aj) % size);
            gap = gap.max((implied[off] - oracle[(a, b)]).abs());
        }
    }
    out.checks.push(Check::at_most(1, "max |FFT covariance - Cholesky oracle|", gap, T.cholesky_max_abs));

    // ensemble estimates
    let tree = streams(cfg, "field-validate");
    let replicas = cfg.replicas.max(2);
    let ensemble = Ensemble {
        synth: &synth,
        seed: tree.child(0).seed(),
        count: replicas,
    };
    let base = grid.index(PAIR_BASE.0, PAIR_BASE.1);
    let per_field: Vec<Result<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let field = synth.sample(ensemble.seed_of(r));
            let x = field.values(n)?;
            let mut v = Vec::with_capacity(2 * OFFSETS.len() + 3);
            for &(di, dj) in &OFFSETS {
                let (bi, bj) = grid.coords(base);
                v.push(x[base] * x[grid.index((bi + di) % size, (bj + dj) % size)]);
            }
            for &(di, dj) in &OFFSETS {
                let mut s = 0.0;
                for a in 0..cells {
                    let (ai, aj) = grid.coords(a);
                    s += x[a] * x[grid.index((ai + di) % size, (aj + dj) % size)];
                }
                v.push(s / cells as f64);
            }
            for (j, k) in [(1, 2), (1, 3), (2, 3)] {
                let (yj, yk) = (field.layer(j)?, field.layer(k)?);
                v.push(yj.iter().zip(yk).map(|(a, b)| a * b).sum::<f64>() / cells as f64);
            }
            Ok(v)
        })
        .collect();
    let per_field: Vec<Vec<f64>> = per_field.into_iter().collect::<Result<_>>()?;
    let acc: Vec<Accumulator> = (0..per_field[0].len())
        .map(|k| per_field.iter().map(|v| v[k]).collect())
        .collect();

    let mut table = Table::new(
        "field-validate.csv",
        &["estimator", "di", "dj", "r", "estimate", "stderr", "reference", "z"],
    )?;
    for (k, &(di, dj)) in OFFSETS.iter().enumerate() {
        let r = ((di * di + dj * dj) as f64).sqrt() * h;
        let reference = covariance_cumulative(r, n as f64)?;
        let a = &acc[k];
        let z = z_score(a.mean(), reference, a.stderr());
        table.row(row!["single_pair", di, dj, r, a.mean(), a.stderr(), reference, z])?;
        out.checks.push(Check::at_most(
            1,
            format!("covariance at r = {r}: |estimate - K_n(r)| / s.e."),
            z,
            T.field_covariance_z,
        ));
        let a = &acc[OFFSETS.len() + k];
        let reference = periodized_covariance(di as f64 * h, dj as f64 * h, n);
        let z = z_score(a.mean(), reference, a.stderr());
        table.row(row!["all_cells", di, dj, r, a.mean(), a.stderr(), reference, z])?;
        out.diagnostics.push(Check::at_most(
            None,
            format!("all-cell covariance at offset ({di},{dj}) vs periodized kernel, z"),
            z,
            T.field_covariance_z,
        ));
    }
    for (idx, (j, k)) in [(1, 2), (1, 3), (2, 3)].iter().enumerate() {
        let a = &acc[2 * OFFSETS.len() + idx];
        let z = z_score(a.mean(), 0.0, a.stderr());
        table.row(row![format!("layers_{j}_{k}"), 0, 0, 0, a.mean(), a.stderr(), 0, z])?;
        out.diagnostics.push(Check::at_most(
            None,
            format!("cross-layer covariance Y_{j} Y_{k}, z"),
            z,
            T.field_covariance_z,
        ));
    }
    out.files.push(table.finish()?);
    out.notes.push(format!(
        "oracle grid N = {ORACLE_SIZE}, level {ORACLE_LEVEL}, {replicas} fields; single-pair estimates from base cell {PAIR_BASE:?}"
    ));
    Ok(out)
}

/// Gammas of the total-mass check.
const MASS_GAMMAS: [f64; 3] = [0.5, 1.0, 1.5];
const BALL_Q: [f64; 3] = [0.5, 1.0, 1.5];
const BALL_RADII: usize = 8;
const BALL_CENTERS: usize = 64;

/// Smallest fitting radius: the cutoff scale `e^{-n}`, capped so the radii
/// span a decade, and never below four cells.
fn ball_rmin(grid: GridSpec, n: usize) -> f64 {
    (4.0 * grid.spacing()).max((-(n as f64)).exp().min(0.025))
}

pub(crate) fn chaos_exponents(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let n = cfg.level();
    let synth = FieldSynthesizer::new(grid, n)?;
    let tree = streams(cfg, "chaos-exponents");
    let ensemble = Ensemble {
        synth: &synth,
        seed: tree.child(0).seed(),
        count: cfg.replicas.max(2),
    };

    let totals: Vec<Result<Vec<f64>>> = (0..ensemble.count)
        .into_par_iter()
        .map(|r| {
            let field = synth.sample(ensemble.seed_of(r));
            MASS_GAMMAS
                .iter()
                .map(|&g| Ok(chaos_measure(&field, g, n)?.total()))
                .collect()
        })
        .collect();
    let totals: Vec<Vec<f64>> = totals.into_iter().collect::<Result<_>>()?;
    let mut mass = Table::new("chaos-mass.csv", &["gamma", "level", "mean_total_mass", "stderr", "fields"])?;
    for (k, g) in MASS_GAMMAS.iter().enumerate() {
        let acc: Accumulator = totals.iter().map(|t| t[k]).collect();
        mass.row(row![g, n, acc.mean(), acc.stderr(), ensemble.count])?;
        out.checks.push(Check::at_most(
            2,
            format!("gamma = {g}: |mean total mass - 1| / s.e."),
            z_score(acc.mean(), 1.0, acc.stderr()),
            T.mass_sigma,
        ));
    }
    out.files.push(mass.finish()?);

    let radii = log_spaced(ball_rmin(grid, n), 0.25, BALL_RADII);
    let sampling = BallSampling {
        centers_per_measure: BALL_CENTERS,
        seed: tree.child(1).seed(),
    };
    let fit = structure_exponents_of(&ensemble, cfg.gamma, n, &BALL_Q, &radii, sampling)?;
    for r in &fit.rows {
        out.checks.push(Check::at_most(
            3,
            format!("q = {}: |ball exponent {:.4} - 2 xi(q) {:.4}|", r.q, r.slope, r.theory),
            (r.slope - r.theory).abs(),
            T.ball_exponent_tol,
        ));
    }
    out.files.push(csv_from("chaos-exponents.csv", |w| fit.write_csv(w))?);
    let mut moments = Table::new("chaos-moments.csv", &["q", "r", "log_moment"])?;
    for r in &fit.rows {
        for (radius, m) in fit.radii.iter().zip(&r.log_moments) {
            moments.row(row![r.q, radius, m])?;
        }
    }
    out.files.push(moments.finish()?);
    out.notes.push(format!(
        "gamma = {}, N = {}, level {n}, {} fields, {BALL_CENTERS} ball centers per field, radii {:.4}..0.25",
        cfg.gamma, cfg.grid, ensemble.count, radii[0]
    ));
    Ok(out)
}

const CLOCK_Q: [f64; 2] = [1.0, 1.5];
const CLOCK_TIMES: usize = 7;
const CLOCK_PATHS: usize = 50;

pub(crate) fn clock_scaling(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let n = cfg.level();
    let synth = FieldSynthesizer::new(grid, n)?;
    let tree = streams(cfg, "clock-scaling");
    let ensemble = Ensemble {
        synth: &synth,
        seed: tree.child(0).seed(),
        count: cfg.replicas,
    };
    let dt = cfg.dt.unwrap_or_else(|| max_time_step(n));
    let smin = 1e-3f64.max(2.0 * dt);
    let times = log_spaced(smin, 0.1f64.max(10.0 * smin), CLOCK_TIMES);
    let fit = clock_moment_scaling(&ensemble, cfg.gamma, n, &times, &CLOCK_Q, CLOCK_PATHS, Some(dt), tree.child(1).seed())?;
    for r in &fit.rows {
        out.checks.push(Check::at_most(
            4,
            format!("q = {}: |clock exponent {:.4} - xi(q) {:.4}|", r.q, r.slope, r.theory),
            (r.slope - r.theory).abs(),
            T.clock_exponent_tol,
        ));
    }
    out.files.push(csv_from("clock-scaling.csv", |w| fit.write_csv(w))?);
    out.notes.push(format!(
        "gamma = {}, N = {}, level {n}, dt = {dt:e}, {} fields x {CLOCK_PATHS} uniform starts",
        cfg.gamma, cfg.grid, ensemble.count
    ));
    Ok(out)
}
