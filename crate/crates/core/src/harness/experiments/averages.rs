//! Ergodic averages and the Dirichlet quotient.

use rayon::prelude::*;

use crate::chaos::chaos_measure;
use crate::error::Result;
use crate::fieldgen::{Ensemble, FieldSynthesizer};
use crate::grid::{GridSpec, TorusPoint};
use crate::harness::config::Config;
use crate::harness::thresholds::THRESHOLDS as T;
use crate::operators::{cosine_quotient_exact, dirichlet_quotient, ergodic_average, TrigPolynomial};
use crate::pathkit::{max_time_step, LbmModel};

use super::{row, streams, z_score, Check, Outcome, Table};

const HORIZON_FLAT: f64 = 100.0;
const HORIZON_CHAOS: f64 = 200.0;
const FLAT_DT: f64 = 1e-3;
/// Dyadic checkpoints per run.
const CHECKPOINTS: usize = 8;

pub(crate) fn ergodic(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let n = cfg.level();
    let tree = streams(cfg, "ergodic");
    let synth = FieldSynthesizer::new(grid, n)?;
    let ensemble = Ensemble {
        synth: &synth,
        seed: tree.child(0).seed(),
        count: cfg.replicas,
    };
    let f = TrigPolynomial::cos_x().plus(&TrigPolynomial::constant(2.0)).on_grid(grid);
    let x = TorusPoint::new(0.1, 0.2);
    let mut table = Table::new("ergodic.csv", &["gamma", "replica", "t", "average", "target"])?;

    let runs: Vec<Result<(Vec<(f64, f64)>, f64, Vec<(f64, f64)>, f64)>> = (0..ensemble.count)
        .into_par_iter()
        .map(|r| {
            let field = synth.sample(ensemble.seed_of(r));
            let stream = tree.child(1).child(r as u64);
            let flat = LbmModel::new(&field, 0.0, 1, FLAT_DT)?;
            let lebesgue = chaos_measure(&field, 0.0, 1)?;
            let a = ergodic_average(&flat, &lebesgue, &f, HORIZON_FLAT, x, CHECKPOINTS, stream.child(0).seed())?;
            let model = match cfg.dt {
                Some(dt) => LbmModel::new(&field, cfg.gamma, n, dt)?,
                None => LbmModel::with_max_step(&field, cfg.gamma, n)?,
            };
            let measure = chaos_measure(&field, cfg.gamma, n)?;
            let b = ergodic_average(&model, &measure, &f, HORIZON_CHAOS, x, CHECKPOINTS, stream.child(1).seed())?;
            Ok((a.checkpoints, a.target, b.checkpoints, b.target))
        })
        .collect();
    let mut err_flat = Vec::new();
    let mut err_chaos = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        let (a, ta, b, tb) = run?;
        for (t, v) in &a {
            table.row(row![0, r, t, v, ta])?;
        }
        for (t, v) in &b {
            table.row(row![cfg.gamma, r, t, v, tb])?;
        }
        err_flat.push(((a.last().unwrap().1 - ta) / ta).abs());
        err_chaos.push(((b.last().unwrap().1 - tb) / tb).abs());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    out.checks.push(Check::at_most(
        9,
        format!("gamma = 0, horizon {HORIZON_FLAT}: mean relative error over {} runs", err_flat.len()),
        mean(&err_flat),
        T.ergodic_gamma_zero,
    ));
    out.checks.push(Check::at_most(
        9,
        format!(
            "gamma = {}, horizon {HORIZON_CHAOS}: mean relative error over {} replicas",
            cfg.gamma,
            err_chaos.len()
        ),
        mean(&err_chaos),
        T.ergodic_gamma,
    ));
    out.diagnostics.push(Check::at_most(
        None,
        "gamma = 0: largest single-run relative error",
        err_flat.iter().cloned().fold(0.0, f64::max),
        T.ergodic_gamma_zero,
    ));
    out.files.push(table.finish()?);
    out.notes.push(
        "ergodic thresholds are calibration values: convergence holds without a known rate".to_string(),
    );
    out.notes.push(format!(
        "f = cos(2 pi x1) + 2, N = {}, level {n}, start {x:?}; each replica draws a new field and path",
        cfg.grid
    ));
    Ok(out)
}

pub(crate) fn dirichlet(cfg: &Config) -> Result<Outcome> {
    let mut out = Outcome::default();
    let grid = GridSpec::new(cfg.grid)?;
    let tree = streams(cfg, "dirichlet");
    let field = FieldSynthesizer::new(grid, 1)?.sample(tree.child(0).seed());
    let lebesgue = chaos_measure(&field, 0.0, 1)?;
    let f = TrigPolynomial::cos_x();
    let mut times = cfg.times.clone();
    times.sort_by(|a, b| b.total_cmp(a));
    let mut table = Table::new("dirichlet.csv", &["t", "quotient", "stderr", "exact", "energy", "z"])?;
    let mut estimates = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        // the endpoint at quantum time t lands on a grid node
        let dt = t / (t / max_time_step(1)).ceil();
        let model = LbmModel::new(&field, 0.0, 1, dt)?;
        let d = dirichlet_quotient(&model, &lebesgue, &f, t, cfg.replicas, tree.child(1 + k as u64).seed())?;
        let exact = cosine_quotient_exact(t);
        let z = z_score(d.quotient, exact, d.stderr);
        table.row(row![t, d.quotient, d.stderr, exact, d.energy, z])?;
        out.checks.push(Check::at_most(
            10,
            format!("gamma = 0, t = {t}: |quotient - (1 - e^(-2 pi^2 t)) / (2t)| / s.e."),
            z,
            T.dirichlet_z,
        ));
        estimates.push((t, d.quotient, d.energy));
    }
    if estimates.len() >= 2 {
        let increasing = estimates.windows(2).all(|w| w[1].1 > w[0].1);
        out.checks.push(Check::holds(
            10,
            "quotient increases as t decreases, toward energy / 2",
            increasing,
        ));
    }
    let energy = estimates[0].2;
    out.notes.push(format!(
        "energy of cos(2 pi x1) = {energy:.6} (2 pi^2); the quotient tends to energy / 2 under Brownian motion with generator Lap/2"
    ));
    out.files.push(table.finish()?);
    Ok(out)
}
