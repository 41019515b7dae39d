//! Time scaling of the clock moments `E[F(x, s)^q] ~ s^{xi(q)}`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::{moment_threshold, xi, ExponentRow};
use crate::error::{invalid, Result};
use crate::fieldgen::FieldSource;
use crate::grid::TorusPoint;
use crate::harness::seed::SeedTree;
use crate::stats::linear_fit;

use super::{max_time_step, LbmModel};

#[derive(Debug, Clone, Serialize)]
pub struct ClockScalingFit {
    pub gamma: f64,
    pub level: usize,
    /// Brownian times actually used, rounded to multiples of the step.
    pub times: Vec<f64>,
    pub rows: Vec<ExponentRow>,
    pub fields: usize,
    pub paths_per_field: usize,
}

impl ClockScalingFit {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["q", "s", "log_moment", "slope", "stderr", "r_squared", "theory"])?;
        for r in &self.rows {
            for (s, m) in self.times.iter().zip(&r.log_moments) {
                w.write_record(&[
                    r.q.to_string(),
                    s.to_string(),
                    m.to_string(),
                    r.slope.to_string(),
                    r.stderr.to_string(),
                    r.r_squared.to_string(),
                    r.theory.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits `log E[F(x, s)^q]` against `log s`, averaging over fields and
/// uniformly drawn starts with one path each.
#[allow(clippy::too_many_arguments)]
pub fn clock_moment_scaling<S: FieldSource + ?Sized>(
    fields: &S,
    gamma: f64,
    n: usize,
    times: &[f64],
    q: &[f64],
    paths_per_field: usize,
    dt: Option<f64>,
    seed: u64,
) -> Result<ClockScalingFit> {
    if fields.count() == 0 || paths_per_field == 0 {
        return Err(invalid("need at least one field and one path per field"));
    }
    let threshold = moment_threshold(gamma);
    if q.iter().any(|&qi| !(qi >= 0.0) || qi >= threshold) {
        return Err(invalid(format!("moment orders must lie in [0, {threshold})")));
    }
    let dt = dt.unwrap_or_else(|| max_time_step(n));
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < dt {
        return Err(invalid("times must increase and start at or above the step"));
    }
    if times[times.len() - 1] / times[0] < 10.0 * (1.0 - 1e-12) {
        return Err(invalid("times must span at least one decade"));
    }
    let ks: Vec<u64> = times.iter().map(|s| (s / dt).round() as u64).collect();
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times collide after rounding to the step"));
    }
    let tree = SeedTree::new(seed);
    // per field: sums of F^q, indexed [time][q]
    let partial: Vec<Result<Vec<Vec<f64>>>> = (0..fields.count())
        .into_par_iter()
        .map(|i| {
            let field = fields.field(i)?;
            let model = LbmModel::new(&field, gamma, n, dt)?;
            let stream = tree.child(i as u64);
            let mut sums = vec![vec![0.0; q.len()]; ks.len()];
            for p in 0..paths_per_field {
                let path = stream.child(p as u64);
                let mut rng = path.child(0).rng();
                let x = TorusPoint::new(rng.random(), rng.random());
                let mut walker = model.walker(x, path.child(1).seed());
                for (row, &k) in sums.iter_mut().zip(&ks) {
                    while walker.steps() < k {
                        walker.advance();
                    }
                    let c = walker.current().clock;
                    for (s, &qi) in row.iter_mut().zip(q) {
                        *s += c.powf(qi);
                    }
                }
            }
            Ok(sums)
        })
        .collect();
    let partial: Vec<Vec<Vec<f64>>> = partial.into_iter().collect::<Result<_>>()?;
    let used: Vec<f64> = ks.iter().map(|&k| k as f64 * dt).collect();
    let log_s: Vec<f64> = used.iter().map(|s| s.ln()).collect();
    let count = (fields.count() * paths_per_field) as f64;
    let mut rows = Vec::with_capacity(q.len());
    for (qi_idx, &qi) in q.iter().enumerate() {
        let log_moments: Vec<f64> = (0..ks.len())
            .map(|ti| (partial.iter().map(|p| p[ti][qi_idx]).sum::<f64>() / count).ln())
            .collect();
        let fit = linear_fit(&log_s, &log_moments).ok_or_else(|| invalid("degenerate times"))?;
        rows.push(ExponentRow {
            q: qi,
            slope: fit.slope,
            stderr: fit.slope_stderr,
            r_squared: fit.r_squared,
            residuals: fit.residuals,
            log_moments,
            theory: xi(qi, gamma)?,
        });
    }
    Ok(ClockScalingFit {
        gamma,
        level: n,
        times: used,
        rows,
        fields: fields.count(),
        paths_per_field,
    })
}
