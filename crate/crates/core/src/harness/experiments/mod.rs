//! Named experiments: one per acceptance criterion group, each producing CSV
//! data and a JSON summary with pass/fail against [`THRESHOLDS`].

mod averages;
mod fields;
mod kernels;
mod lattice;
mod paths;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::harness::config::Config;
use crate::harness::seed::SeedTree;
use crate::harness::thresholds::{THRESHOLDS, VERSION};

/// Experiment names in run order.
pub const EXPERIMENTS: [&str; 12] = [
    "field-validate",
    "chaos-exponents",
    "clock-scaling",
    "revuz",
    "resolvent",
    "resolvent-modulus",
    "heat-kernel",
    "chapman",
    "green",
    "ergodic",
    "dirichlet",
    "metric-degeneracy",
];

/// Identifier of the JSON summary layout.
pub const SUMMARY_SCHEMA: &str = "liouville-lab/summary/1";

/// One comparison of a statistic against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    /// Acceptance criterion number, if the check implements one.
    pub criterion: Option<u8>,
    pub name: String,
    pub statistic: f64,
    /// `<=` or `>`.
    pub relation: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `statistic <= limit`; NaN fails.
    pub fn at_most(criterion: impl Into<Option<u8>>, name: impl Into<String>, statistic: f64, limit: f64) -> Self {
        Self {
            criterion: criterion.into(),
            name: name.into(),
            statistic,
            relation: "<=",
            limit,
            pass: statistic <= limit,
        }
    }

    /// Passes when `statistic > limit`; NaN fails.
    pub fn above(criterion: impl Into<Option<u8>>, name: impl Into<String>, statistic: f64, limit: f64) -> Self {
        Self {
            criterion: criterion.into(),
            name: name.into(),
            statistic,
            relation: ">",
            limit,
            pass: statistic > limit,
        }
    }

    /// A yes/no property, recorded as statistic 1 or 0 against limit 0.
    pub fn holds(criterion: impl Into<Option<u8>>, name: impl Into<String>, ok: bool) -> Self {
        Self::above(criterion, name, if ok { 1.0 } else { 0.0 }, 0.0)
    }
}

/// A CSV file held in memory until the report is written.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// What an experiment body returns.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    /// Gate the pass/fail verdict.
    pub checks: Vec<Check>,
    /// Reported only.
    pub diagnostics: Vec<Check>,
    pub notes: Vec<String>,
    pub files: Vec<CsvFile>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: String,
    pub config: Config,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<Check>,
    pub notes: Vec<String>,
    pub files: Vec<CsvFile>,
    pub wall_time: f64,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The JSON summary; see the README for the schema.
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "schema": SUMMARY_SCHEMA,
            "experiment": self.experiment,
            "pass": self.pass(),
            "wall_time_s": self.wall_time,
            "thresholds_version": VERSION,
            "thresholds": THRESHOLDS,
            "config": self.config,
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
            "files": self.files.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
        })
    }

    /// Writes every CSV file and `<experiment>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for f in &self.files {
            fs::write(dir.join(&f.name), &f.bytes)?;
        }
        let json = serde_json::to_vec_pretty(&self.summary())?;
        fs::write(dir.join(format!("{}.json", self.experiment)), json)?;
        Ok(())
    }
}

/// Builds a CSV file row by row.
pub(crate) struct Table {
    name: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self {
            name: name.to_string(),
            writer,
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self) -> Result<CsvFile> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))?;
        Ok(CsvFile { name: self.name, bytes })
    }
}

/// Stringifies values for a CSV row.
macro_rules! row {
    ($($v:expr),* $(,)?) => { &[$($v.to_string()),*] };
}
pub(crate) use row;

/// Fills a CSV file with a writer-based exporter.
pub(crate) fn csv_from(name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<CsvFile> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    Ok(CsvFile {
        name: name.to_string(),
        bytes,
    })
}

/// Root of an experiment's random streams; independent across experiments.
pub(crate) fn streams(cfg: &Config, experiment: &str) -> SeedTree {
    let id = EXPERIMENTS.iter().position(|e| *e == experiment).unwrap_or(EXPERIMENTS.len());
    SeedTree::new(cfg.seed).child(id as u64)
}

fn body(experiment: &str) -> Option<fn(&Config) -> Result<Outcome>> {
    Some(match experiment {
        "field-validate" => fields::field_validate,
        "chaos-exponents" => fields::chaos_exponents,
        "clock-scaling" => fields::clock_scaling,
        "revuz" => paths::revuz,
        "resolvent" => paths::resolvent,
        "resolvent-modulus" => paths::resolvent_modulus,
        "heat-kernel" => kernels::heat_kernel,
        "chapman" => kernels::chapman,
        "green" => kernels::green,
        "ergodic" => averages::ergodic,
        "dirichlet" => averages::dirichlet,
        "metric-degeneracy" => lattice::metric_degeneracy,
        _ => return None,
    })
}

/// Runs one experiment in memory, on a pool of `config.workers` threads.
pub fn evaluate(config: &Config, experiment: &str) -> Result<Report> {
    let run = body(experiment).ok_or_else(|| {
        invalid(format!(
            "unknown experiment `{experiment}`; expected one of {} or all",
            EXPERIMENTS.join(", ")
        ))
    })?;
    let wrap = |e: Error| Error::Experiment {
        experiment: experiment.to_string(),
        source: Box::new(e),
    };
    let cfg = config.for_experiment(experiment).map_err(wrap)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| wrap(invalid(e.to_string())))?;
    let start = Instant::now();
    let outcome = pool.install(|| run(&cfg)).map_err(wrap)?;
    Ok(Report {
        experiment: experiment.to_string(),
        config: cfg,
        checks: outcome.checks,
        diagnostics: outcome.diagnostics,
        notes: outcome.notes,
        files: outcome.files,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs an experiment, or all of them for `all`, and writes the reports into
/// `config.out`.
pub fn run_experiment(config: &Config, experiment: &str) -> Result<Vec<Report>> {
    let names: Vec<&str> = if experiment == "all" {
        EXPERIMENTS.to_vec()
    } else {
        vec![experiment]
    };
    fs::create_dir_all(&config.out).map_err(|e| Error::Experiment {
        experiment: experiment.to_string(),
        source: Box::new(Error::Io(e)),
    })?;
    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let report = evaluate(config, name)?;
        report.write(&config.out).map_err(|e| Error::Experiment {
            experiment: name.to_string(),
            source: Box::new(e),
        })?;
        reports.push(report);
    }
    Ok(reports)
}

/// `n` log-spaced values from `lo` to `hi`.
pub(crate) fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// `|a - b| / se`, with zero for an exact match.
pub(crate) fn z_score(a: f64, b: f64, se: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_fail_on_nan() {
        assert!(!Check::at_most(1, "x", f64::NAN, 1.0).pass);
        assert!(!Check::above(1, "x", f64::NAN, 0.0).pass);
        assert!(Check::holds(None, "x", true).pass);
        assert!(!Check::holds(None, "x", false).pass);
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let cfg = Config::default();
        assert!(evaluate(&cfg, "nope").is_err());
    }

    #[test]
    fn streams_differ_by_experiment() {
        let cfg = Config::default();
        assert_ne!(streams(&cfg, "revuz").seed(), streams(&cfg, "resolvent").seed());
    }

    #[test]
    fn log_spacing_hits_the_ends() {
        let v = log_spaced(1e-3, 1e-1, 5);
        assert!((v[0] - 1e-3).abs() < 1e-18 && (v[4] - 1e-1).abs() < 1e-15);
        assert!((v[2] - 1e-2).abs() < 1e-15);
    }
}
