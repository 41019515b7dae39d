//! Flat `key=value` experiment configuration.
//!
//! A global key applies to every experiment; `experiment.key=value` overrides
//! it for one experiment only. Every rule is checked while parsing, and each
//! violation names the rule and the offending line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fieldgen::minimal_grid_size;
use crate::pathkit::max_time_step;

use super::experiments::EXPERIMENTS;

/// Keys accepted in a config file.
pub const KEYS: [&str; 11] = [
    "gamma", "grid", "levels", "seed", "replicas", "workers", "dt", "lambdas", "times", "eps_tail", "out",
];

/// Keys that only make sense for the whole run.
const GLOBAL_ONLY: [&str; 2] = ["workers", "out"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub gamma: f64,
    /// Cells per axis.
    pub grid: usize,
    /// Strictly increasing cutoff levels; single-level experiments use the last.
    pub levels: Vec<usize>,
    pub seed: u64,
    pub replicas: usize,
    pub workers: usize,
    /// Time step override; `None` takes the largest admissible step.
    pub dt: Option<f64>,
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    pub eps_tail: f64,
    pub out: PathBuf,
    /// Per-experiment overrides `(line, key, value)`, already validated.
    #[serde(skip)]
    overrides: BTreeMap<String, Vec<(usize, String, String)>>,
    /// Line of the last global assignment of each key.
    #[serde(skip)]
    lines: BTreeMap<String, usize>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            grid: 512,
            levels: vec![4],
            seed: 1,
            replicas: 200,
            workers: 1,
            dt: None,
            lambdas: vec![0.5, 1.0, 2.0],
            times: vec![0.05],
            eps_tail: 1e-4,
            out: PathBuf::from("liouville-out"),
            overrides: BTreeMap::new(),
            lines: BTreeMap::new(),
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| err(line, format!("{key}: cannot parse `{raw}`")))
}

fn list<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(|s| number(line, key, s.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(err(line, format!("{key}: empty list")));
    }
    Ok(items)
}

fn positive_list(line: usize, key: &str, raw: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = list(line, key, raw)?;
    if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(err(line, format!("{key}: every entry must be positive and finite")));
    }
    Ok(v)
}

impl Config {
    /// Largest configured level.
    pub fn level(&self) -> usize {
        *self.levels.last().expect("levels are never empty")
    }

    /// Experiments with overrides, in name order.
    pub fn overridden(&self) -> impl Iterator<Item = &str> {
        self.overrides.keys().map(|s| s.as_str())
    }

    /// Parses and range-checks one value.
    fn set(&mut self, line: usize, key: &str, raw: &str) -> Result<()> {
        match key {
            "gamma" => {
                let g: f64 = number(line, key, raw)?;
                if !(0.0..2.0).contains(&g) {
                    return Err(err(line, format!("gamma = {g}: gamma must satisfy 0 <= gamma < 2")));
                }
                self.gamma = g;
            }
            "grid" => {
                let n: usize = number(line, key, raw)?;
                if n < 8 || !n.is_power_of_two() {
                    return Err(err(line, format!("grid = {n}: power-of-two rule, grid must be 2^k >= 8")));
                }
                self.grid = n;
            }
            "levels" => {
                let v: Vec<usize> = list(line, key, raw)?;
                if v[0] == 0 || v.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(err(line, "levels must be positive and strictly increasing"));
                }
                self.levels = v;
            }
            "seed" => self.seed = number(line, key, raw)?,
            "replicas" => {
                self.replicas = number(line, key, raw)?;
                if self.replicas == 0 {
                    return Err(err(line, "replicas must be at least 1"));
                }
            }
            "workers" => {
                self.workers = number(line, key, raw)?;
                if self.workers == 0 {
                    return Err(err(line, "workers must be at least 1"));
                }
            }
            "dt" => {
                let dt: f64 = number(line, key, raw)?;
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(err(line, "dt must be positive"));
                }
                self.dt = Some(dt);
            }
            "lambdas" => self.lambdas = positive_list(line, key, raw)?,
            "times" => self.times = positive_list(line, key, raw)?,
            "eps_tail" => {
                let e: f64 = number(line, key, raw)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(err(line, "eps_tail must lie in (0, 1)"));
                }
                self.eps_tail = e;
            }
            "out" => {
                if raw.is_empty() {
                    return Err(err(line, "out must not be empty"));
                }
                self.out = PathBuf::from(raw);
            }
            _ => return Err(err(line, format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Resolution and time-step rules; `line_of` gives the line blamed for a key.
    fn check_rules(&self, line_of: impl Fn(&str) -> usize) -> Result<()> {
        let n = self.level();
        let minimal = minimal_grid_size(n);
        if self.grid < minimal {
            let line = line_of("grid").max(line_of("levels"));
            return Err(err(
                line,
                format!(
                    "resolution rule: grid {} is below 4 e^n for level {n}, need at least {minimal}",
                    self.grid
                ),
            ));
        }
        if let Some(dt) = self.dt {
            let max = max_time_step(n);
            if dt > max {
                let line = line_of("dt").max(line_of("levels"));
                return Err(err(
                    line,
                    format!("dt rule: dt = {dt:e} exceeds e^(-2n)/4 = {max:e} at level {n}"),
                ));
            }
        }
        Ok(())
    }

    /// The configuration one experiment sees, with its overrides applied.
    pub fn for_experiment(&self, experiment: &str) -> Result<Config> {
        let mut cfg = self.clone();
        cfg.overrides.clear();
        let mut lines = self.lines.clone();
        if let Some(list) = self.overrides.get(experiment) {
            for (line, key, raw) in list {
                cfg.set(*line, key, raw)?;
                lines.insert(key.clone(), *line);
            }
        }
        cfg.check_rules(|k| lines.get(k).copied().unwrap_or(0))?;
        cfg.lines = lines;
        Ok(cfg)
    }

    /// Forces a value for every experiment, dropping per-experiment overrides
    /// of that key. Used for command line flags.
    pub fn force(&mut self, key: &str, raw: &str) -> Result<()> {
        self.set(0, key, raw)?;
        self.lines.insert(key.to_string(), 0);
        for list in self.overrides.values_mut() {
            list.retain(|(_, k, _)| k != key);
        }
        self.check_rules(|_| 0)?;
        for name in self.overrides.keys() {
            self.for_experiment(name)?;
        }
        Ok(())
    }
}

/// Parses `key=value` lines with `#` comments into a fully validated config.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut scoped: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key=value, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(&first) = seen.get(key) {
            return Err(err(line, format!("`{key}` already set on line {first}")));
        }
        seen.insert(key.to_string(), line);
        match key.split_once('.') {
            Some((experiment, sub)) => {
                if !EXPERIMENTS.contains(&experiment) {
                    return Err(err(line, format!("unknown experiment `{experiment}` in key `{key}`")));
                }
                if !KEYS.contains(&sub) {
                    return Err(err(line, format!("unknown key `{sub}`")));
                }
                if GLOBAL_ONLY.contains(&sub) {
                    return Err(err(line, format!("`{sub}` can only be set globally")));
                }
                // range check now so the error points at this line
                Config::default().set(line, sub, value)?;
                scoped
                    .entry(experiment.to_string())
                    .or_default()
                    .push((line, sub.to_string(), value.to_string()));
            }
            None => {
                cfg.set(line, key, value)?;
                cfg.lines.insert(key.to_string(), line);
            }
        }
    }
    let lines = cfg.lines.clone();
    cfg.check_rules(|k| lines.get(k).copied().unwrap_or(0))?;
    cfg.overrides = scoped;
    for name in cfg.overrides.keys() {
        cfg.for_experiment(name)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: Error) -> (usize, String) {
        match e {
            Error::Config { line, message } => (line, message),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("gamma=0\ngrid=64\nlevels=2\nseed=1").unwrap();
        assert_eq!(c.gamma, 0.0);
        assert_eq!(c.grid, 64);
        assert_eq!(c.levels, vec![2]);
        assert_eq!(c.seed, 1);
        assert_eq!(c.replicas, Config::default().replicas);
        assert_eq!(c.lambdas, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn gamma_two_is_rejected() {
        let (line, msg) = line_of(parse_config("gamma=2.0").unwrap_err());
        assert_eq!(line, 1);
        assert!(msg.contains("gamma < 2"), "{msg}");
    }

    #[test]
    fn non_power_of_two_grid_is_rejected() {
        let (line, msg) = line_of(parse_config("# comment\n\ngrid=100").unwrap_err());
        assert_eq!(line, 3);
        assert!(msg.contains("power-of-two"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_duplicates_are_rejected() {
        let (line, msg) = line_of(parse_config("gamma=1\ngama=1").unwrap_err());
        assert_eq!(line, 2);
        assert!(msg.contains("unknown key"));
        assert_eq!(line_of(parse_config("seed=1\nseed=2").unwrap_err()).0, 2);
        assert_eq!(line_of(parse_config("nope.gamma=1").unwrap_err()).0, 1);
        assert_eq!(line_of(parse_config("revuz.workers=2").unwrap_err()).0, 1);
        assert_eq!(line_of(parse_config("no equals sign").unwrap_err()).0, 1);
    }

    #[test]
    fn cross_field_rules_name_the_rule_and_line() {
        let (line, msg) = line_of(parse_config("grid=64\nlevels=4").unwrap_err());
        assert_eq!(line, 2);
        assert!(msg.contains("resolution rule"), "{msg}");
        let (line, msg) = line_of(parse_config("dt=0.01\nlevels=2\ngrid=64").unwrap_err());
        assert_eq!(line, 2);
        assert!(msg.contains("dt rule"), "{msg}");
        let (line, msg) = line_of(parse_config("grid=64\nlevels=2\nrevuz.levels=3").unwrap_err());
        assert_eq!(line, 3);
        assert!(msg.contains("resolution rule"), "{msg}");
    }

    #[test]
    fn overrides_apply_to_one_experiment() {
        let c = parse_config("replicas=50\nrevuz.replicas=7\nrevuz.times=0.01 # t\n").unwrap();
        let r = c.for_experiment("revuz").unwrap();
        assert_eq!((r.replicas, r.times.clone()), (7, vec![0.01]));
        assert_eq!(c.for_experiment("ergodic").unwrap().replicas, 50);
    }

    #[test]
    fn forced_values_win() {
        let mut c = parse_config("revuz.replicas=7\nseed=3").unwrap();
        c.force("replicas", "9").unwrap();
        c.force("seed", "11").unwrap();
        let r = c.for_experiment("revuz").unwrap();
        assert_eq!((r.replicas, r.seed), (9, 11));
        assert!(c.force("grid", "100").is_err());
    }

    #[test]
    fn lists_and_ranges() {
        let c = parse_config("levels=2,3,4\nlambdas=40, 80\ntimes=0.04,0.02").unwrap();
        assert_eq!(c.level(), 4);
        assert_eq!(c.lambdas, vec![40.0, 80.0]);
        assert!(parse_config("levels=3,2").is_err());
        assert!(parse_config("lambdas=1,-2").is_err());
        assert!(parse_config("eps_tail=1").is_err());
        assert!(parse_config("replicas=0").is_err());
    }
}
