//! Acceptance criteria 1-12, run on the shipped desk-scale configuration.
//! Each test prints one PASS/FAIL line for its criterion.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use liouville::harness::thresholds::{THRESHOLDS, VERSION};
use liouville::harness::{evaluate, parse_config, run_experiment, Config, Report};

fn desk() -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/desk.conf");
    parse_config(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Reports are shared between criteria that read the same experiment.
fn report(experiment: &str) -> Report {
    static CACHE: OnceLock<Mutex<HashMap<String, Report>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(experiment.to_string())
        .or_insert_with(|| evaluate(&desk(), experiment).unwrap())
        .clone()
}

fn criterion(number: u8, title: &str, experiments: &[&str]) {
    let mut ok = true;
    let mut lines = Vec::new();
    for e in experiments {
        let r = report(e);
        let checks: Vec<_> = r.checks.iter().filter(|c| c.criterion == Some(number)).collect();
        assert!(!checks.is_empty(), "{e} has no checks for criterion {number}");
        for c in checks {
            ok &= c.pass;
            lines.push(format!(
                "    [{}] {e}: {} = {:.6} {} {}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.statistic,
                c.relation,
                c.limit
            ));
        }
    }
    println!("criterion {number:2}: {} {title}", if ok { "PASS" } else { "FAIL" });
    for l in &lines {
        println!("{l}");
    }
    assert!(ok, "criterion {number} failed");
}

#[test]
fn thresholds_are_pinned() {
    let t = THRESHOLDS;
    assert_eq!(VERSION, 1);
    let pinned = [
        (t.field_covariance_z, 4.0),
        (t.cholesky_max_abs, 1e-3),
        (t.clip_fraction, 1e-6),
        (t.mass_sigma, 3.0),
        (t.ball_exponent_tol, 0.3),
        (t.clock_exponent_tol, 0.2),
        (t.revuz_z, 4.0),
        (t.resolvent_oracle_z, 3.0),
        (t.resolvent_symmetry_z, 4.0),
        (t.resolvent_identity_z, 4.0),
        (t.modulus_z, 1.6448536269514722),
        (t.kernel_gaussian_z, 4.0),
        (t.kernel_symmetry_z, 4.0),
        (t.chapman_z, 4.0),
        (t.ergodic_gamma_zero, 0.05),
        (t.ergodic_gamma, 0.10),
        (t.dirichlet_z, 4.0),
        (t.metric_rescaled_factor, 3.0),
        (t.metric_euclidean_tol, 0.083),
    ];
    for (i, (have, want)) in pinned.iter().enumerate() {
        assert_eq!(have, want, "threshold {i}");
    }
}

#[test]
fn criterion_01_field_correctness() {
    criterion(1, "field covariance and Cholesky oracle", &["field-validate"]);
}

#[test]
fn criterion_02_chaos_mass() {
    criterion(2, "chaos mass mean within 3 s.e. of 1", &["chaos-exponents"]);
}

#[test]
fn criterion_03_multifractal_exponents() {
    criterion(3, "ball exponents within 0.3 of 2 xi(q)", &["chaos-exponents"]);
}

#[test]
fn criterion_04_clock_scaling() {
    criterion(4, "clock exponents within 0.2 of xi(q)", &["clock-scaling"]);
}

#[test]
fn criterion_05_revuz() {
    criterion(5, "Revuz identity within 4 joint s.e.", &["revuz"]);
}

#[test]
fn criterion_06_resolvent() {
    criterion(6, "resolvent: f = 1, oracle, symmetry, identity", &["resolvent"]);
}

#[test]
fn criterion_07_resolvent_modulus() {
    criterion(7, "resolvent modulus alpha > 0 at 95%", &["resolvent-modulus"]);
}

#[test]
fn criterion_08_heat_kernel() {
    criterion(8, "heat kernel: normalization, Gaussian, symmetry, Chapman-Kolmogorov", &["heat-kernel", "chapman"]);
}

#[test]
fn criterion_09_ergodicity() {
    criterion(9, "ergodic averages", &["ergodic"]);
}

#[test]
fn criterion_10_dirichlet() {
    criterion(10, "Dirichlet quotient against the spectral value", &["dirichlet"]);
}

#[test]
fn criterion_11_metric_degeneracy() {
    criterion(11, "metric degeneracy", &["metric-degeneracy"]);
}

/// Small enough to run three times; every experiment still runs.
const DETERMINISM_CONFIG: &str = "\
gamma=1
grid=256
levels=3
seed=7
replicas=6
times=0.05
field-validate.replicas=64
revuz.times=0.01
resolvent-modulus.lambdas=40,80
metric-degeneracy.levels=2,3
dirichlet.replicas=200
";

fn csv_bytes(workers: usize, dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = parse_config(DETERMINISM_CONFIG).unwrap();
    cfg.force("workers", &workers.to_string()).unwrap();
    cfg.out = dir.to_path_buf();
    let reports = run_experiment(&cfg, "all").unwrap();
    let mut files = Vec::new();
    for r in &reports {
        for f in &r.files {
            let on_disk = std::fs::read(dir.join(&f.name)).unwrap();
            assert_eq!(on_disk, f.bytes);
            files.push((f.name.clone(), on_disk));
        }
        assert!(dir.join(format!("{}.json", r.experiment)).exists());
    }
    files
}

#[test]
fn criterion_12_determinism() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = csv_bytes(1, dirs[0].path());
    let b = csv_bytes(1, dirs[1].path());
    let c = csv_bytes(4, dirs[2].path());
    let same = a == b && a == c;
    let files = a.len();
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    println!(
        "criterion 12: {} byte-identical CSV outputs, twice at 1 worker and once at 4 ({files} files, {bytes} bytes)",
        if same { "PASS" } else { "FAIL" }
    );
    for ((name, x), (_, y)) in a.iter().zip(&c) {
        assert_eq!(x, y, "{name} differs between 1 and 4 workers");
    }
    assert_eq!(a, b);
}
