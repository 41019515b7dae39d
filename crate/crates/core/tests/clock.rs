//! The clock along Brownian paths.

use liouville::fieldgen::FieldSynthesizer;
use liouville::pathkit::{brownian_path, clock, max_time_step, ClockDensity};
use liouville::stats::Accumulator;
use liouville::{GridSpec, SeedTree, TorusPoint};
use rand::Rng;

#[test]
fn gamma_zero_clock_is_time() {
    let f = FieldSynthesizer::new(GridSpec::new(64).unwrap(), 2).unwrap().sample(1);
    let dt = max_time_step(2);
    let path = brownian_path(TorusPoint::new(0.3, 0.4), 200.0 * dt, dt, 2).unwrap();
    let c = clock(&f, 0.0, 2, &path).unwrap();
    for (k, v) in c.values().iter().enumerate() {
        assert!((v - k as f64 * dt).abs() < 1e-12 * (1.0 + v));
    }
}

#[test]
fn clock_mean_from_uniform_starts_is_s_times_total_mass() {
    let grid = GridSpec::new(128).unwrap();
    let n = 3;
    let f = FieldSynthesizer::new(grid, n).unwrap().sample(21);
    let density = ClockDensity::new(&f, 1.0, n).unwrap();
    // continuous total mass by an 8x8 midpoint rule per cell
    let sub = 8;
    let fine = (grid.size() * sub) as f64;
    let total: f64 = (0..grid.size() * sub)
        .flat_map(|j| (0..grid.size() * sub).map(move |i| (i, j)))
        .map(|(i, j)| density.weight(TorusPoint::new((i as f64 + 0.5) / fine, (j as f64 + 0.5) / fine)))
        .sum::<f64>()
        / (fine * fine);
    let dt = max_time_step(n);
    let s = 80.0 * dt;
    let tree = SeedTree::new(22);
    let acc: Accumulator = (0..4000u64)
        .map(|p| {
            let mut rng = tree.child(p).rng();
            let x = TorusPoint::new(rng.random(), rng.random());
            let path = brownian_path(x, s, dt, tree.child(p).child(1).seed()).unwrap();
            clock(&f, 1.0, n, &path).unwrap().total()
        })
        .collect();
    let z = (acc.mean() - s * total).abs() / acc.stderr();
    assert!(z < 4.0, "E F(s) = {} vs s M = {}, z = {z}", acc.mean(), s * total);
}

#[test]
fn clock_is_additive_along_a_path() {
    let f = FieldSynthesizer::new(GridSpec::new(64).unwrap(), 2).unwrap().sample(4);
    let dt = max_time_step(2);
    let path = brownian_path(TorusPoint::new(0.7, 0.1), 300.0 * dt, dt, 5).unwrap();
    let whole = clock(&f, 1.0, 2, &path).unwrap();
    let k = 120;
    let tail = clock(&f, 1.0, 2, &path.tail(k).unwrap()).unwrap();
    let split = whole.values()[k] + tail.total();
    assert!((whole.total() - split).abs() < 1e-12 * whole.total());
}

#[test]
fn clock_rejects_coarse_steps() {
    let f = FieldSynthesizer::new(GridSpec::new(64).unwrap(), 2).unwrap().sample(1);
    let dt = 2.0 * max_time_step(2);
    let path = brownian_path(TorusPoint::new(0.3, 0.4), 10.0 * dt, dt, 2).unwrap();
    assert!(clock(&f, 1.0, 2, &path).is_err());
}
