//! Martingale and scaling properties of the chaos measure.

use liouville::chaos::{chaos_measure, moment_threshold, xi};
use liouville::fieldgen::FieldSynthesizer;
use liouville::stats::Accumulator;
use liouville::GridSpec;
use proptest::prelude::*;

#[test]
fn total_mass_has_mean_one_at_every_level() {
    let synth = FieldSynthesizer::new(GridSpec::new(128).unwrap(), 3).unwrap();
    let fields: Vec<_> = (0..300).map(|s| synth.sample(1000 + s)).collect();
    for n in 1..=3 {
        let acc: Accumulator = fields.iter().map(|f| chaos_measure(f, 1.0, n).unwrap().total()).collect();
        let z = (acc.mean() - 1.0).abs() / acc.stderr();
        assert!(z < 4.0, "level {n}: mean mass {}, z = {z}", acc.mean());
    }
}

#[test]
fn martingale_increments_are_uncorrelated_with_the_past() {
    let synth = FieldSynthesizer::new(GridSpec::new(128).unwrap(), 3).unwrap();
    let acc: Accumulator = (0..300)
        .map(|s| {
            let f = synth.sample(2000 + s);
            let m2 = chaos_measure(&f, 1.0, 2).unwrap().total();
            let m3 = chaos_measure(&f, 1.0, 3).unwrap().total();
            (m3 - m2) * (m2 - 1.0)
        })
        .collect();
    let z = acc.mean().abs() / acc.stderr();
    assert!(z < 4.0, "E[(M3 - M2)(M2 - 1)] = {}, z = {z}", acc.mean());
}

#[test]
fn gamma_zero_is_lebesgue() {
    let grid = GridSpec::new(32).unwrap();
    let f = FieldSynthesizer::new(grid, 2).unwrap().sample(3);
    let m = chaos_measure(&f, 0.0, 2).unwrap();
    let h2 = grid.spacing() * grid.spacing();
    assert!(m.masses().iter().all(|&v| (v - h2).abs() < 1e-15));
}

#[test]
fn rejects_critical_coupling() {
    let f = FieldSynthesizer::new(GridSpec::new(32).unwrap(), 2).unwrap().sample(3);
    assert!(chaos_measure(&f, 2.0, 2).is_err());
}

proptest! {
    #[test]
    fn xi_is_concave_through_zero_and_one(gamma in 0.0f64..1.99, q in 0.0f64..1.0, d in 0.001f64..0.1) {
        let top = moment_threshold(gamma);
        let q = q * (top - 2.0 * d).max(0.0);
        let a = xi(q, gamma).unwrap();
        let b = xi(q + d, gamma).unwrap();
        let c = xi(q + 2.0 * d, gamma).unwrap();
        prop_assert!(a - 2.0 * b + c <= 1e-12);
        prop_assert!(xi(0.0, gamma).unwrap().abs() < 1e-15);
        prop_assert!((xi(1.0, gamma).unwrap() - 1.0).abs() < 1e-12);
    }
}
