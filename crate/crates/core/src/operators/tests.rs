use super::*;
use crate::chaos::chaos_measure;
use crate::error::Error;
use crate::fieldgen::{FieldSynthesizer, LayeredField, Resolution};
use crate::grid::{GridSpec, TorusPoint};
use crate::pathkit::{max_time_step, LbmModel};
use approx::assert_relative_eq;
use std::f64::consts::PI;

fn field(size: usize, levels: usize, seed: u64) -> LayeredField {
    FieldSynthesizer::with_resolution(GridSpec::new(size).unwrap(), levels, Resolution::Relaxed)
        .unwrap()
        .sample(seed)
}

fn opts(replicas: usize, seed: u64) -> ResolventOptions {
    ResolventOptions {
        replicas,
        seed,
        ..Default::default()
    }
}

#[test]
fn resolvent_of_one_telescopes() {
    let f = field(32, 2, 1);
    let model = LbmModel::with_max_step(&f, 1.0, 2).unwrap();
    let one = GridFunction::constant(f.grid(), 1.0);
    for lambda in [2.0, 5.0] {
        let est = resolvent(&model, lambda, &one, TorusPoint::new(0.3, 0.4), opts(8, 3)).unwrap();
        assert!((est.value - 1.0 / lambda).abs() <= est.tail_bound);
        assert!(est.value <= 1.0 / lambda + est.tail_bound);
        assert_relative_eq!(est.tail_bound, 1e-4 / lambda);
    }
}

#[test]
fn resolvent_is_positive_and_contracting() {
    let f = field(32, 2, 2);
    let model = LbmModel::with_max_step(&f, 1.5, 2).unwrap();
    let g = GridFunction::from_fn(f.grid(), |p| (3.0 * p.x).sin().abs() + 0.1 * p.y);
    let samples =
        resolvent::paired_samples(&model, 3.0, &[&g], TorusPoint::new(0.7, 0.2), opts(16, 5)).unwrap();
    assert!(samples.iter().all(|s| s[0] >= 0.0));
    let est = resolvent(&model, 3.0, &g, TorusPoint::new(0.7, 0.2), opts(16, 5)).unwrap();
    assert!(est.value.abs() <= g.sup_norm() / 3.0 + est.tail_bound);
}

#[test]
fn step_budget_reports_the_clock() {
    let f = field(32, 2, 3);
    let model = LbmModel::with_max_step(&f, 1.0, 2).unwrap();
    let one = GridFunction::constant(f.grid(), 1.0);
    let o = ResolventOptions {
        max_steps: 10,
        ..opts(4, 1)
    };
    match resolvent(&model, 0.5, &one, TorusPoint::new(0.5, 0.5), o) {
        Err(Error::StepBudget { steps, discount, .. }) => {
            assert_eq!(steps, 10);
            assert!(discount > 1e-4);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn gamma_zero_resolvent_matches_spectrum() {
    let f = field(16, 1, 4);
    let model = LbmModel::new(&f, 0.0, 1, 2e-4).unwrap();
    let cos = TrigPolynomial::cos_x();
    let x = TorusPoint::new(0.1, 0.6);
    let lambda = 10.0;
    let est = resolvent(&model, lambda, &cos, x, opts(400, 9)).unwrap();
    let exact = cos.resolvent(lambda, x);
    assert!((est.value - exact).abs() < 3.0 * est.stderr, "{} vs {exact} ({})", est.value, est.stderr);
}

#[test]
fn modulus_guards() {
    let f = field(16, 1, 5);
    let model = LbmModel::new(&f, 0.0, 1, 1e-3).unwrap();
    let one = GridFunction::constant(f.grid(), 1.0);
    let pairs: Vec<_> = [0.01, 0.03, 0.1, 0.2]
        .iter()
        .map(|d| (TorusPoint::new(0.25 - d / 2.0, 0.5), TorusPoint::new(0.25 + d / 2.0, 0.5)))
        .collect();
    assert!(matches!(
        resolvent_modulus(&model, 20.0, &one, &pairs, opts(8, 1)),
        Err(Error::InsufficientSignal { .. })
    ));
    assert!(resolvent_modulus(&model, 20.0, &one, &pairs[1..3], opts(8, 1)).is_err());
}

#[test]
fn gamma_zero_modulus_is_lipschitz() {
    let f = field(16, 1, 6);
    let model = LbmModel::new(&f, 0.0, 1, 1e-3).unwrap();
    let cos = TrigPolynomial::cos_x();
    let pairs: Vec<_> = [0.01, 0.02, 0.04, 0.08, 0.16]
        .iter()
        .map(|d| (TorusPoint::new(0.25 - d / 2.0, 0.5), TorusPoint::new(0.25 + d / 2.0, 0.5)))
        .collect();
    let fit = resolvent_modulus(&model, 20.0, &cos, &pairs, opts(64, 2)).unwrap();
    assert!((0.8..=1.2).contains(&fit.alpha), "{fit:?}");
}

#[test]
fn kernel_normalizes_exactly() {
    let f = field(64, 2, 7);
    let model = LbmModel::with_max_step(&f, 1.0, 2).unwrap();
    let m = chaos_measure(&f, 1.0, 2).unwrap();
    let k = heat_kernel(&model, &m, 0.02, Start::Point(TorusPoint::new(0.5, 0.5)), 8, 500, 1).unwrap();
    assert_relative_eq!(k.normalization(), 1.0, epsilon = 1e-12);
    assert!(k.density.iter().all(|d| *d >= 0.0));
    assert!(k.flagged.is_empty());
    let from_cell = heat_kernel(&model, &m, 0.02, Start::Cell(3), 8, 300, 2).unwrap();
    assert_relative_eq!(from_cell.normalization(), 1.0, epsilon = 1e-12);
}

#[test]
fn wrapped_gaussian_bins_sum_to_one() {
    let bins = GridSpec::coarse(8).unwrap();
    let p = wrapped_gaussian_bins(bins, TorusPoint::new(0.05, 0.93), 0.3);
    assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    assert!(p.iter().all(|v| *v > 0.0));
}

#[test]
fn gamma_zero_kernel_matches_wrapped_gaussian() {
    let f = field(64, 1, 8);
    let t = 0.05;
    let model = LbmModel::new(&f, 0.0, 1, t / 25.0).unwrap();
    let m = chaos_measure(&f, 0.0, 1).unwrap();
    let x = TorusPoint::new(0.2, 0.9);
    let k = heat_kernel(&model, &m, t, Start::Point(x), 16, 20_000, 3).unwrap();
    let exact = wrapped_gaussian_bins(k.bins, x, t);
    for (b, p) in exact.iter().enumerate() {
        let z = (k.density[b] - p / k.bin_mass[b]).abs() / k.density_stderr(b);
        assert!(z < 4.0, "bin {b}: z = {z}");
    }
}

#[test]
fn ergodic_average_of_a_constant() {
    let f = field(32, 2, 9);
    let model = LbmModel::with_max_step(&f, 1.0, 2).unwrap();
    let m = chaos_measure(&f, 1.0, 2).unwrap();
    let c = GridFunction::constant(f.grid(), 2.5);
    let run = ergodic_average(&model, &m, &c, 2.0, TorusPoint::new(0.1, 0.1), 6, 4).unwrap();
    assert_eq!(run.checkpoints.len(), 6);
    assert_relative_eq!(run.target, 2.5, max_relative = 1e-12);
    for (i, (t, avg)) in run.checkpoints.iter().enumerate() {
        assert_relative_eq!(*t, 2.0 / 2f64.powi(5 - i as i32), max_relative = 1e-12);
        assert_relative_eq!(*avg, 2.5, max_relative = 1e-9);
    }
}

#[test]
fn dirichlet_quotient_of_constant_vanishes() {
    let f = field(32, 2, 10);
    let model = LbmModel::with_max_step(&f, 1.0, 2).unwrap();
    let m = chaos_measure(&f, 1.0, 2).unwrap();
    let d = dirichlet_quotient(&model, &m, &TrigPolynomial::constant(1.3), 0.01, 50, 1).unwrap();
    assert_eq!(d.quotient, 0.0);
    assert_eq!(d.energy, 0.0);
}

#[test]
fn gamma_zero_dirichlet_quotient_matches_spectrum() {
    let f = field(32, 1, 11);
    let t = 0.02;
    let model = LbmModel::new(&f, 0.0, 1, t).unwrap();
    let m = chaos_measure(&f, 0.0, 1).unwrap();
    let d = dirichlet_quotient(&model, &m, &TrigPolynomial::cos_x(), t, 20_000, 2).unwrap();
    assert_relative_eq!(d.energy, 2.0 * PI * PI, max_relative = 1e-12);
    let exact = cosine_quotient_exact(t);
    assert!((d.quotient - exact).abs() < 4.0 * d.stderr, "{d:?} vs {exact}");
}

#[test]
fn symmetry_report_is_paired() {
    let f = field(32, 2, 12);
    let model = LbmModel::with_max_step(&f, 1.0, 2).unwrap();
    let a = TrigPolynomial::cos_x();
    // f = g makes the two sides identical replica by replica
    let r = resolvent_symmetry(&model, 5.0, &a, &a, opts(20, 3)).unwrap();
    assert_eq!(r.difference, 0.0);
    assert_eq!(r.lhs, r.rhs);
}

#[test]
fn max_step_is_the_level_rule() {
    assert_relative_eq!(max_time_step(4), (-8.0f64).exp() / 4.0);
}
