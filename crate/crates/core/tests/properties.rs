use std::collections::BTreeMap;

use gsde_core::gprocess::{mutual_variation, simulate_gbm, ControlGrid, ControlPolicy, VolatilityUncertainty};
use gsde_core::integral::{
    inequality_harness, ito_integral, qv_integral, time_integral, variation_integral, SimpleProcess,
};
use gsde_core::metric::d1;
use gsde_core::solver::{builtin, picard_solve, PicardOptions, REGISTRY};
use gsde_core::sublinear::check_axioms;
use gsde_core::{EmpiricalSublinearDistribution, PathEnsemble, TestFunction, TimeGrid, WeightedMeasure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dist(rng: &mut ChaCha8Rng, dim: usize) -> EmpiricalSublinearDistribution {
    let l = rng.random_range(1..=3);
    let ms = (0..l)
        .map(|_| {
            let k = rng.random_range(1..=5);
            let pts: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            WeightedMeasure::new(dim, pts, raw.iter().map(|w| w / total).collect()).unwrap()
        })
        .collect();
    EmpiricalSublinearDistribution::new(ms).unwrap()
}

fn random_test_fn(rng: &mut ChaCha8Rng, dim: usize) -> TestFunction {
    let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let slope: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    match rng.random_range(0..4) {
        0 => TestFunction::distance_to(center),
        1 => TestFunction::affine(slope, rng.random_range(-1.0..1.0)),
        2 => TestFunction::distance_to(center).scaled(-0.5),
        _ => TestFunction::affine(slope, 0.0).max(&TestFunction::distance_to(center)),
    }
}

fn ensemble(lo: f64, hi: f64, d: usize, steps: usize, reps: usize, seed: u64) -> PathEnsemble {
    let u = VolatilityUncertainty::interval(d, lo, hi).unwrap();
    let cg = ControlGrid::uniform(&u, 3, ControlPolicy::Static).unwrap();
    simulate_gbm(&cg, &TimeGrid::uniform(1.0, steps).unwrap(), reps, seed).unwrap()
}

fn random_eta(ens: &PathEnsemble, rng: &mut ChaCha8Rng) -> SimpleProcess {
    let c0 = rng.random_range(-1.0..1.0);
    let c1 = rng.random_range(-2.0..2.0);
    let c2 = rng.random_range(-1.0..1.0);
    SimpleProcess::from_causal("random", ens, move |p| {
        c0 + c1 * p.current_driver()[0].sin() + c2 * p.t() * p.current_driver()[0].abs()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn axioms_hold_exactly(seed in 0u64..1_000_000, dim in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_dist(&mut rng, dim);
        let phi = random_test_fn(&mut rng, dim);
        let psi = random_test_fn(&mut rng, dim);
        let lambda = rng.random_range(0.0..5.0);
        let rep = check_axioms(&f, &phi, &psi, lambda, &[0.0, -1.5, 3.25]).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.first_failure());
    }

    #[test]
    fn constants_translate(seed in 0u64..1_000_000, c in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_dist(&mut rng, 1);
        let phi = random_test_fn(&mut rng, 1);
        let lhs = f.evaluate(&phi.shifted(c)).unwrap();
        let rhs = f.evaluate(&phi).unwrap() + c;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn evaluation_is_sup_norm_contraction(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_dist(&mut rng, 1);
        let phi = random_test_fn(&mut rng, 1);
        let psi = random_test_fn(&mut rng, 1);
        let sup = f.support().iter().map(|x| (phi.eval(x) - psi.eval(x)).abs()).fold(0.0, f64::max);
        let gap = (f.evaluate(&phi).unwrap() - f.evaluate(&psi).unwrap()).abs();
        prop_assert!(gap <= sup + 1e-12);
    }

    #[test]
    fn builtin_coefficients_respect_declared_lipschitz(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let name = REGISTRY[rng.random_range(0..REGISTRY.len())];
        let c = builtin(name, &BTreeMap::new(), 1, 1).unwrap();
        let f = random_dist(&mut rng, 1);
        let g = random_dist(&mut rng, 1);
        let x = rng.random_range(-3.0..3.0);
        let y = rng.random_range(-3.0..3.0);
        let t = rng.random_range(0.0..1.0);
        let a = c.eval(t, &[x], &f).unwrap();
        let b = c.eval(t, &[y], &g).unwrap();
        let lhs: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum();
        let rhs = c.lipschitz() * ((x - y).abs() + d1(&f, &g).unwrap().value);
        prop_assert!(lhs <= rhs + 1e-9, "{name}: {lhs} > {rhs}");
    }
}

#[test]
fn quadratic_variation_is_monotone_and_spreads_across_controls() {
    let ens = ensemble(0.5, 1.0, 2, 20, 3, 1);
    let e0 = [1.0, 0.0];
    for s in 0..ens.scenarios() {
        for k in 0..20 {
            assert!(ens.variation(s, k + 1, &e0) >= ens.variation(s, k, &e0));
        }
    }
    let at_end: Vec<f64> = (0..ens.controls()).map(|c| ens.variation(ens.scenario(c, 0), 20, &e0)).collect();
    let spread = at_end.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - at_end.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 0.0);
    // Deterministic given the control.
    for r in 0..ens.replicates() {
        assert_eq!(ens.variation(ens.scenario(1, r), 20, &e0), ens.variation(ens.scenario(1, 0), 20, &e0));
    }
}

#[test]
fn singleton_quadratic_variation_is_exact() {
    let ens = ensemble(0.7, 0.7, 1, 10, 4, 2);
    for s in 0..ens.scenarios() {
        for k in 0..=10 {
            let t = ens.grid().t(k);
            assert!((ens.qv(s, k, 0, 0) - 0.49 * t).abs() <= 1e-15 * (1.0 + t));
        }
    }
}

#[test]
fn mutual_variation_is_bilinear() {
    let ens = ensemble(0.3, 1.2, 3, 12, 2, 3);
    let a = [0.4, -1.0, 2.0];
    let b1 = [1.0, 0.5, -0.3];
    let b2 = [-2.0, 0.1, 0.7];
    let sum: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| 3.0 * x + y).collect();
    let m1 = mutual_variation(&ens, &a, &b1).unwrap();
    let m2 = mutual_variation(&ens, &a, &b2).unwrap();
    let ms = mutual_variation(&ens, &a, &sum).unwrap();
    let swapped = mutual_variation(&ens, &b1, &a).unwrap();
    for s in 0..ens.scenarios() {
        for k in 0..=12 {
            let lin = 3.0 * m1[s][k] + m2[s][k];
            assert!((ms[s][k] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
            assert!((swapped[s][k] - m1[s][k]).abs() <= 1e-12 * (1.0 + m1[s][k].abs()));
        }
    }
}

#[test]
fn squared_increments_estimate_analytic_quadratic_variation() {
    let ens = ensemble(0.5, 1.0, 1, 200, 2000, 4);
    let n = ens.grid().steps();
    for c in 0..ens.controls() {
        let exact = ens.qv(ens.scenario(c, 0), n, 0, 0);
        let per: Vec<f64> = (0..ens.replicates())
            .map(|r| {
                let s = ens.scenario(c, r);
                (0..n).map(|k| (ens.driver(s, k + 1)[0] - ens.driver(s, k)[0]).powi(2)).sum()
            })
            .collect();
        let mean = per.iter().sum::<f64>() / per.len() as f64;
        let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (per.len() - 1) as f64;
        let se = (var / per.len() as f64).sqrt();
        assert!((mean - exact).abs() <= 4.0 * se + 1e-12, "control {c}: {mean} vs {exact}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let a = ensemble(0.5, 1.0, 2, 30, 50, 77);
    let b = ensemble(0.5, 1.0, 2, 30, 50, 77);
    assert_eq!(a.driver_data(), b.driver_data());
    let c = ensemble(0.5, 1.0, 2, 30, 50, 78);
    assert_ne!(a.driver_data(), c.driver_data());
}

#[test]
fn integrals_are_linear_in_the_integrand() {
    let ens = ensemble(0.5, 1.0, 2, 16, 20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eta = random_eta(&ens, &mut rng);
    let zeta = random_eta(&ens, &mut rng);
    let (al, be) = (1.7, -0.6);
    let mix = eta.combine(al, &zeta, be, &ens).unwrap();
    let a = [1.0, -0.5];
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
    let checks: Vec<Box<dyn Fn(&SimpleProcess) -> gsde_core::ScenarioValues>> = vec![
        Box::new(|e| ito_integral(e, &ens, &a).unwrap()),
        Box::new(|e| qv_integral(e, &ens, 0, 1).unwrap()),
        Box::new(|e| variation_integral(e, &ens, &a, &[0.0, 1.0]).unwrap()),
        Box::new(|e| time_integral(e, &ens).unwrap()),
    ];
    for f in &checks {
        let (x, y, z) = (f(&eta), f(&zeta), f(&mix));
        for i in 0..z.values().len() {
            assert!(close(z.values()[i], al * x.values()[i] + be * y.values()[i]));
        }
    }
}

#[test]
fn integral_inequalities_hold_on_random_integrands() {
    let ens = ensemble(0.5, 2.0, 1, 50, 4000, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let eta = random_eta(&ens, &mut rng);
        for p in [1.0, 2.0] {
            let rep = inequality_harness(&ens, &eta, p, &[1.0], &[1.0]).unwrap();
            let second = rep.row("second_moment").unwrap();
            assert!(second.margin >= -3.0, "{second:?}");
            let var = rep.row("variation").unwrap();
            assert!(var.margin >= -3.0, "{var:?}");
        }
    }
}

#[test]
fn implied_bdg_constant_is_finite_and_stable_under_refinement() {
    let eta = |ens: &PathEnsemble| SimpleProcess::from_causal("sin", ens, |p| p.current_driver()[0].sin() + 0.5).unwrap();
    let coarse = ensemble(0.5, 1.0, 1, 25, 4000, 10);
    let fine = ensemble(0.5, 1.0, 1, 100, 4000, 10);
    let rc = inequality_harness(&coarse, &eta(&coarse), 2.0, &[1.0], &[1.0]).unwrap();
    let rf = inequality_harness(&fine, &eta(&fine), 2.0, &[1.0], &[1.0]).unwrap();
    let (c, f) = (rc.row("bdg").unwrap().ratio, rf.row("bdg").unwrap().ratio);
    assert!(c.is_finite() && f.is_finite() && c > 0.0);
    assert!((c / f - 1.0).abs() < 0.25, "{c} vs {f}");
}

#[test]
fn picard_deltas_are_nonincreasing_after_the_first() {
    let grid = TimeGrid::uniform(0.5, 40).unwrap();
    let u = VolatilityUncertainty::interval(1, 0.5, 1.0).unwrap();
    let cg = ControlGrid::uniform(&u, 3, ControlPolicy::Static).unwrap();
    let c = builtin("mean-field-ou", &BTreeMap::new(), 1, 1).unwrap();
    let opts = PicardOptions {
        tol: 1e-9,
        ..PicardOptions::default()
    };
    let out = picard_solve(&c, &[1.0], &cg, &grid, 300, 12, &opts).unwrap();
    let deltas: Vec<f64> = out
        .trace
        .entries
        .iter()
        .filter(|e| e.k >= 1 && e.delta >= out.trace.noise_floor)
        .map(|e| e.delta)
        .collect();
    assert!(deltas.len() >= 3);
    assert!(deltas.windows(2).all(|w| w[1] <= w[0]), "{deltas:?}");
}
