use gsde_core::metric::{d1, d1_bruteforce, d1t, dr, wasserstein1_1d};
use gsde_core::{DistributionProcess, EmpiricalSublinearDistribution, TestFunction, TimeGrid, WeightedMeasure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, pool: &[f64], max_atoms: usize) -> WeightedMeasure {
    let k = rng.random_range(1..=max_atoms);
    let pts: Vec<f64> = (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    WeightedMeasure::new(1, pts, raw.iter().map(|w| w / total).collect()).unwrap()
}

fn random_dist(rng: &mut ChaCha8Rng, pool: &[f64]) -> EmpiricalSublinearDistribution {
    let l = rng.random_range(1..=3);
    EmpiricalSublinearDistribution::new((0..l).map(|_| random_measure(rng, pool, 4)).collect()).unwrap()
}

fn random_pair(seed: u64) -> (EmpiricalSublinearDistribution, EmpiricalSublinearDistribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool_size = rng.random_range(2..=8);
    let pool: Vec<f64> = (0..pool_size).map(|_| rng.random_range(-3.0..3.0)).collect();
    (random_dist(&mut rng, &pool), random_dist(&mut rng, &pool))
}

#[test]
fn lp_matches_vertex_oracle_on_random_instances() {
    for seed in 0..300 {
        let (f, g) = random_pair(seed);
        let lp = d1(&f, &g).unwrap().value;
        let bf = d1_bruteforce(&f, &g).unwrap();
        assert!((lp - bf).abs() <= 1e-9, "seed {seed}: lp {lp} oracle {bf}");
    }
}

#[test]
fn witness_is_one_lipschitz_and_attains_value() {
    for seed in 1000..1100 {
        let (f, g) = random_pair(seed);
        let r = d1(&f, &g).unwrap();
        let pts: Vec<f64> = r.support.iter().map(|p| p[0]).collect();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert!((r.witness[i] - r.witness[j]).abs() <= (pts[i] - pts[j]).abs() + 1e-9);
            }
        }
        let interp = move |x: &[f64]| {
            let k = pts.iter().position(|p| *p == x[0]).unwrap();
            r.witness[k]
        };
        let phi = TestFunction::new("witness", 1.0, Some(1), interp);
        let gap = (f.evaluate(&phi).unwrap() - g.evaluate(&phi).unwrap()).abs();
        assert!((gap - r.value).abs() <= 1e-9);
    }
}

#[test]
fn two_dimensional_lp_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..25 {
        let pool: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let dist = |rng: &mut ChaCha8Rng| {
            let l = rng.random_range(1..=2);
            let ms = (0..l)
                .map(|_| {
                    let k = rng.random_range(1..=2);
                    let pts: Vec<Vec<f64>> = (0..k).map(|_| pool[rng.random_range(0..4)].clone()).collect();
                    WeightedMeasure::from_points(&pts, vec![1.0 / k as f64; k]).unwrap()
                })
                .collect();
            EmpiricalSublinearDistribution::new(ms).unwrap()
        };
        let f = dist(&mut rng);
        let g = dist(&mut rng);
        let lp = d1(&f, &g).unwrap().value;
        let bf = d1_bruteforce(&f, &g).unwrap();
        assert!((lp - bf).abs() <= 1e-9, "lp {lp} oracle {bf}");
    }
}

#[test]
fn large_two_dimensional_support_uses_lazy_rows() {
    // 60 support points: above the all-pairs threshold. Compare with a
    // single-measure pair whose value is known: a translate by (0.3, 0.4).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let shifted: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 0.3, p[1] + 0.4]).collect();
    let f = EmpiricalSublinearDistribution::single(WeightedMeasure::from_points(&pts, vec![1.0 / 30.0; 30]).unwrap());
    let g = EmpiricalSublinearDistribution::single(WeightedMeasure::from_points(&shifted, vec![1.0 / 30.0; 30]).unwrap());
    // Translation by h costs exactly |h| in W1.
    assert!((d1(&f, &g).unwrap().value - 0.5).abs() <= 1e-9);
}

#[test]
fn time_indexed_distance_records_argmax() {
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let a = EmpiricalSublinearDistribution::diracs_1d(&[0.0, 2.0]).unwrap();
    let b = EmpiricalSublinearDistribution::diracs_1d(&[1.0]).unwrap();
    let fp = DistributionProcess::constant(grid.clone(), a.clone());
    let gp = DistributionProcess::constant(grid.clone(), b);
    assert!((d1t(&fp, &gp, None).unwrap().value - 1.0).abs() < 1e-12);
    assert_eq!(d1t(&fp, &fp, None).unwrap().value, 0.0);

    let mut entries = vec![a.clone(); 5];
    entries[4] = EmpiricalSublinearDistribution::diracs_1d(&[3.0]).unwrap();
    let hp = DistributionProcess::new(grid.clone(), entries).unwrap();
    let base = DistributionProcess::constant(grid.clone(), EmpiricalSublinearDistribution::diracs_1d(&[-1.0]).unwrap());
    let mut first = vec![EmpiricalSublinearDistribution::diracs_1d(&[-1.0]).unwrap(); 5];
    first[4] = EmpiricalSublinearDistribution::diracs_1d(&[3.0]).unwrap();
    let fp2 = DistributionProcess::new(grid.clone(), first).unwrap();
    let r = d1t(&fp2, &base, None).unwrap();
    assert!((r.value - 4.0).abs() < 1e-12);
    assert_eq!(r.time_index, Some(4));
    assert!(d1t(&fp2, &base, Some(3)).unwrap().value < 1e-12);
    assert!(d1t(&hp, &base, Some(5)).is_err());

    let other = DistributionProcess::constant(TimeGrid::uniform(2.0, 4).unwrap(), a);
    assert!(d1t(&fp, &other, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_triangle(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = random_dist(&mut rng, &pool);
        let b = random_dist(&mut rng, &pool);
        let c = random_dist(&mut rng, &pool);
        let ab = d1(&a, &b).unwrap().value;
        let ba = d1(&b, &a).unwrap().value;
        let bc = d1(&b, &c).unwrap().value;
        let ac = d1(&a, &c).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(d1(&a, &a).unwrap().value <= 1e-9);
    }

    #[test]
    fn scaling_is_one_multiplication(seed in 0u64..1_000_000, r in prop::sample::select(vec![0.5, 1.0, 2.0, 10.0])) {
        let (f, g) = random_pair(seed);
        prop_assert_eq!(dr(&f, &g, r).unwrap(), r * d1(&f, &g).unwrap().value);
    }

    #[test]
    fn single_measure_equals_wasserstein(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mu = random_measure(&mut rng, &pool, 6);
        let pool: Vec<f64> = (0..10).map(|_| rng.random_range(-5.0..5.0)).collect();
        let nu = random_measure(&mut rng, &pool, 6);
        let lp = d1(&EmpiricalSublinearDistribution::single(mu.clone()), &EmpiricalSublinearDistribution::single(nu.clone())).unwrap().value;
        prop_assert!((lp - wasserstein1_1d(&mu, &nu).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn distance_to_origin_is_mean_abs(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool: Vec<f64> = (0..8).map(|_| rng.random_range(-4.0..4.0)).collect();
        let f = random_dist(&mut rng, &pool);
        let origin = EmpiricalSublinearDistribution::dirac(vec![0.0]).unwrap();
        let lhs = d1(&f, &origin).unwrap().value;
        let rhs = f.evaluate(&TestFunction::norm()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9);
    }

    #[test]
    fn converging_supports_are_cauchy(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dir: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at = |h: f64| EmpiricalSublinearDistribution::diracs_1d(
            &base.iter().zip(&dir).map(|(b, d)| b + h * d).collect::<Vec<_>>()).unwrap();
        let limit = at(0.0);
        let seq: Vec<_> = (1..=6).map(|k| at(2f64.powi(-k))).collect();
        let to_limit: Vec<f64> = seq.iter().map(|s| d1(s, &limit).unwrap().value).collect();
        for (k, d) in to_limit.iter().enumerate() {
            prop_assert!(*d <= 2f64.powi(-(k as i32) - 1) + 1e-12);
        }
        for k in 1..seq.len() {
            prop_assert!(d1(&seq[k], &seq[k - 1]).unwrap().value <= 2f64.powi(-(k as i32)) + 1e-12);
        }
    }
}
