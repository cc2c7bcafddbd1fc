//! Counter-based Gaussian streams.
//!
//! Every replicate owns an independent ChaCha stream selected by
//! `set_stream(replicate)` on a generator keyed by the run seed. Draws are
//! consumed in step order, so the value used at `(seed, replicate, step, j)`
//! does not depend on thread count, chunking or control index. Controls share
//! the stream of their replicate: that is the common-random-numbers coupling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sublinear::{EmpiricalSublinearDistribution, WeightedMeasure};

/// Standard normal draws for one replicate, laid out `[step][component]`.
pub fn replicate_normals(seed: u64, replicate: usize, steps: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..steps * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Shape of random distribution pairs for metric experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceShape {
    pub dim: usize,
    pub max_measures: usize,
    pub max_atoms: usize,
    /// Atoms are drawn from a shared pool of this many points.
    pub pool: usize,
    /// Pool coordinates are uniform on `[-range, range]`.
    pub range: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            dim: 1,
            max_measures: 3,
            max_atoms: 4,
            pool: 8,
            range: 3.0,
        }
    }
}

/// Pair number `index` of the instance family keyed by `seed`. Each pair owns
/// its own stream, so pairs can be generated in any order.
pub fn random_pair(
    shape: &InstanceShape,
    seed: u64,
    index: usize,
) -> Result<(EmpiricalSublinearDistribution, EmpiricalSublinearDistribution)> {
    if shape.dim == 0 || shape.max_measures == 0 || shape.max_atoms == 0 || shape.pool == 0 {
        return Err(invalid("instance shape entries must be positive"));
    }
    if !(shape.range > 0.0 && shape.range.is_finite()) {
        return Err(invalid("instance range must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let pool: Vec<Vec<f64>> = (0..shape.pool)
        .map(|_| (0..shape.dim).map(|_| rng.random_range(-shape.range..shape.range)).collect())
        .collect();
    let mut dist = || -> Result<EmpiricalSublinearDistribution> {
        let l = rng.random_range(1..=shape.max_measures);
        let measures = (0..l)
            .map(|_| {
                let k = rng.random_range(1..=shape.max_atoms);
                let pts: Vec<Vec<f64>> = (0..k).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                WeightedMeasure::from_points(&pts, raw.iter().map(|w| w / total).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        EmpiricalSublinearDistribution::new(measures)
    };
    let f = dist()?;
    let g = dist()?;
    Ok((f, g))
}
