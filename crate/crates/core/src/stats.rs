//! Order-fixed reductions and sublinear Monte Carlo estimators.
//!
//! Every reduction in the crate goes through [`pairwise_sum`], whose
//! association order depends only on the number of terms. Parallel workers
//! produce per-scenario values; the sums are always formed here, so results
//! are bit-identical for any thread count.

use serde::Serialize;

const PAIRWISE_BLOCK: usize = 32;

/// Sum of `f(0), …, f(n-1)` with a fixed pairwise association order.
pub fn pairwise_sum(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    if n == 0 {
        0.0
    } else {
        rec(0, n, f)
    }
}

/// Sample mean and standard error of the mean (`sd / sqrt(n)`, unbiased
/// variance). The standard error is zero for a single sample.
pub fn mean_and_se(n: usize, f: &impl Fn(usize) -> f64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(n, f) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = pairwise_sum(n, &|i| {
        let d = f(i) - mean;
        d * d
    });
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// A sublinear expectation estimate: the largest per-control replicate mean.
///
/// The standard error is that of the attaining control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub control: usize,
}

/// Max over controls of the replicate mean of `f(control, replicate)`.
/// Ties resolve to the smallest control index.
pub fn sublinear_estimate(
    controls: usize,
    replicates: usize,
    f: impl Fn(usize, usize) -> f64,
) -> Estimate {
    let mut best = Estimate {
        value: f64::NEG_INFINITY,
        se: 0.0,
        control: 0,
    };
    for c in 0..controls {
        let (m, se) = mean_and_se(replicates, &|r| f(c, r));
        if m > best.value {
            best = Estimate {
                value: m,
                se,
                control: c,
            };
        }
    }
    best
}

/// Per-scenario scalar results of an ensemble computation.
///
/// Scenarios are stored replicate-major: index `r * controls + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioValues {
    controls: usize,
    replicates: usize,
    values: Vec<f64>,
}

impl ScenarioValues {
    pub(crate) fn new(controls: usize, replicates: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), controls * replicates);
        Self {
            controls,
            replicates,
            values,
        }
    }

    pub fn controls(&self) -> usize {
        self.controls
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn get(&self, control: usize, replicate: usize) -> f64 {
        self.values[replicate * self.controls + control]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScenarioValues {
        ScenarioValues::new(
            self.controls,
            self.replicates,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Ê-estimate: max over controls of replicate means.
    pub fn sublinear_mean(&self) -> Estimate {
        sublinear_estimate(self.controls, self.replicates, |c, r| self.get(c, r))
    }

    /// Mean and standard error for a single control.
    pub fn control_mean(&self, control: usize) -> (f64, f64) {
        mean_and_se(self.replicates, &|r| self.get(control, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let s = pairwise_sum(1000, &|i| i as f64);
        assert_eq!(s, 499_500.0);
    }

    #[test]
    fn mean_and_se_of_two_points() {
        let xs = [1.0, 3.0];
        let (m, se) = mean_and_se(2, &|i| xs[i]);
        assert_eq!(m, 2.0);
        // sample variance 2, se = sqrt(2/2)
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sublinear_estimate_takes_first_of_ties() {
        let e = sublinear_estimate(3, 2, |_, _| 1.0);
        assert_eq!(e.control, 0);
        assert_eq!(e.value, 1.0);
    }
}
