use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A partition `0 = t_0 < t_1 < … < t_N = T` of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    mesh: f64,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("time grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(invalid(format!("time grid must start at 0, got {}", times[0])));
        }
        let mut mesh = 0.0f64;
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            if !(dt > 0.0) || !w[1].is_finite() {
                return Err(invalid(format!(
                    "time grid must be strictly increasing and finite ({} -> {})",
                    w[0], w[1]
                )));
            }
            mesh = mesh.max(dt);
        }
        Ok(Self { times, mesh })
    }

    /// `steps` equal steps on `[0, horizon]`. The last point is exactly `horizon`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        let mut times: Vec<f64> = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        times[steps] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of grid points (`N + 1`).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_shape_and_mesh() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.steps(), 4);
        assert_eq!(g.horizon(), 1.0);
        assert!((g.mesh() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mesh_is_largest_step() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.5, 0.6]).unwrap();
        assert!((g.mesh() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::uniform(0.0, 3).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
    }
}
