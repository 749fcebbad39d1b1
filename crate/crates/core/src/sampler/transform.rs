//! Monotone map `T` from aggregated feature values into `[0, 1]`.
//!
//! Both modes build the piecewise-linear interpolant through the points
//! `(g_k, W_k)`, where `g_k` are the sorted distinct `G`-values of the training
//! set and `W_k` is the share of total weight carried by instances with
//! `G <= g_k`. In `cgf` mode an instance weighs its gradient norm, in `cdf`
//! mode every instance weighs 1. Queries left of the first knot return `W_1`,
//! queries right of the last return 1.

use serde::{Deserialize, Serialize};

use super::params::TransformMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformTable {
    mode: TransformMode,
    knots: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TransformTable {
    pub fn build(mode: TransformMode, g_values: &[f64], grad_norms: &[f64]) -> Result<Self> {
        let n = g_values.len();
        if n == 0 {
            return Err(Error::Empty("G values"));
        }
        if g_values.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("G values must be finite"));
        }
        let weights: Vec<f64> = match mode {
            TransformMode::Cdf => vec![1.0; n],
            TransformMode::Cgf => {
                if grad_norms.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: grad_norms.len(),
                    });
                }
                if grad_norms.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return Err(Error::invalid(
                        "gradient norms must be finite and non-negative",
                    ));
                }
                grad_norms.to_vec()
            }
        };
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroGradientMass);
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| g_values[a].total_cmp(&g_values[b]));
        let mut knots: Vec<f64> = Vec::new();
        let mut cumulative: Vec<f64> = Vec::new();
        let mut running = 0.0;
        for &i in &order {
            running += weights[i];
            if knots.last() == Some(&g_values[i]) {
                *cumulative.last_mut().expect("paired with knots") = running / total;
            } else {
                knots.push(g_values[i]);
                cumulative.push(running / total);
            }
        }
        *cumulative.last_mut().expect("n >= 1") = 1.0;
        Ok(TransformTable {
            mode,
            knots,
            cumulative,
        })
    }

    pub fn mode(&self) -> TransformMode {
        self.mode
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn eval(&self, u: f64) -> f64 {
        let last = self.knots.len() - 1;
        if u <= self.knots[0] {
            return self.cumulative[0];
        }
        if u >= self.knots[last] {
            return self.cumulative[last];
        }
        let j = self.knots.partition_point(|&x| x <= u);
        let (x0, x1) = (self.knots[j - 1], self.knots[j]);
        let (y0, y1) = (self.cumulative[j - 1], self.cumulative[j]);
        (y0 + (u - x0) / (x1 - x0) * (y1 - y0)).clamp(0.0, 1.0)
    }

    /// Largest slope of the interpolant (0 for a single knot).
    pub fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.cumulative.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_instance_is_constant_one() {
        let t = TransformTable::build(TransformMode::Cgf, &[0.3], &[2.0]).unwrap();
        for u in [-5.0, 0.3, 7.0] {
            assert_eq!(t.eval(u), 1.0);
        }
        assert_eq!(t.max_slope(), 0.0);
    }

    #[test]
    fn all_tied_is_constant_one() {
        let t = TransformTable::build(TransformMode::Cdf, &[0.0; 5], &[]).unwrap();
        assert_eq!(t.eval(0.0), 1.0);
        assert_eq!(t.knots().len(), 1);
    }

    #[test]
    fn equal_gradients_reduce_to_cdf() {
        let g = [0.4, -0.2, 0.9, 0.1, 0.4, 0.55];
        let cgf = TransformTable::build(TransformMode::Cgf, &g, &[0.7; 6]).unwrap();
        let cdf = TransformTable::build(TransformMode::Cdf, &g, &[]).unwrap();
        for k in 0..=200 {
            let u = -0.5 + 2.0 * k as f64 / 200.0;
            assert!((cgf.eval(u) - cdf.eval(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_of_gradient() {
        // oracle: cumulative share at each instance, computed by hand
        let g = [0.1, 0.5, 0.9];
        let t = TransformTable::build(TransformMode::Cgf, &g, &[0.0, 3.0, 0.0]).unwrap();
        assert_eq!(t.eval(0.1), 0.0);
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(0.9), 1.0);
        assert!((t.eval(0.3) - 0.5).abs() < 1e-12);
        assert!((t.max_slope() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn cdf_knots_count_ties() {
        let t = TransformTable::build(TransformMode::Cdf, &[2.0, 1.0, 2.0, 3.0], &[]).unwrap();
        assert_eq!(t.knots(), &[1.0, 2.0, 3.0]);
        assert_eq!(t.cumulative(), &[0.25, 0.75, 1.0]);
    }

    #[test]
    fn cgf_rejects_zero_mass() {
        assert!(matches!(
            TransformTable::build(TransformMode::Cgf, &[0.1, 0.2], &[0.0, 0.0]),
            Err(Error::ZeroGradientMass)
        ));
        assert!(TransformTable::build(TransformMode::Cgf, &[0.1, 0.2], &[1.0]).is_err());
        assert!(TransformTable::build(TransformMode::Cdf, &[], &[]).is_err());
    }
}
