//! Sigmoid calibration of decision values, P(y=1 | f) = 1 / (1 + exp(A f + B)).
//!
//! Fitting minimizes the cross-entropy against smoothed targets
//! t+ = (N+ + 1)/(N+ + 2) and t- = 1/(N- + 2) with a damped Newton method.

use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibration {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibration {
    /// Numerically stable evaluation of the sigmoid at decision value `f`.
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlattOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub min_step: f64,
}

impl Default for PlattOptions {
    fn default() -> Self {
        PlattOptions { max_iterations: 100, gradient_tolerance: 1e-8, min_step: 1e-10 }
    }
}

fn nll(f: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    f.iter()
        .zip(t)
        .map(|(&fi, &ti)| {
            let z = fi * a + b;
            if z >= 0.0 {
                ti * z + (-z).exp().ln_1p()
            } else {
                (ti - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// Gradient and Hessian of the negative log-likelihood at (a, b).
fn derivatives(f: &[f64], t: &[f64], a: f64, b: f64) -> ([f64; 2], [f64; 3]) {
    let (mut g1, mut g2) = (0.0, 0.0);
    let (mut h11, mut h22, mut h21) = (1e-12, 1e-12, 0.0);
    for (&fi, &ti) in f.iter().zip(t) {
        let z = fi * a + b;
        let (p, q) = if z >= 0.0 {
            let e = (-z).exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        } else {
            let e = z.exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        };
        let d2 = p * q;
        h11 += fi * fi * d2;
        h22 += d2;
        h21 += fi * d2;
        let d1 = ti - p;
        g1 += fi * d1;
        g2 += d1;
    }
    ([g1, g2], [h11, h22, h21])
}

pub fn fit_platt(decision_values: &[f64], labels: &[bool]) -> Result<PlattCalibration, LearnError> {
    fit_platt_with(decision_values, labels, PlattOptions::default())
}

pub fn fit_platt_with(
    decision_values: &[f64],
    labels: &[bool],
    opts: PlattOptions,
) -> Result<PlattCalibration, LearnError> {
    if decision_values.len() != labels.len() {
        return Err(LearnError::DimensionMismatch { expected: labels.len(), got: decision_values.len() });
    }
    if decision_values.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite);
    }
    let prior1 = labels.iter().filter(|&&y| y).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    if prior1 == 0.0 || prior0 == 0.0 {
        return Err(LearnError::DegenerateLabels);
    }
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels.iter().map(|&y| if y { hi } else { lo }).collect();
    let f = decision_values;

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = nll(f, &t, a, b);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let (g, h) = derivatives(f, &t, a, b);
        grad_norm = g[0].hypot(g[1]);
        if grad_norm <= opts.gradient_tolerance {
            return Ok(PlattCalibration { a, b });
        }
        let det = h[0] * h[1] - h[2] * h[2];
        let da = -(h[1] * g[0] - h[2] * g[1]) / det;
        let db = -(-h[2] * g[0] + h[0] * g[1]) / det;
        let gd = g[0] * da + g[1] * db;

        let mut step = 1.0;
        let mut accepted = false;
        while step >= opts.min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(f, &t, na, nb);
            // Near the optimum the decrease drops below the resolution of the
            // objective; fall back to requiring a smaller gradient there.
            let armijo = nf < fval + 1e-4 * step * gd;
            let flat = (nf - fval).abs() <= 1e-12 * (1.0 + fval.abs()) && {
                let (ng, _) = derivatives(f, &t, na, nb);
                ng[0].hypot(ng[1]) < grad_norm
            };
            if armijo || flat {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    let (g, _) = derivatives(f, &t, a, b);
    grad_norm = grad_norm.min(g[0].hypot(g[1]));
    if grad_norm <= opts.gradient_tolerance {
        return Ok(PlattCalibration { a, b });
    }
    Err(LearnError::PlattNotConverged { last: PlattCalibration { a, b }, gradient_norm: grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_formula() {
        let p = PlattCalibration { a: -1.0, b: 0.0 };
        assert_eq!(p.probability(0.0), 0.5);
        assert!(p.probability(1e6) > 1.0 - 1e-12);
        assert!(p.probability(-1e6) < 1e-12);
        let p = PlattCalibration { a: -2.0, b: 1.0 };
        assert_eq!(p.probability(0.5), 0.5);
        let p = PlattCalibration { a: -3.0, b: 0.7 };
        assert!((p.probability(0.0) - 1.0 / (1.0 + 0.7f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn symmetric_input_has_zero_intercept() {
        let f = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, -1.5, 1.5];
        let y = [false, false, true, false, true, true, false, true];
        let p = fit_platt(&f, &y).unwrap();
        assert!(p.b.abs() < 1e-9, "{p:?}");
        assert!(p.a < 0.0);
        assert!((p.probability(0.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn separable_input_still_converges() {
        let f = [-2.0, -1.0, 1.0, 2.0];
        let y = [false, false, true, true];
        let p = fit_platt(&f, &y).unwrap();
        assert!(p.a < 0.0 && p.a.is_finite());
    }

    #[test]
    fn one_class_rejected() {
        assert!(matches!(fit_platt(&[1.0, 2.0], &[true, true]), Err(LearnError::DegenerateLabels)));
    }

    #[test]
    fn non_convergence_carries_iterate() {
        let f = [-2.0, -1.0, 1.0, 2.0, 0.3];
        let y = [false, true, false, true, true];
        let opts = PlattOptions { max_iterations: 1, ..Default::default() };
        match fit_platt_with(&f, &y, opts) {
            Err(LearnError::PlattNotConverged { last, gradient_norm }) => {
                assert!(last.a.is_finite() && gradient_norm > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
