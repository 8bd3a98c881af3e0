//! Independent reference computations used to cross-check the optimizer, and
//! the metrics and domination checks that compare traces against bounds.

use thiserror::Error;

use crate::linalg::Matrix;
use crate::optimizer::UpdateOption;
use crate::topology::{MixingMatrix, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("metric series has {metrics} entries but bound series has {bounds}")]
    Length { metrics: usize, bounds: usize },
    #[error("slack must be nonnegative, got {0}")]
    Slack(f64),
}

/// Central-difference gradient with step `h`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// One step of the compact stacked recursion, built from dense `Π ⊗ I_d` and
/// `Π̃ ⊗ I_d` products:
///
/// * Option I: `x⁺ = x - α(g + (1/α)(I - Π)x) + β Π̃ (x - x⁻)`
/// * Option II: `x⁺ = x - α g + β Π̃ (x - x⁻)`
///
/// Valid for fixed ω and any history where `v_{k-1} = Π x_{k-1}`.
#[allow(clippy::too_many_arguments)]
pub fn reference_step(
    mixing: &MixingMatrix,
    omega: f64,
    option: UpdateOption,
    alpha: f64,
    beta: f64,
    x_cur: &[f64],
    x_prev: &[f64],
    grads: &[f64],
    d: usize,
) -> Result<Vec<f64>, TopologyError> {
    let n = mixing.n();
    let pi = mixing.matrix().kron_identity(d);
    let pi_eff = mixing.effective(omega)?.matrix().kron_identity(d);
    let diff: Vec<f64> = x_cur.iter().zip(x_prev).map(|(a, b)| a - b).collect();
    let momentum = pi_eff.matvec(&diff);
    let mixed = pi.matvec(x_cur);
    Ok((0..n * d)
        .map(|i| {
            let search = match option {
                UpdateOption::I => grads[i] + (x_cur[i] - mixed[i]) / alpha,
                UpdateOption::II => grads[i],
            };
            x_cur[i] - alpha * search + beta * momentum[i]
        })
        .collect())
}

/// Agent-major mean `x̄`.
pub fn stacked_mean(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for j in 0..n {
        for c in 0..d {
            m[c] += x[j * d + c];
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}

/// `(max_j ‖x_j - x̄‖, ‖x - 1 ⊗ x̄‖)`.
pub fn consensus_errors(x: &[f64], n: usize, d: usize) -> (f64, f64) {
    let mean = stacked_mean(x, n, d);
    let mut max = 0.0f64;
    let mut total = 0.0;
    for j in 0..n {
        let sq: f64 = (0..d).map(|c| (x[j * d + c] - mean[c]).powi(2)).sum();
        max = max.max(sq.sqrt());
        total += sq;
    }
    (max, total.sqrt())
}

/// Frobenius norm of `(I - J)Π̃ - Π̃(I - J)` with `J = 11ᵀ/N`.
pub fn commutation_defect(mixing: &MixingMatrix, omega: f64) -> Result<f64, TopologyError> {
    let n = mixing.n();
    let p = mixing.effective(omega)?.matrix().clone();
    let centering = Matrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - 1.0 / n as f64);
    let a = centering.matmul(&p);
    let b = p.matmul(&centering);
    Ok(a.blend(1.0, &b, -1.0).frobenius())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub metric: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub checked: usize,
    pub first_violation: Option<Violation>,
    /// Largest `metric / bound` seen (0 when nothing was checked).
    pub max_ratio: f64,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks `metrics[i] <= (1 + slack) * bounds[i]` elementwise, reporting the
/// first index where it fails. A bound of +∞ always holds; a NaN metric or
/// bound counts as a violation.
pub fn check_bound_domination(metrics: &[f64], bounds: &[f64], slack: f64) -> Result<DominationReport, VerifyError> {
    if !(slack >= 0.0) {
        return Err(VerifyError::Slack(slack));
    }
    if metrics.len() != bounds.len() {
        return Err(VerifyError::Length {
            metrics: metrics.len(),
            bounds: bounds.len(),
        });
    }
    let mut first_violation = None;
    let mut max_ratio = 0.0f64;
    for (index, (&metric, &bound)) in metrics.iter().zip(bounds).enumerate() {
        let ok = metric <= (1.0 + slack) * bound;
        if bound > 0.0 && bound.is_finite() {
            max_ratio = max_ratio.max(metric / bound);
        } else if !ok {
            max_ratio = f64::INFINITY;
        }
        if !ok && first_violation.is_none() {
            first_violation = Some(Violation { index, metric, bound });
        }
    }
    Ok(DominationReport {
        checked: metrics.len(),
        first_violation,
        max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Topology, TopologyKind};

    #[test]
    fn finite_differences_of_quadratic() {
        let g = finite_diff_grad(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn domination_examples() {
        let r = check_bound_domination(&[1.0, 2.0], &[1.0, 2.0], 0.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_ratio, 1.0);
        let r = check_bound_domination(&[1.0, 2.5, 9.0], &[1.0, 2.0, 1.0], 0.0).unwrap();
        assert_eq!(
            r.first_violation,
            Some(Violation {
                index: 1,
                metric: 2.5,
                bound: 2.0
            })
        );
        assert!(check_bound_domination(&[1.0, 2.2], &[1.0, 2.0], 0.1).unwrap().passed());
        let empty = check_bound_domination(&[], &[], 0.0).unwrap();
        assert!(empty.passed() && empty.checked == 0);
        assert_eq!(
            check_bound_domination(&[1.0], &[], 0.0),
            Err(VerifyError::Length { metrics: 1, bounds: 0 })
        );
        assert!(check_bound_domination(&[1.0], &[1.0], -0.1).is_err());
        assert!(!check_bound_domination(&[f64::NAN], &[1.0], 0.0).unwrap().passed());
        assert!(check_bound_domination(&[1e9], &[f64::INFINITY], 0.0).unwrap().passed());
    }

    #[test]
    fn consensus_error_examples() {
        assert_eq!(consensus_errors(&[1.0, 1.0, 1.0], 3, 1), (0.0, 0.0));
        let (max, stacked) = consensus_errors(&[0.0, 2.0], 2, 1);
        assert_eq!(max, 1.0);
        assert!((stacked - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn commutation_holds_for_metropolis() {
        for kind in [
            TopologyKind::Full,
            TopologyKind::Ring,
            TopologyKind::Bipartite { left: 2, right: 3 },
        ] {
            let pi = MixingMatrix::metropolis(&Topology::build(kind, 5).unwrap(), 0.25).unwrap();
            for w in [0.0, 0.3, 1.0] {
                assert!(commutation_defect(&pi, w).unwrap() < 1e-12);
            }
        }
    }
}
