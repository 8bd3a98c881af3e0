use crate::linalg::{cholesky_solve, norm, Matrix};
use crate::topology::{MixingMatrix, SpectralInfo};

use super::{ObjectiveError, ObjectiveSuite};

/// `𝓕(x) = F(x) + (1/2α) Σ_c x_cᵀ (I - Π) x_c`, the consensus-penalized
/// objective whose gradient is the exact-gradient version of the Option I
/// search direction.
#[derive(Debug, Clone, Copy)]
pub struct UnifiedObjective<'a> {
    pub suite: &'a ObjectiveSuite,
    pub mixing: &'a MixingMatrix,
    pub alpha: f64,
}

impl<'a> UnifiedObjective<'a> {
    pub fn new(suite: &'a ObjectiveSuite, mixing: &'a MixingMatrix, alpha: f64) -> Result<Self, ObjectiveError> {
        if mixing.n() != suite.n_agents() {
            return Err(ObjectiveError::Dimension {
                expected: suite.n_agents(),
                got: mixing.n(),
            });
        }
        assert!(alpha > 0.0, "step size must be positive");
        Ok(Self { suite, mixing, alpha })
    }

    fn check(&self, x: &[f64]) -> Result<(), ObjectiveError> {
        let expected = self.suite.n_agents() * self.suite.dim();
        if x.len() != expected {
            return Err(ObjectiveError::Dimension { expected, got: x.len() });
        }
        Ok(())
    }

    /// `(I - Π) x`, coordinatewise.
    fn laplacian_apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.suite.n_agents();
        let d = self.suite.dim();
        let mut out = x.to_vec();
        for j in 0..n {
            for l in 0..n {
                let w = self.mixing.get(j, l);
                if w != 0.0 {
                    for c in 0..d {
                        out[j * d + c] -= w * x[l * d + c];
                    }
                }
            }
        }
        out
    }

    /// The penalty term alone.
    pub fn penalty(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        self.check(x)?;
        let r = self.laplacian_apply(x);
        Ok(x.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / (2.0 * self.alpha))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        Ok(self.suite.value(x) + self.penalty(x)?)
    }

    /// `∇F(x) + (1/α)(I - Π)x`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
        self.check(x)?;
        let mut g = vec![0.0; x.len()];
        self.suite.grad(x, &mut g);
        let r = self.laplacian_apply(x);
        for (gi, ri) in g.iter_mut().zip(&r) {
            *gi += ri / self.alpha;
        }
        Ok(g)
    }

    /// μ′ = μ_m + (1/2α)(1 - λ_N).
    pub fn mu_prime(&self, spectrum: &SpectralInfo) -> f64 {
        self.suite.constants().strong_convexity + (1.0 - spectrum.lambda_n()) / (2.0 * self.alpha)
    }

    /// L′ = L_m + (1/α)(1 - λ₂).
    pub fn l_prime(&self, spectrum: &SpectralInfo) -> f64 {
        self.suite.constants().smoothness + (1.0 - spectrum.lambda2()) / self.alpha
    }

    /// Minimizer and minimum of 𝓕. Quadratic suites solve the normal
    /// equations `(A + (1/α)(I - Π)) x = A t` per coordinate; other suites run
    /// gradient descent with step `1/L` from the origin.
    pub fn minimum(&self, spectrum: &SpectralInfo) -> Result<(Vec<f64>, f64), ObjectiveError> {
        let n = self.suite.n_agents();
        let d = self.suite.dim();
        if let Some((targets, curvatures)) = self.suite.quadratic_parts() {
            let mut system = Matrix::from_fn(n, n, |j, l| {
                let id = if j == l { 1.0 } else { 0.0 };
                (id - self.mixing.get(j, l)) / self.alpha
            });
            for j in 0..n {
                system[(j, j)] += curvatures[j];
            }
            let mut x = vec![0.0; n * d];
            for c in 0..d {
                let rhs: Vec<f64> = (0..n).map(|j| curvatures[j] * targets[j][c]).collect();
                let sol = cholesky_solve(&system, &rhs)
                    .map_err(|e| ObjectiveError::Dataset(format!("unified optimum solve failed: {e}")))?;
                for j in 0..n {
                    x[j * d + c] = sol[j];
                }
            }
            let v = self.value(&x)?;
            return Ok((x, v));
        }
        // 1 - λ_N bounds the penalty curvature from above.
        let l = self.suite.constants().smoothness + (1.0 - spectrum.lambda_n()) / self.alpha;
        let x = gradient_descent(|y| self.grad(y).expect("dimension checked"), vec![0.0; n * d], 1.0 / l);
        let v = self.value(&x)?;
        Ok((x, v))
    }
}

/// Accelerated gradient descent with gradient-based restarts, run until the
/// gradient norm falls below 1e-11 or an iteration cap is hit. Only used to
/// locate reference optima.
pub(crate) fn gradient_descent(grad: impl Fn(&[f64]) -> Vec<f64>, x0: Vec<f64>, step: f64) -> Vec<f64> {
    let mut x = x0.clone();
    let mut y = x0;
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let g = grad(&y);
        if norm(&g) < 1e-11 {
            return y;
        }
        let next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        // restart the momentum once it points uphill
        let uphill: f64 = g.iter().zip(next.iter().zip(&x)).map(|(gi, (n, o))| gi * (n - o)).sum();
        if uphill > 0.0 {
            t = 1.0;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let w = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(n, o)| n + w * (n - o)).collect();
        x = next;
        t = t_next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Topology, TopologyKind};
    use crate::verify::finite_diff_grad;

    #[test]
    fn penalty_two_by_two() {
        let suite = ObjectiveSuite::quadratic(vec![vec![0.0], vec![0.0]], vec![1.0, 1.0]).unwrap();
        let pi = MixingMatrix::uniform(2);
        let u = UnifiedObjective::new(&suite, &pi, 0.5).unwrap();
        assert!((u.penalty(&[0.0, 2.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(u.penalty(&[0.0]).is_err());
    }

    #[test]
    fn consensus_point_has_no_penalty() {
        let suite = ObjectiveSuite::quadratic(
            vec![vec![1.0, 2.0], vec![0.0, -1.0], vec![3.0, 0.5]],
            vec![1.0, 2.0, 0.5],
        )
        .unwrap();
        let pi = MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, 3).unwrap(), 0.2).unwrap();
        let u = UnifiedObjective::new(&suite, &pi, 0.1).unwrap();
        let x = [0.7, -0.3, 0.7, -0.3, 0.7, -0.3];
        assert!(u.penalty(&x).unwrap().abs() < 1e-14);
        assert!((u.value(&x).unwrap() - suite.value(&x)).abs() < 1e-14);
        let g = u.grad(&x).unwrap();
        let mut gf = vec![0.0; 6];
        suite.grad(&x, &mut gf);
        for (a, b) in g.iter().zip(&gf) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let suite = ObjectiveSuite::pl(vec![0.0, 1.0, -0.5, 2.0]).unwrap();
        let pi = MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, 4).unwrap(), 0.0).unwrap();
        let u = UnifiedObjective::new(&suite, &pi, 0.3).unwrap();
        let x = [0.4, -1.2, 2.5, 0.1];
        let g = u.grad(&x).unwrap();
        let fd = finite_diff_grad(|y| u.value(y).unwrap(), &x, 1e-6);
        let err = norm(&g.iter().zip(&fd).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err / norm(&g) < 1e-5);
    }

    #[test]
    fn derived_constants_dominate_base() {
        let suite = ObjectiveSuite::quadratic(vec![vec![0.0]; 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for (topo, lazy) in [(TopologyKind::Full, 0.0), (TopologyKind::Ring, 0.3)] {
            let pi = MixingMatrix::metropolis(&Topology::build(topo, 4).unwrap(), lazy).unwrap();
            let spec = pi.spectrum().unwrap();
            let u = UnifiedObjective::new(&suite, &pi, 0.2).unwrap();
            assert!(u.mu_prime(&spec) >= 1.0);
            assert!(u.l_prime(&spec) >= 4.0);
        }
        let id = MixingMatrix::identity(4);
        let spec = id.spectrum().unwrap();
        let u = UnifiedObjective::new(&suite, &id, 0.2).unwrap();
        assert_eq!(u.mu_prime(&spec), 1.0);
        assert_eq!(u.l_prime(&spec), 4.0);
    }

    #[test]
    fn quadratic_minimum_is_stationary() {
        let suite = ObjectiveSuite::quadratic(vec![vec![0.0], vec![2.0], vec![-1.0]], vec![1.0, 1.0, 2.0]).unwrap();
        let pi = MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, 3).unwrap(), 0.0).unwrap();
        let spec = pi.spectrum().unwrap();
        let u = UnifiedObjective::new(&suite, &pi, 0.1).unwrap();
        let (x, v) = u.minimum(&spec).unwrap();
        assert!(norm(&u.grad(&x).unwrap()) < 1e-10);
        assert!(v <= u.value(&[0.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn numeric_minimum_for_pl_suite() {
        let suite = ObjectiveSuite::pl(vec![0.5, -0.5]).unwrap();
        let pi = MixingMatrix::uniform(2);
        let spec = pi.spectrum().unwrap();
        let u = UnifiedObjective::new(&suite, &pi, 0.5).unwrap();
        let (x, _) = u.minimum(&spec).unwrap();
        assert!(norm(&u.grad(&x).unwrap()) < 1e-9);
    }
}
