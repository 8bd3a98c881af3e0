//! Per-agent local losses with exact gradients, the stochastic oracles that
//! perturb them, and the penalized unified objective.
//!
//! Stacked parameter vectors are agent-major: agent `j` owns the slice
//! `x[j*d..(j+1)*d]`. Each local loss `f_j` already carries whatever sample
//! weighting it needs, and the global loss is the plain sum
//! `F(x) = Σ_j f_j(x_j)`.

mod dataset;
mod oracle;
mod unified;

pub use dataset::{
    make_synthetic_dataset, make_synthetic_dataset_with_separation, partition_iid, partition_noniid, Dataset,
    Partition, DEFAULT_SEPARATION,
};
pub use oracle::{NoiseModel, StochasticOracle};
pub(crate) use unified::gradient_descent as unified_gradient_descent;
pub use unified::UnifiedObjective;

use thiserror::Error;

use crate::linalg::norm;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("curvature of agent {agent} must be positive, got {value}")]
    Curvature { agent: usize, value: f64 },
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("agent {0} has an empty data partition")]
    EmptyPartition(usize),
    #[error("cannot split {samples} samples across {agents} agents")]
    Partition { agents: usize, samples: usize },
    #[error("minibatch size {batch} exceeds agent {agent}'s {available} samples")]
    BatchTooLarge {
        agent: usize,
        batch: usize,
        available: usize,
    },
    #[error("regularization must be nonnegative, got {0}")]
    Regularization(f64),
    #[error("PL estimate needs at least one grid point above the optimum")]
    EmptyGrid,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
}

/// Declared constants of a suite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteConstants {
    /// L_m, the largest per-agent smoothness constant.
    pub smoothness: f64,
    /// μ_m, the smallest per-agent strong-convexity constant (0 if none).
    pub strong_convexity: f64,
    /// γ_m, the largest per-agent Lipschitz constant, when finite.
    pub lipschitz: Option<f64>,
    /// Declared bound on the gradient of the unified objective, when known.
    pub grad_bound: Option<f64>,
    /// Declared PL constant μ̂.
    pub pl: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveClass {
    StronglyConvex,
    Pl,
    General,
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    /// f_j(x) = (a_j/2)‖x - t_j‖²
    Quadratic {
        targets: Vec<Vec<f64>>,
        curvatures: Vec<f64>,
    },
    /// f_j(x) = (x - s_j)² + 3 sin²(x - s_j), scalar.
    Pl { shifts: Vec<f64> },
    /// f_j(x) = mean over local samples of softplus(aᵀx) - y aᵀx, plus (λ/2)‖x‖².
    Logistic {
        features: Vec<Vec<Vec<f64>>>,
        targets: Vec<Vec<f64>>,
        reg: f64,
    },
}

/// Smoothness constant of the scalar PL family: sup |2 + 6 cos 2x| = 8.
pub const PL_SMOOTHNESS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSuite {
    n: usize,
    d: usize,
    family: Family,
    constants: SuiteConstants,
}

impl ObjectiveSuite {
    /// Quadratic suite `f_j(x) = (a_j/2)‖x - t_j‖²`.
    pub fn quadratic(targets: Vec<Vec<f64>>, curvatures: Vec<f64>) -> Result<Self, ObjectiveError> {
        let n = targets.len();
        if n == 0 {
            return Err(ObjectiveError::Dimension { expected: 1, got: 0 });
        }
        if curvatures.len() != n {
            return Err(ObjectiveError::Dimension {
                expected: n,
                got: curvatures.len(),
            });
        }
        let d = targets[0].len();
        if let Some(bad) = targets.iter().find(|t| t.len() != d) {
            return Err(ObjectiveError::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        if let Some((agent, &value)) = curvatures.iter().enumerate().find(|(_, &a)| !(a > 0.0)) {
            return Err(ObjectiveError::Curvature { agent, value });
        }
        let smoothness = curvatures.iter().copied().fold(f64::MIN, f64::max);
        let strong_convexity = curvatures.iter().copied().fold(f64::MAX, f64::min);
        Ok(Self {
            n,
            d,
            family: Family::Quadratic { targets, curvatures },
            constants: SuiteConstants {
                smoothness,
                strong_convexity,
                lipschitz: None,
                grad_bound: None,
                pl: Some(strong_convexity),
            },
        })
    }

    /// Scalar PL suite `f_j(x) = (x - s_j)² + 3 sin²(x - s_j)`. The declared
    /// μ̂ comes from [`estimate_pl_constant`] over `[-10, 10]` with step 1e-3.
    pub fn pl(shifts: Vec<f64>) -> Result<Self, ObjectiveError> {
        if shifts.is_empty() {
            return Err(ObjectiveError::Dimension { expected: 1, got: 0 });
        }
        let n = shifts.len();
        let mu = estimate_pl_constant(pl_value, |x, g| g[0] = pl_derivative(x[0]), 0.0, &pl_grid())?;
        Ok(Self {
            n,
            d: 1,
            family: Family::Pl { shifts },
            constants: SuiteConstants {
                smoothness: PL_SMOOTHNESS,
                strong_convexity: 0.0,
                lipschitz: None,
                grad_bound: None,
                pl: Some(mu),
            },
        })
    }

    /// Regularized logistic regression; each agent sees the rows listed in its
    /// partition. `positive_class` marks label 1 (one-vs-rest); other labels
    /// map to 0.
    pub fn logistic(
        data: &Dataset,
        partition: &Partition,
        reg: f64,
        positive_class: usize,
    ) -> Result<Self, ObjectiveError> {
        if !(reg >= 0.0) {
            return Err(ObjectiveError::Regularization(reg));
        }
        if partition.is_empty() {
            return Err(ObjectiveError::Dimension { expected: 1, got: 0 });
        }
        if let Some(agent) = partition.iter().position(Vec::is_empty) {
            return Err(ObjectiveError::EmptyPartition(agent));
        }
        let d = data.n_features();
        let mut features = Vec::with_capacity(partition.len());
        let mut targets = Vec::with_capacity(partition.len());
        let mut max_row_sq = 0.0f64;
        for idx in partition {
            let mut rows = Vec::with_capacity(idx.len());
            let mut ys = Vec::with_capacity(idx.len());
            for &i in idx {
                let row = data
                    .features
                    .get(i)
                    .ok_or_else(|| ObjectiveError::Dataset(format!("partition references missing sample {i}")))?;
                max_row_sq = max_row_sq.max(row.iter().map(|v| v * v).sum());
                rows.push(row.clone());
                ys.push(if data.labels[i] == positive_class { 1.0 } else { 0.0 });
            }
            features.push(rows);
            targets.push(ys);
        }
        let lipschitz = (reg == 0.0).then(|| max_row_sq.sqrt());
        Ok(Self {
            n: partition.len(),
            d,
            family: Family::Logistic { features, targets, reg },
            constants: SuiteConstants {
                smoothness: reg + 0.25 * max_row_sq,
                strong_convexity: reg,
                lipschitz,
                grad_bound: None,
                pl: (reg > 0.0).then_some(reg),
            },
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn constants(&self) -> &SuiteConstants {
        &self.constants
    }

    pub fn with_grad_bound(mut self, bound: f64) -> Self {
        self.constants.grad_bound = Some(bound);
        self
    }

    pub fn with_pl_constant(mut self, mu: f64) -> Self {
        self.constants.pl = Some(mu);
        self
    }

    pub fn class(&self) -> ObjectiveClass {
        match self.family {
            Family::Pl { .. } => ObjectiveClass::Pl,
            _ if self.constants.strong_convexity > 0.0 => ObjectiveClass::StronglyConvex,
            _ => ObjectiveClass::General,
        }
    }

    /// Number of samples agent `j` can draw minibatches from. Sample-free
    /// families expose a single "sample" equal to the whole local loss.
    pub fn sample_count(&self, agent: usize) -> usize {
        match &self.family {
            Family::Logistic { targets, .. } => targets[agent].len(),
            _ => 1,
        }
    }

    pub fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        match &self.family {
            Family::Quadratic { targets, curvatures } => {
                let t = &targets[agent];
                0.5 * curvatures[agent] * x.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            Family::Pl { shifts } => pl_value(&[x[0] - shifts[agent]]),
            Family::Logistic { features, targets, reg } => {
                let rows = &features[agent];
                let ys = &targets[agent];
                let data: f64 = rows
                    .iter()
                    .zip(ys)
                    .map(|(a, y)| {
                        let z = crate::linalg::dot(a, x);
                        softplus(z) - y * z
                    })
                    .sum::<f64>()
                    / rows.len() as f64;
                data + 0.5 * reg * x.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    /// Exact gradient of `f_j`, written into `out`.
    pub fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Logistic { targets, .. } => {
                let all: Vec<usize> = (0..targets[agent].len()).collect();
                self.batch_grad(agent, &all, x, out);
            }
            _ => self.batch_grad(agent, &[0], x, out),
        }
    }

    /// Average of per-sample gradients over `batch` (indices into the
    /// agent's local samples), plus the regularizer gradient. With every
    /// index in ascending order this is exactly [`Self::local_grad`].
    pub fn batch_grad(&self, agent: usize, batch: &[usize], x: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Quadratic { targets, curvatures } => {
                let a = curvatures[agent];
                for ((o, xi), ti) in out.iter_mut().zip(x).zip(&targets[agent]) {
                    *o = a * (xi - ti);
                }
            }
            Family::Pl { shifts } => out[0] = pl_derivative(x[0] - shifts[agent]),
            Family::Logistic { features, targets, reg } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let rows = &features[agent];
                let ys = &targets[agent];
                for &i in batch {
                    let a = &rows[i];
                    let r = sigmoid(crate::linalg::dot(a, x)) - ys[i];
                    for (o, ai) in out.iter_mut().zip(a) {
                        *o += r * ai;
                    }
                }
                let inv = 1.0 / batch.len() as f64;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = *o * inv + reg * xi;
                }
            }
        }
    }

    /// `F(x) = Σ_j f_j(x_j)` on a stacked vector.
    pub fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n * self.d, "stacked dimension mismatch");
        (0..self.n)
            .map(|j| self.local_value(j, &x[j * self.d..(j + 1) * self.d]))
            .sum()
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n * self.d, "stacked dimension mismatch");
        let d = self.d;
        for j in 0..self.n {
            self.local_grad(j, &x[j * d..(j + 1) * d], &mut out[j * d..(j + 1) * d]);
        }
    }

    /// Value of the consensus objective `Σ_j f_j(z)` at a single point.
    pub fn consensus_value(&self, z: &[f64]) -> f64 {
        (0..self.n).map(|j| self.local_value(j, z)).sum()
    }

    pub fn consensus_grad(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut g = vec![0.0; self.d];
        for j in 0..self.n {
            self.local_grad(j, z, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, gi)| *o += gi);
        }
    }

    /// Minimizer and minimum of `Σ_j f_j(z)` over a shared point `z`, where
    /// a closed form exists.
    pub fn consensus_optimum(&self) -> Option<(Vec<f64>, f64)> {
        match &self.family {
            Family::Quadratic { targets, curvatures } => {
                let total: f64 = curvatures.iter().sum();
                let z: Vec<f64> = (0..self.d)
                    .map(|c| targets.iter().zip(curvatures).map(|(t, a)| a * t[c]).sum::<f64>() / total)
                    .collect();
                let f = self.consensus_value(&z);
                Some((z, f))
            }
            Family::Pl { shifts } if shifts.iter().all(|&s| s == shifts[0]) => Some((vec![shifts[0]], 0.0)),
            _ => None,
        }
    }

    /// `min f_j` for agent `j`, where a closed form exists.
    pub fn local_minimum(&self, _agent: usize) -> Option<f64> {
        match &self.family {
            Family::Quadratic { .. } | Family::Pl { .. } => Some(0.0),
            Family::Logistic { .. } => None,
        }
    }

    /// Per-agent quadratic data `(targets, curvatures)` when the suite is
    /// quadratic.
    pub(crate) fn quadratic_parts(&self) -> Option<(&[Vec<f64>], &[f64])> {
        match &self.family {
            Family::Quadratic { targets, curvatures } => Some((targets, curvatures)),
            _ => None,
        }
    }

    /// Minimum PL constant over agents, estimated on `grid` (points in ℝ^d
    /// relative to each agent's minimizer region).
    pub fn estimate_pl(&self, grid: &[Vec<f64>]) -> Result<f64, ObjectiveError> {
        let mut best = f64::INFINITY;
        for j in 0..self.n {
            let f_star = self.local_minimum(j).ok_or(ObjectiveError::EmptyGrid)?;
            let mu = estimate_pl_constant(
                |x| self.local_value(j, x),
                |x, g| self.local_grad(j, x, g),
                f_star,
                grid,
            )?;
            best = best.min(mu);
        }
        Ok(best)
    }
}

fn pl_value(x: &[f64]) -> f64 {
    let s = x[0].sin();
    x[0] * x[0] + 3.0 * s * s
}

fn pl_derivative(x: f64) -> f64 {
    2.0 * x + 3.0 * (2.0 * x).sin()
}

/// Scalar grid `[-10, 10]` with step 1e-3.
pub fn pl_grid() -> Vec<Vec<f64>> {
    (0..=20_000).map(|i| vec![-10.0 + i as f64 * 1e-3]).collect()
}

pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Grid estimate `min ‖∇f(x)‖² / (2 (f(x) - f*))`. Points at the optimum
/// carry no information and are skipped.
pub fn estimate_pl_constant(
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64], &mut [f64]),
    f_star: f64,
    grid: &[Vec<f64>],
) -> Result<f64, ObjectiveError> {
    let mut best = f64::INFINITY;
    let mut g = Vec::new();
    for x in grid {
        let gap = f(x) - f_star;
        if !(gap > 0.0) {
            continue;
        }
        g.resize(x.len(), 0.0);
        grad(x, &mut g);
        let n = norm(&g);
        best = best.min(n * n / (2.0 * gap));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(ObjectiveError::EmptyGrid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::finite_diff_grad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_grad_matches_fd(suite: &ObjectiveSuite, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = suite.n_agents() * suite.dim();
        for _ in 0..32 {
            let x: Vec<f64> = (0..nd).map(|_| rng.random_range(-scale..scale)).collect();
            let mut g = vec![0.0; nd];
            suite.grad(&x, &mut g);
            let fd = finite_diff_grad(|y| suite.value(y), &x, 1e-6);
            let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let rel = err / norm(&g).max(1.0);
            assert!(rel <= 1e-5, "relative gradient error {rel}");
        }
    }

    #[test]
    fn quadratic_two_agents() {
        let s = ObjectiveSuite::quadratic(vec![vec![0.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        let (z, f) = s.consensus_optimum().unwrap();
        assert_eq!(z, vec![1.0]);
        assert_eq!(f, 1.0);
        let mut g = [0.0];
        s.consensus_grad(&z, &mut g);
        assert!(g[0].abs() < 1e-8);
        let mut gl = [1.0];
        s.local_grad(1, &[2.0], &mut gl);
        assert_eq!(gl[0], 0.0);
        assert_eq!(s.constants().smoothness, 1.0);
        assert_eq!(s.constants().strong_convexity, 1.0);
    }

    #[test]
    fn quadratic_single_agent_and_errors() {
        let s = ObjectiveSuite::quadratic(vec![vec![3.0, -1.0]], vec![2.0]).unwrap();
        let (z, f) = s.consensus_optimum().unwrap();
        assert_eq!(z, vec![3.0, -1.0]);
        assert_eq!(f, 0.0);
        assert!(matches!(
            ObjectiveSuite::quadratic(vec![vec![0.0]], vec![0.0]),
            Err(ObjectiveError::Curvature { agent: 0, .. })
        ));
        assert!(ObjectiveSuite::quadratic(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn quadratic_weighted_optimum_is_stationary() {
        let s = ObjectiveSuite::quadratic(
            vec![vec![1.0, 0.0], vec![-2.0, 4.0], vec![0.5, 0.5]],
            vec![0.5, 2.0, 1.5],
        )
        .unwrap();
        let (z, _) = s.consensus_optimum().unwrap();
        let mut g = vec![0.0; 2];
        s.consensus_grad(&z, &mut g);
        assert!(norm(&g) < 1e-8);
        assert_grad_matches_fd(&s, 1, 5.0);
    }

    #[test]
    fn pl_family_basics() {
        let s = ObjectiveSuite::pl(vec![0.0]).unwrap();
        assert_eq!(s.local_value(0, &[0.0]), 0.0);
        let mut g = [1.0];
        s.local_grad(0, &[0.0], &mut g);
        assert_eq!(g[0], 0.0);
        // second derivative 2 + 6 cos 2x attains 8 at x = 0 and never exceeds it
        let max_curv = (0..=20_000)
            .map(|i| {
                let x = -10.0 + i as f64 * 1e-3;
                (2.0 + 6.0 * (2.0 * x).cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!((max_curv - PL_SMOOTHNESS).abs() < 1e-12);
        // frozen grid estimate (independent numpy evaluation: 0.1755310957 near x = 2.202)
        let mu = s.constants().pl.unwrap();
        assert!((mu - 0.175_531_095_7).abs() < 1e-9, "{mu}");
        assert_eq!(s.class(), ObjectiveClass::Pl);
        assert_grad_matches_fd(&ObjectiveSuite::pl(vec![0.0, 1.5, -2.0]).unwrap(), 2, 4.0);
    }

    #[test]
    fn pl_estimator_identities() {
        let half = |x: &[f64]| 0.5 * x[0] * x[0];
        let mu = estimate_pl_constant(half, |x, g| g[0] = x[0], 0.0, &[vec![-3.0], vec![0.0], vec![0.1]]).unwrap();
        assert!((mu - 1.0).abs() < 1e-15);
        let m = 0.3;
        let q = move |x: &[f64]| 0.5 * m * x[0] * x[0];
        let mu = estimate_pl_constant(q, move |x, g| g[0] = m * x[0], 0.0, &pl_grid()).unwrap();
        assert!((mu - 0.3).abs() < 1e-12);
        assert!(matches!(
            estimate_pl_constant(half, |x, g| g[0] = x[0], 0.0, &[vec![0.0]]),
            Err(ObjectiveError::EmptyGrid)
        ));
    }

    #[test]
    fn strong_convexity_implies_pl_estimate() {
        let s = ObjectiveSuite::quadratic(vec![vec![1.0], vec![-1.0], vec![0.0]], vec![0.4, 1.2, 3.0]).unwrap();
        let mu = s.estimate_pl(&pl_grid()).unwrap();
        assert!(mu >= s.constants().strong_convexity - 1e-9);
    }

    fn tiny_logistic(reg: f64) -> ObjectiveSuite {
        let data = make_synthetic_dataset(11, 60, 3, 2).unwrap();
        let part = partition_iid(&data, 3, 5).unwrap();
        ObjectiveSuite::logistic(&data, &part, reg, 1).unwrap()
    }

    #[test]
    fn logistic_basics() {
        let data = Dataset::new(vec![vec![1.5, -0.5]], vec![1]).unwrap();
        let s = ObjectiveSuite::logistic(&data, &vec![vec![0]], 0.0, 1).unwrap();
        assert!((s.local_value(0, &[0.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        let s = tiny_logistic(0.1);
        assert_eq!(s.constants().strong_convexity, 0.1);
        assert_eq!(s.class(), ObjectiveClass::StronglyConvex);
        assert_grad_matches_fd(&s, 3, 2.0);
        assert_grad_matches_fd(&tiny_logistic(0.0), 4, 2.0);
    }

    #[test]
    fn logistic_rejects_bad_inputs() {
        let data = make_synthetic_dataset(1, 10, 2, 2).unwrap();
        assert!(matches!(
            ObjectiveSuite::logistic(&data, &vec![vec![0, 1], vec![]], 0.0, 1),
            Err(ObjectiveError::EmptyPartition(1))
        ));
        assert!(ObjectiveSuite::logistic(&data, &vec![vec![0]], -1.0, 1).is_err());
    }

    #[test]
    fn logistic_smoothness_bounds_curvature() {
        // Curvature along random directions (second difference) never exceeds L_m.
        let s = tiny_logistic(0.05);
        let l = s.constants().smoothness;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = norm(&u);
            u.iter_mut().for_each(|v| *v /= n);
            let h = 1e-4;
            let at = |t: f64| {
                let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
                s.local_value(0, &y)
            };
            let curv = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
            assert!(curv <= l + 1e-4);
        }
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
