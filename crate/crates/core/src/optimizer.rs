//! The per-agent DMSGD loop: consensus averaging, a momentum term blending
//! parameter and consensus displacements, and a local stochastic gradient
//! step taken from either the consensus variable (Option I) or the agent's
//! own parameters (Option II).

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::norm;
use crate::objectives::{ObjectiveError, ObjectiveSuite, StochasticOracle, UnifiedObjective};
use crate::topology::{MixingMatrix, SpectralInfo, TopologyError};
use crate::verify::{consensus_errors, stacked_mean};

/// Tie-break for adaptive ω when both displacement norms vanish.
pub const ADAPTIVE_OMEGA_TIE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOption {
    /// Gradient step taken from the consensus variable `v_k`.
    I,
    /// Gradient step taken from the local parameters `x_k`.
    II,
}

impl fmt::Display for UpdateOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateOption::I => "I",
            UpdateOption::II => "II",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaMode {
    Fixed(f64),
    /// ω_j = ‖Δx_j‖ / (‖Δx_j‖ + ‖Δv_j‖) per agent.
    Adaptive,
    /// Same ratio computed from the stacked displacement norms, shared by all
    /// agents.
    AdaptiveGlobal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// α_k = √(B/k).
    InvSqrt {
        b: f64,
    },
}

impl StepSchedule {
    /// Step size at iteration `k ≥ 1`.
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(alpha) => alpha,
            StepSchedule::InvSqrt { b } => (b / k as f64).sqrt(),
        }
    }

    /// The step size used for the penalty weight of the unified objective
    /// (the constant, or the first scheduled step).
    pub fn reference(&self) -> f64 {
        self.at(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub step: StepSchedule,
    pub beta: f64,
    pub omega: OmegaMode,
    pub option: UpdateOption,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("step size must be positive, got {0}")]
    Alpha(f64),
    #[error("schedule constant B must be positive, got {0}")]
    ScheduleB(f64),
    #[error("momentum must lie in [0, 1), got {0}")]
    Beta(f64),
    #[error("omega must lie in [0, 1], got {0}")]
    Omega(f64),
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        match self.step {
            StepSchedule::Constant(a) if !(a > 0.0 && a.is_finite()) => return Err(ParamError::Alpha(a)),
            StepSchedule::InvSqrt { b } if !(b > 0.0 && b.is_finite()) => return Err(ParamError::ScheduleB(b)),
            _ => {}
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(ParamError::Beta(self.beta));
        }
        if let OmegaMode::Fixed(w) = self.omega {
            if !(0.0..=1.0).contains(&w) {
                return Err(ParamError::Omega(w));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("non-finite gradient from agent {agent} at iteration {iteration}")]
    NonFiniteGradient { agent: usize, iteration: usize },
    #[error("non-finite state at iteration {iteration}")]
    NonFiniteState { iteration: usize },
    #[error("gradient block has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("oracle failed for agent {agent} at iteration {iteration}: {message}")]
    Oracle {
        agent: usize,
        iteration: usize,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("mixing matrix has {mixing} agents but the objective has {suite}")]
    AgentMismatch { mixing: usize, suite: usize },
}

/// `v = Π x`, applied to every coordinate of the agent-major stack.
pub fn consensus_step(mixing: &MixingMatrix, x: &[f64], d: usize) -> Vec<f64> {
    let n = mixing.n();
    assert_eq!(x.len(), n * d, "stacked dimension mismatch");
    let mut v = vec![0.0; n * d];
    for j in 0..n {
        for l in 0..n {
            let w = mixing.get(j, l);
            if w == 0.0 {
                continue;
            }
            for c in 0..d {
                v[j * d + c] += w * x[l * d + c];
            }
        }
    }
    v
}

/// δ = ω(x_k - x_{k-1}) + (1-ω)(v_k - v_{k-1}) for one agent's block.
pub fn momentum_delta(omega: f64, x_cur: &[f64], x_prev: &[f64], v_cur: &[f64], v_prev: &[f64]) -> Vec<f64> {
    (0..x_cur.len())
        .map(|c| omega * (x_cur[c] - x_prev[c]) + (1.0 - omega) * (v_cur[c] - v_prev[c]))
        .collect()
}

/// ω = cm₁/(cm₁+cm₂) with cm₁ = ‖x_k - x_{k-1}‖, cm₂ = ‖v_k - v_{k-1}‖;
/// [`ADAPTIVE_OMEGA_TIE`] when both vanish.
pub fn adaptive_omega(x_cur: &[f64], x_prev: &[f64], v_cur: &[f64], v_prev: &[f64]) -> f64 {
    let cm1 = diff_norm(x_cur, x_prev);
    let cm2 = diff_norm(v_cur, v_prev);
    omega_from_norms(cm1, cm2)
}

pub fn omega_from_norms(cm1: f64, cm2: f64) -> f64 {
    if cm1 + cm2 == 0.0 {
        ADAPTIVE_OMEGA_TIE
    } else {
        cm1 / (cm1 + cm2)
    }
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Step-level knobs, already resolved for the current iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub option: UpdateOption,
    pub alpha: f64,
    pub beta: f64,
    pub omega: OmegaMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// ω applied per agent.
    pub omegas: Vec<f64>,
    /// ‖x_{k+1} - x_k‖ over the stack.
    pub step_norm: f64,
}

impl StepInfo {
    pub fn mean_omega(&self) -> f64 {
        self.omegas.iter().sum::<f64>() / self.omegas.len() as f64
    }
}

/// Current and previous parameter and consensus states of all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSwarm {
    n: usize,
    d: usize,
    pub x_cur: Vec<f64>,
    pub x_prev: Vec<f64>,
    /// Consensus variable of the previous iteration, `v_{k-1} = Π x_{k-1}`.
    pub v_prev: Vec<f64>,
    /// Iteration index of `x_cur` (starts at 1).
    pub k: usize,
}

impl AgentSwarm {
    /// Zero initialization `x_0 = x_1 = 0`, with `v_0 = Π x_0 = 0`.
    pub fn zeros(n: usize, d: usize) -> Self {
        Self::from_states(vec![0.0; n * d], vec![0.0; n * d], n, d, None)
    }

    /// Swarm at `x_cur`/`x_prev`; `v_prev` defaults to zeros when not given
    /// (callers wanting `Π x_prev` pass it explicitly).
    pub fn from_states(x_cur: Vec<f64>, x_prev: Vec<f64>, n: usize, d: usize, v_prev: Option<Vec<f64>>) -> Self {
        assert_eq!(x_cur.len(), n * d);
        assert_eq!(x_prev.len(), n * d);
        Self {
            n,
            d,
            v_prev: v_prev.unwrap_or_else(|| vec![0.0; n * d]),
            x_cur,
            x_prev,
            k: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn agent(&self, j: usize) -> &[f64] {
        &self.x_cur[j * self.d..(j + 1) * self.d]
    }

    pub fn mean(&self) -> Vec<f64> {
        stacked_mean(&self.x_cur, self.n, self.d)
    }

    /// Advances one iteration given the gradient draws `grads` (agent-major,
    /// evaluated at `x_cur`).
    pub fn step(&mut self, mixing: &MixingMatrix, params: &StepParams, grads: &[f64]) -> Result<StepInfo, StepError> {
        let (n, d) = (self.n, self.d);
        if grads.len() != n * d {
            return Err(StepError::Shape {
                expected: n * d,
                got: grads.len(),
            });
        }
        if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
            return Err(StepError::NonFiniteGradient {
                agent: pos / d,
                iteration: self.k,
            });
        }

        // Phase 1: every agent reads neighbours' x_k before anyone writes.
        let v = consensus_step(mixing, &self.x_cur, d);

        let omegas: Vec<f64> = match params.omega {
            OmegaMode::Fixed(w) => vec![w; n],
            OmegaMode::Adaptive => (0..n)
                .map(|j| {
                    let r = j * d..(j + 1) * d;
                    adaptive_omega(
                        &self.x_cur[r.clone()],
                        &self.x_prev[r.clone()],
                        &v[r.clone()],
                        &self.v_prev[r],
                    )
                })
                .collect(),
            OmegaMode::AdaptiveGlobal => {
                vec![adaptive_omega(&self.x_cur, &self.x_prev, &v, &self.v_prev); n]
            }
        };

        // Phase 2: local updates.
        let mut next = vec![0.0; n * d];
        for j in 0..n {
            let r = j * d..(j + 1) * d;
            let delta = momentum_delta(
                omegas[j],
                &self.x_cur[r.clone()],
                &self.x_prev[r.clone()],
                &v[r.clone()],
                &self.v_prev[r.clone()],
            );
            let base = match params.option {
                UpdateOption::I => &v[r.clone()],
                UpdateOption::II => &self.x_cur[r.clone()],
            };
            for c in 0..d {
                next[j * d + c] = base[c] - params.alpha * grads[j * d + c] + params.beta * delta[c];
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(StepError::NonFiniteState { iteration: self.k });
        }

        let step_norm = diff_norm(&next, &self.x_cur);
        self.x_prev = std::mem::replace(&mut self.x_cur, next);
        self.v_prev = v;
        self.k += 1;
        Ok(StepInfo { omegas, step_norm })
    }
}

/// One row of a run trace, describing the iterate `x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub consensus_err_max: f64,
    pub consensus_err_stacked: f64,
    /// Objective gap: 𝓕(x_k) - 𝓕* for Option I, F(x_k) - F* for Option II.
    pub gap: f64,
    /// ‖∇𝓕(x_k)‖² (Option I) or ‖∇F(x_k)‖² (Option II).
    pub grad_norm_sq: f64,
    /// Mean of `grad_norm_sq` over rows `1..=k`.
    pub running_avg_grad: f64,
    /// ‖x_{k+1} - x_k‖.
    pub step_norm: f64,
    /// Mean ω applied at this iteration.
    pub omega_used: f64,
    /// Σ_j f_j(x̄_k), the true objective at the average iterate.
    pub objective_at_mean: f64,
    /// Value of the tracked objective (𝓕 or F) at x_k.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted(StepError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub swarm: AgentSwarm,
}

impl RunTrace {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Minimum values the trace gaps are measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceValues {
    /// 𝓕* (Option I) or unconstrained F* (Option II).
    pub objective_min: f64,
    /// min_z Σ_j f_j(z).
    pub consensus_min: f64,
}

impl ReferenceValues {
    pub fn compute(
        suite: &ObjectiveSuite,
        mixing: &MixingMatrix,
        spectrum: &SpectralInfo,
        option: UpdateOption,
        alpha_ref: f64,
    ) -> Result<Self, ObjectiveError> {
        let objective_min = match option {
            UpdateOption::I => UnifiedObjective::new(suite, mixing, alpha_ref)?.minimum(spectrum)?.1,
            UpdateOption::II => {
                let mut total = 0.0;
                for j in 0..suite.n_agents() {
                    total += match suite.local_minimum(j) {
                        Some(v) => v,
                        None => {
                            let step = 1.0 / suite.constants().smoothness;
                            let z = crate::objectives::unified_gradient_descent(
                                |y| {
                                    let mut g = vec![0.0; y.len()];
                                    suite.local_grad(j, y, &mut g);
                                    g
                                },
                                vec![0.0; suite.dim()],
                                step,
                            );
                            suite.local_value(j, &z)
                        }
                    };
                }
                total
            }
        };
        let consensus_min = match suite.consensus_optimum() {
            Some((_, f)) => f,
            None => {
                let step = 1.0 / (suite.constants().smoothness * suite.n_agents() as f64);
                let z = crate::objectives::unified_gradient_descent(
                    |y| {
                        let mut g = vec![0.0; y.len()];
                        suite.consensus_grad(y, &mut g);
                        g
                    },
                    vec![0.0; suite.dim()],
                    step,
                );
                suite.consensus_value(&z)
            }
        };
        Ok(Self {
            objective_min,
            consensus_min,
        })
    }
}

/// A fully specified experiment: graph, losses, oracle and hyperparameters.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub mixing: MixingMatrix,
    pub spectrum: SpectralInfo,
    pub suite: ObjectiveSuite,
    pub oracle: StochasticOracle,
    pub hp: HyperParams,
    pub reference: ReferenceValues,
}

impl Simulation {
    pub fn new(
        mixing: MixingMatrix,
        suite: ObjectiveSuite,
        oracle: StochasticOracle,
        hp: HyperParams,
    ) -> Result<Self, SimError> {
        hp.validate()?;
        if mixing.n() != suite.n_agents() {
            return Err(SimError::AgentMismatch {
                mixing: mixing.n(),
                suite: suite.n_agents(),
            });
        }
        oracle.validate(&suite)?;
        let spectrum = mixing.spectrum()?;
        let reference = ReferenceValues::compute(&suite, &mixing, &spectrum, hp.option, hp.step.reference())?;
        Ok(Self {
            mixing,
            spectrum,
            suite,
            oracle,
            hp,
            reference,
        })
    }

    /// Value and gradient of the tracked objective (𝓕 for Option I, F for
    /// Option II).
    pub fn tracked(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.hp.option {
            UpdateOption::I => {
                let u = UnifiedObjective::new(&self.suite, &self.mixing, self.hp.step.reference())
                    .expect("agent counts checked at construction");
                (u.value(x).expect("dimension"), u.grad(x).expect("dimension"))
            }
            UpdateOption::II => {
                let mut g = vec![0.0; x.len()];
                self.suite.grad(x, &mut g);
                (self.suite.value(x), g)
            }
        }
    }

    /// Per-agent RNG streams: one ChaCha stream per agent id under the
    /// master seed.
    pub fn agent_rngs(&self, seed: u64) -> Vec<ChaCha8Rng> {
        (0..self.suite.n_agents())
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                rng
            })
            .collect()
    }

    /// Draws every agent's stochastic gradient at `x`.
    pub fn draw_gradients(&self, x: &[f64], rngs: &mut [ChaCha8Rng], iteration: usize) -> Result<Vec<f64>, StepError> {
        let d = self.suite.dim();
        let mut g = vec![0.0; x.len()];
        for (j, rng) in rngs.iter_mut().enumerate() {
            self.oracle
                .draw(&self.suite, j, &x[j * d..(j + 1) * d], rng, &mut g[j * d..(j + 1) * d])
                .map_err(|e| StepError::Oracle {
                    agent: j,
                    iteration,
                    message: e.to_string(),
                })?;
        }
        Ok(g)
    }

    pub fn run(&self) -> RunTrace {
        self.run_seed(self.hp.seed)
    }

    pub fn run_seed(&self, seed: u64) -> RunTrace {
        let n = self.suite.n_agents();
        let d = self.suite.dim();
        let mut swarm = AgentSwarm::zeros(n, d);
        let mut rngs = self.agent_rngs(seed);
        let mut records = Vec::with_capacity(self.hp.iters);
        let mut grad_sum = 0.0;

        for k in 1..=self.hp.iters {
            let (objective, grad) = self.tracked(&swarm.x_cur);
            let grad_norm_sq = norm(&grad).powi(2);
            grad_sum += grad_norm_sq;
            let (err_max, err_stacked) = consensus_errors(&swarm.x_cur, n, d);
            let mean = swarm.mean();

            let draws = match self.draw_gradients(&swarm.x_cur, &mut rngs, k) {
                Ok(g) => g,
                Err(e) => {
                    return RunTrace {
                        records,
                        status: RunStatus::Aborted(e),
                        swarm,
                    }
                }
            };
            let params = StepParams {
                option: self.hp.option,
                alpha: self.hp.step.at(k),
                beta: self.hp.beta,
                omega: self.hp.omega,
            };
            let info = match swarm.step(&self.mixing, &params, &draws) {
                Ok(info) => info,
                Err(e) => {
                    return RunTrace {
                        records,
                        status: RunStatus::Aborted(e),
                        swarm,
                    }
                }
            };
            let record = TraceRecord {
                k,
                consensus_err_max: err_max,
                consensus_err_stacked: err_stacked,
                gap: objective - self.reference.objective_min,
                grad_norm_sq,
                running_avg_grad: grad_sum / k as f64,
                step_norm: info.step_norm,
                omega_used: info.mean_omega(),
                objective_at_mean: self.suite.consensus_value(&mean),
                objective,
            };
            let finite = [
                record.consensus_err_max,
                record.consensus_err_stacked,
                record.gap,
                record.grad_norm_sq,
                record.running_avg_grad,
                record.step_norm,
                record.objective_at_mean,
            ]
            .iter()
            .all(|v| v.is_finite());
            if !finite {
                return RunTrace {
                    records,
                    status: RunStatus::Aborted(StepError::NonFiniteState { iteration: k }),
                    swarm,
                };
            }
            records.push(record);
        }
        RunTrace {
            records,
            status: RunStatus::Completed,
            swarm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Topology, TopologyKind};

    fn two_agent_sim(option: UpdateOption, beta: f64, omega: OmegaMode, iters: usize) -> Simulation {
        let suite = ObjectiveSuite::quadratic(vec![vec![0.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        let hp = HyperParams {
            step: StepSchedule::Constant(0.1),
            beta,
            omega,
            option,
            iters,
            seed: 0,
        };
        Simulation::new(MixingMatrix::uniform(2), suite, StochasticOracle::exact(), hp).unwrap()
    }

    #[test]
    fn consensus_step_examples() {
        let x = [1.0, -2.0, 3.0, 0.5, 4.0, 4.0];
        assert_eq!(consensus_step(&MixingMatrix::identity(3), &x, 2), x.to_vec());
        let v = consensus_step(&MixingMatrix::uniform(3), &x, 2);
        for j in 0..3 {
            assert!((v[2 * j] - 8.0 / 3.0).abs() < 1e-15);
            assert!((v[2 * j + 1] - 2.5 / 3.0).abs() < 1e-15);
        }
        assert_eq!(
            consensus_step(&MixingMatrix::uniform(2), &[0.0, 2.0], 1),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn momentum_delta_examples() {
        let (xc, xp, vc, vp) = ([1.0, 2.0], [0.5, 1.0], [3.0, 3.0], [1.0, 4.0]);
        assert_eq!(momentum_delta(1.0, &xc, &xp, &vc, &vp), vec![0.5, 1.0]);
        assert_eq!(momentum_delta(0.0, &xc, &xp, &vc, &vp), vec![2.0, -1.0]);
        assert_eq!(momentum_delta(0.3, &xc, &xc, &vc, &vc), vec![0.0, 0.0]);
    }

    #[test]
    fn adaptive_omega_examples() {
        assert_eq!(omega_from_norms(1.0, 3.0), 0.25);
        assert_eq!(omega_from_norms(2.0, 0.0), 1.0);
        assert_eq!(omega_from_norms(0.0, 0.0), 0.5);
        assert_eq!(adaptive_omega(&[1.0], &[0.0], &[3.0], &[0.0]), 0.25);
    }

    #[test]
    fn worked_two_agent_example() {
        for option in [UpdateOption::I, UpdateOption::II] {
            let mut swarm = AgentSwarm::zeros(2, 1);
            let params = StepParams {
                option,
                alpha: 0.1,
                beta: 0.9,
                omega: OmegaMode::Fixed(0.0),
            };
            let pi = MixingMatrix::uniform(2);
            swarm.step(&pi, &params, &[0.0, -2.0]).unwrap();
            assert!((swarm.x_cur[0] - 0.0).abs() < 1e-15 && (swarm.x_cur[1] - 0.2).abs() < 1e-15);
            if option == UpdateOption::I {
                swarm.step(&pi, &params, &[0.0, -1.8]).unwrap();
                assert!((swarm.x_cur[0] - 0.19).abs() < 1e-15, "{:?}", swarm.x_cur);
                assert!((swarm.x_cur[1] - 0.37).abs() < 1e-15, "{:?}", swarm.x_cur);
            }
        }
        // the same values through the full simulation loop
        let trace = two_agent_sim(UpdateOption::I, 0.9, OmegaMode::Fixed(0.0), 2).run();
        assert!((trace.swarm.x_cur[0] - 0.19).abs() < 1e-15);
        assert!((trace.swarm.x_cur[1] - 0.37).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_ignores_omega_in_step() {
        let pi = MixingMatrix::uniform(2);
        let mut a = AgentSwarm::from_states(vec![0.3, 1.0], vec![0.1, 0.2], 2, 1, Some(vec![0.0, 0.5]));
        let mut b = a.clone();
        let p = |w| StepParams {
            option: UpdateOption::I,
            alpha: 0.2,
            beta: 0.0,
            omega: OmegaMode::Fixed(w),
        };
        a.step(&pi, &p(0.1), &[0.4, -0.3]).unwrap();
        b.step(&pi, &p(0.9), &[0.4, -0.3]).unwrap();
        assert_eq!(a.x_cur, b.x_cur);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut s = AgentSwarm::zeros(3, 2);
        let p = StepParams {
            option: UpdateOption::II,
            alpha: 0.1,
            beta: 0.5,
            omega: OmegaMode::Adaptive,
        };
        let err = s
            .step(&MixingMatrix::uniform(3), &p, &[0.0, 0.0, 1.0, f64::NAN, 0.0, 0.0])
            .unwrap_err();
        assert_eq!(err, StepError::NonFiniteGradient { agent: 1, iteration: 1 });
    }

    #[test]
    fn zero_iterations_give_empty_trace() {
        let t = two_agent_sim(UpdateOption::I, 0.5, OmegaMode::Fixed(0.5), 0).run();
        assert!(t.records.is_empty());
        assert!(t.is_complete());
        assert_eq!(t.swarm, AgentSwarm::zeros(2, 1));
    }

    #[test]
    fn runs_are_deterministic() {
        let suite =
            ObjectiveSuite::quadratic(vec![vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.0, 0.5]], vec![1.0; 3]).unwrap();
        let hp = HyperParams {
            step: StepSchedule::Constant(0.05),
            beta: 0.7,
            omega: OmegaMode::Adaptive,
            option: UpdateOption::I,
            iters: 50,
            seed: 42,
        };
        let pi = MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, 3).unwrap(), 0.1).unwrap();
        let sim = Simulation::new(pi, suite, StochasticOracle::additive(0.3), hp).unwrap();
        assert_eq!(sim.run(), sim.run());
        assert_ne!(sim.run_seed(1).records, sim.run_seed(2).records);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let suite = ObjectiveSuite::quadratic(vec![vec![0.0], vec![2.0], vec![-1.0]], vec![1.0, 3.0, 2.0]).unwrap();
        let pi = MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, 3).unwrap(), 0.0).unwrap();
        let spec = pi.spectrum().unwrap();
        let alpha = 0.05;
        let u = UnifiedObjective::new(&suite, &pi, alpha).unwrap();
        let (star, _) = u.minimum(&spec).unwrap();
        let mut swarm = AgentSwarm::from_states(star.clone(), star.clone(), 3, 1, Some(consensus_step(&pi, &star, 1)));
        let mut g = vec![0.0; 3];
        suite.grad(&star, &mut g);
        let p = StepParams {
            option: UpdateOption::I,
            alpha,
            beta: 0.8,
            omega: OmegaMode::Fixed(0.3),
        };
        swarm.step(&pi, &p, &g).unwrap();
        for (a, b) in swarm.x_cur.iter().zip(&star) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hyperparameter_validation() {
        let base = HyperParams {
            step: StepSchedule::Constant(0.1),
            beta: 0.5,
            omega: OmegaMode::Fixed(0.5),
            option: UpdateOption::I,
            iters: 1,
            seed: 0,
        };
        assert!(base.validate().is_ok());
        assert!(HyperParams {
            step: StepSchedule::Constant(0.0),
            ..base
        }
        .validate()
        .is_err());
        assert!(HyperParams {
            step: StepSchedule::InvSqrt { b: -1.0 },
            ..base
        }
        .validate()
        .is_err());
        assert!(HyperParams { beta: 1.0, ..base }.validate().is_err());
        assert!(HyperParams {
            omega: OmegaMode::Fixed(1.2),
            ..base
        }
        .validate()
        .is_err());
        assert_eq!(StepSchedule::InvSqrt { b: 4.0 }.at(16), 0.5);
    }
}
