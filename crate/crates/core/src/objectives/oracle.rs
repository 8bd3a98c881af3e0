use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ObjectiveError, ObjectiveSuite};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Exact gradient plus N(0, (σ²/d) I), so that E‖g - ∇f_j‖² = σ².
    Additive { sigma: f64 },
    /// Average of `batch` per-sample gradients drawn without replacement.
    Minibatch { batch: usize },
}

/// Stochastic first-order oracle for one agent's local loss. Holds no RNG of
/// its own; callers pass the agent's stream so draws do not depend on the
/// order agents are visited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticOracle {
    pub model: NoiseModel,
}

impl StochasticOracle {
    pub fn additive(sigma: f64) -> Self {
        Self {
            model: NoiseModel::Additive { sigma },
        }
    }

    pub fn minibatch(batch: usize) -> Self {
        Self {
            model: NoiseModel::Minibatch { batch },
        }
    }

    pub fn exact() -> Self {
        Self::additive(0.0)
    }

    /// Per-agent noise level σ when the model fixes it exactly.
    pub fn sigma(&self) -> Option<f64> {
        match self.model {
            NoiseModel::Additive { sigma } => Some(sigma),
            NoiseModel::Minibatch { .. } => None,
        }
    }

    /// Checks the oracle is usable with every agent of `suite`.
    pub fn validate(&self, suite: &ObjectiveSuite) -> Result<(), ObjectiveError> {
        if let NoiseModel::Minibatch { batch } = self.model {
            for agent in 0..suite.n_agents() {
                let available = suite.sample_count(agent);
                if batch == 0 || batch > available {
                    return Err(ObjectiveError::BatchTooLarge {
                        agent,
                        batch,
                        available,
                    });
                }
            }
        }
        Ok(())
    }

    /// One stochastic gradient of `f_agent` at `x`, written into `out`.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        suite: &ObjectiveSuite,
        agent: usize,
        x: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<(), ObjectiveError> {
        match self.model {
            NoiseModel::Additive { sigma } => {
                suite.local_grad(agent, x, out);
                if sigma > 0.0 {
                    let scale = sigma / (out.len() as f64).sqrt();
                    for o in out.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        *o += scale * z;
                    }
                }
            }
            NoiseModel::Minibatch { batch } => {
                let available = suite.sample_count(agent);
                if batch == 0 || batch > available {
                    return Err(ObjectiveError::BatchTooLarge {
                        agent,
                        batch,
                        available,
                    });
                }
                let idx: Vec<usize> = if batch == available {
                    (0..available).collect()
                } else {
                    let mut v = rand::seq::index::sample(rng, available, batch).into_vec();
                    // ascending order keeps the summation order canonical
                    v.sort_unstable();
                    v
                };
                suite.batch_grad(agent, &idx, x, out);
            }
        }
        Ok(())
    }
}
