//! Closed-form consensus and convergence bounds.
//!
//! Every bound is written once in terms of generic symbols (gradient bound
//! G, noise σ, smoothness L, strong convexity μ, PL constant μ̂). Option I
//! passes (M, σ, L′, μ′, μ̂) and Option II passes (γ_m, σ̂, L_m, μ_m, μ̃);
//! nothing below knows which option it is serving.
//!
//! Throughout, `b = βΛ` with `Λ = ω + (1-ω)λ₂`, and `S = √(G² + σ²)`.

use std::fmt;

use thiserror::Error;

use crate::topology::SpectralInfo;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("step size must be positive, got {0}")]
    Alpha(f64),
    #[error("momentum must lie in [0, 1), got {0}")]
    Beta(f64),
    #[error("βΛ must be below 1, got {0}")]
    MomentumProduct(f64),
    #[error("λ_min of the effective mixing matrix is {0}; the consensus bound needs it positive")]
    NotPositiveDefinite(f64),
    #[error("the consensus bound needs η = λ_min(Π̃), which was not supplied")]
    MissingEta,
    #[error("{name} must be nonnegative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("smoothness must be positive, got {0}")]
    Smoothness(f64),
    #[error("step size {alpha} outside the admissible range (0, {max}]")]
    AlphaRange { alpha: f64, max: f64 },
    #[error("{0} constant not supplied")]
    MissingConstant(&'static str),
    #[error("schedule constant B must be positive, got {0}")]
    ScheduleB(f64),
    #[error("α* = {value} is not positive (grid point {index})")]
    NonPositiveAlpha { index: usize, value: f64 },
}

/// Constants feeding the closed-form bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub alpha: f64,
    pub beta: f64,
    /// Λ = ω + (1-ω)λ₂.
    pub lambda: f64,
    /// η = λ_min(ωI + (1-ω)Π). Only the consensus bound needs it.
    pub eta: Option<f64>,
    pub n_agents: usize,
    /// G: bound on the gradient norm of the tracked objective.
    pub grad_bound: f64,
    pub sigma: f64,
    pub smoothness: f64,
    pub strong_convexity: Option<f64>,
    pub pl: Option<f64>,
    /// Δ = objective(x₁) - optimum.
    pub initial_gap: f64,
}

impl BoundInputs {
    /// Inputs with Λ and η taken from a spectrum at the given ω.
    pub fn from_spectrum(spectrum: &SpectralInfo, omega: f64, alpha: f64, beta: f64, n_agents: usize) -> Self {
        Self {
            alpha,
            beta,
            lambda: spectrum.lambda_cap(omega),
            eta: Some(spectrum.lambda_min_effective(omega)),
            n_agents,
            grad_bound: 0.0,
            sigma: 0.0,
            smoothness: 1.0,
            strong_convexity: None,
            pl: None,
            initial_gap: 0.0,
        }
    }

    /// b = βΛ.
    pub fn momentum_product(&self) -> f64 {
        self.beta * self.lambda
    }

    /// S² = G² + σ².
    pub fn noise_energy(&self) -> f64 {
        self.grad_bound * self.grad_bound + self.sigma * self.sigma
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(BoundError::Alpha(self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(BoundError::Beta(self.beta));
        }
        let b = self.momentum_product();
        if !(b < 1.0) {
            return Err(BoundError::MomentumProduct(b));
        }
        for (name, value) in [
            ("gradient bound", self.grad_bound),
            ("sigma", self.sigma),
            ("initial gap", self.initial_gap),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(BoundError::Negative { name, value });
            }
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(BoundError::Smoothness(self.smoothness));
        }
        Ok(())
    }
}

/// How a bound varies with the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundValues {
    Scalar(f64),
    /// Entry `i` is the bound at `k = i + 1`.
    Trajectory(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub values: BoundValues,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub fn scalar(name: impl Into<String>, value: f64, inputs: BoundInputs) -> Self {
        Self {
            name: name.into(),
            values: BoundValues::Scalar(value),
            inputs,
        }
    }

    pub fn trajectory(name: impl Into<String>, values: Vec<f64>, inputs: BoundInputs) -> Self {
        Self {
            name: name.into(),
            values: BoundValues::Trajectory(values),
            inputs,
        }
    }

    /// Bound at iteration `k ≥ 1`; trajectories hold their last value past
    /// their end.
    pub fn at(&self, k: usize) -> f64 {
        match &self.values {
            BoundValues::Scalar(v) => *v,
            BoundValues::Trajectory(v) => v[(k.max(1) - 1).min(v.len() - 1)],
        }
    }

    /// Values for `k = 1..=k_max`.
    pub fn series(&self, k_max: usize) -> Vec<f64> {
        (1..=k_max).map(|k| self.at(k)).collect()
    }
}

/// Denominator convention for the PL trajectory's residual term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlVariant {
    /// `R/(2αμ̂²)`, as printed.
    #[default]
    Squared,
    /// `R/(2αμ̂)`, matching the contraction factor `1 - 2αμ̂`.
    Linear,
}

impl fmt::Display for PlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlVariant::Squared => "squared",
            PlVariant::Linear => "linear",
        })
    }
}

/// Per-agent consensus error bound
/// `8α√N·S / (√(η(1-b))·(1-√b))`.
pub fn consensus_bound(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let eta = inputs.eta.ok_or(BoundError::MissingEta)?;
    if !(eta > 0.0) {
        return Err(BoundError::NotPositiveDefinite(eta));
    }
    let b = inputs.momentum_product();
    let s = inputs.noise_energy().sqrt();
    Ok(8.0 * inputs.alpha * (inputs.n_agents as f64).sqrt() * s / ((eta * (1.0 - b)).sqrt() * (1.0 - b.sqrt())))
}

/// Bound on `E‖x_{k+1} - x_k‖²`: `(1 - b^{k+1})² α² S² / (1-b)²`, or the
/// `k → ∞` form `α² S² / (1-b)²` when `k` is `None`.
pub fn displacement_bound(inputs: &BoundInputs, k: Option<usize>) -> Result<f64, BoundError> {
    inputs.validate()?;
    let b = inputs.momentum_product();
    let loose = inputs.alpha.powi(2) * inputs.noise_energy() / (1.0 - b).powi(2);
    Ok(match k {
        Some(k) => (1.0 - b.powi(k as i32 + 1)).powi(2) * loose,
        None => loose,
    })
}

/// `R = αGσ + αG·S/(1-b) + Lα²S²/(2(1-b)²)`.
pub fn r_constant(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    Ok(r_terms(inputs, 1.0, 1.0))
}

/// k-dependent residual of the one-step gap recursion:
/// `αGσ + αG·S(1-b^k)/(1-b) + L(1-b^{k+1})²α²S²/(2(1-b)²)`.
pub fn r_constant_at(inputs: &BoundInputs, k: usize) -> Result<f64, BoundError> {
    inputs.validate()?;
    let b = inputs.momentum_product();
    Ok(r_terms(
        inputs,
        1.0 - b.powi(k as i32),
        (1.0 - b.powi(k as i32 + 1)).powi(2),
    ))
}

fn r_terms(inputs: &BoundInputs, momentum_factor: f64, displacement_factor: f64) -> f64 {
    let b = inputs.momentum_product();
    let (a, g, sigma, l) = (inputs.alpha, inputs.grad_bound, inputs.sigma, inputs.smoothness);
    let s2 = inputs.noise_energy();
    a * g * sigma
        + a * g * s2.sqrt() * momentum_factor / (1.0 - b)
        + displacement_factor * l * a * a * s2 / (2.0 * (1.0 - b).powi(2))
}

fn strong_convexity(inputs: &BoundInputs) -> Result<f64, BoundError> {
    match inputs.strong_convexity {
        Some(mu) if mu > 0.0 && mu.is_finite() => Ok(mu),
        Some(mu) => Err(BoundError::Negative {
            name: "strong convexity",
            value: mu,
        }),
        None => Err(BoundError::MissingConstant("strong convexity")),
    }
}

/// Contraction factor `1 - 2αμ²/L` of the strongly convex gap recursion,
/// after checking `0 < α ≤ L/(2μ²)`.
pub fn strongly_convex_rate(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    let mu = strong_convexity(inputs)?;
    let max = inputs.smoothness / (2.0 * mu * mu);
    if inputs.alpha > max {
        return Err(BoundError::AlphaRange {
            alpha: inputs.alpha,
            max,
        });
    }
    Ok(1.0 - 2.0 * inputs.alpha * mu * mu / inputs.smoothness)
}

/// `RL/(2αμ²)`, the level the strongly convex bound settles to.
pub fn strongly_convex_asymptote(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let mu = strong_convexity(inputs)?;
    Ok(r_constant(inputs)? * inputs.smoothness / (2.0 * inputs.alpha * mu * mu))
}

/// Gap bound for `k = 1..=k_max`. The loose form is
/// `A + c^{k-1}(Δ - A)` with `c = 1 - 2αμ²/L` and `A = RL/(2αμ²)`. The tight
/// form unrolls `T_{k+1} = c·T_k + R_k` from `T_1 = Δ` using
/// [`r_constant_at`].
pub fn strongly_convex_trajectory(inputs: &BoundInputs, k_max: usize, tight: bool) -> Result<Vec<f64>, BoundError> {
    let c = strongly_convex_rate(inputs)?;
    let delta = inputs.initial_gap;
    if tight {
        let mut out = Vec::with_capacity(k_max);
        let mut t = delta;
        for k in 1..=k_max {
            out.push(t);
            t = c * t + r_constant_at(inputs, k)?;
        }
        Ok(out)
    } else {
        let a = strongly_convex_asymptote(inputs)?;
        Ok((1..=k_max).map(|k| a + c.powi(k as i32 - 1) * (delta - a)).collect())
    }
}

/// Gap bound under the PL condition for `k = 1..=k_max`:
/// `A + (1 - 2αμ̂)^{k-1}(Δ - A)` with `A = R/(2αμ̂²)` (or `R/(2αμ̂)` for
/// [`PlVariant::Linear`]), for `0 < α ≤ 1/(2μ̂)`.
pub fn pl_trajectory(inputs: &BoundInputs, k_max: usize, variant: PlVariant) -> Result<Vec<f64>, BoundError> {
    inputs.validate()?;
    let mu = match inputs.pl {
        Some(mu) if mu > 0.0 && mu.is_finite() => mu,
        Some(mu) => {
            return Err(BoundError::Negative {
                name: "PL constant",
                value: mu,
            })
        }
        None => return Err(BoundError::MissingConstant("PL")),
    };
    let max = 1.0 / (2.0 * mu);
    if inputs.alpha > max {
        return Err(BoundError::AlphaRange {
            alpha: inputs.alpha,
            max,
        });
    }
    let c = 1.0 - 2.0 * inputs.alpha * mu;
    let r = r_constant(inputs)?;
    let a = match variant {
        PlVariant::Squared => r / (2.0 * inputs.alpha * mu * mu),
        PlVariant::Linear => r / (2.0 * inputs.alpha * mu),
    };
    Ok((1..=k_max)
        .map(|k| a + c.powi(k as i32 - 1) * (inputs.initial_gap - a))
        .collect())
}

/// Raw non-convex step size
/// `[S²(1-b²) - σ²(1-b)² - 2(1-b)bσS] / (L S²)`, without a sign check.
pub fn alpha_star_formula(grad_bound: f64, sigma: f64, b: f64, smoothness: f64) -> f64 {
    let s2 = grad_bound * grad_bound + sigma * sigma;
    let s = s2.sqrt();
    (s2 * (1.0 - b * b) - sigma * sigma * (1.0 - b).powi(2) - 2.0 * (1.0 - b) * b * sigma * s) / (smoothness * s2)
}

/// The non-convex step size α*. With σ = 0 this is `(1 - b²)/L`. Only the
/// momentum, G, σ and L fields of `inputs` are read.
pub fn nonconvex_alpha_star(inputs: &BoundInputs) -> Result<f64, BoundError> {
    let b = inputs.momentum_product();
    if !(b < 1.0) {
        return Err(BoundError::MomentumProduct(b));
    }
    if !(inputs.smoothness > 0.0) {
        return Err(BoundError::Smoothness(inputs.smoothness));
    }
    let value = if inputs.sigma == 0.0 {
        (1.0 - b * b) / inputs.smoothness
    } else {
        alpha_star_formula(inputs.grad_bound, inputs.sigma, b, inputs.smoothness)
    };
    if !(value > 0.0) {
        return Err(BoundError::NonPositiveAlpha { index: 0, value });
    }
    Ok(value)
}

/// α* for Option I, where the smoothness `L′ = L_m + (1-λ₂)/α` itself
/// depends on α. Solving `α = ratio / L′(α)` gives
/// `α = (ratio - (1-λ₂)) / L_m`, where `ratio = α*·L` is the
/// smoothness-free numerator. `None` when `ratio ≤ 1-λ₂` (no positive
/// solution).
pub fn self_consistent_alpha_star(inputs: &BoundInputs, base_smoothness: f64, lambda2: f64) -> Option<f64> {
    let b = inputs.momentum_product();
    let ratio = if inputs.sigma == 0.0 {
        1.0 - b * b
    } else {
        alpha_star_formula(inputs.grad_bound, inputs.sigma, b, 1.0)
    };
    let alpha = (ratio - (1.0 - lambda2)) / base_smoothness;
    (alpha > 0.0).then_some(alpha)
}

/// Envelope `2Δ/(α(k+1))` on the average squared gradient norm over the
/// first `k + 1` iterates.
pub fn nonconvex_avg_grad_bound(inputs: &BoundInputs, k: usize) -> f64 {
    2.0 * inputs.initial_gap / (inputs.alpha * (k as f64 + 1.0))
}

/// `Q = 2Δ/√B + √B·L·S²/(1-b)²` for the schedule `α_k = √(B/k)`.
pub fn simpler_step_q(inputs: &BoundInputs, b_sched: f64) -> Result<f64, BoundError> {
    if !(b_sched > 0.0 && b_sched.is_finite()) {
        return Err(BoundError::ScheduleB(b_sched));
    }
    let b = inputs.momentum_product();
    if !(b < 1.0) {
        return Err(BoundError::MomentumProduct(b));
    }
    let root = b_sched.sqrt();
    Ok(2.0 * inputs.initial_gap / root + root * inputs.smoothness * inputs.noise_energy() / (1.0 - b).powi(2))
}

/// `Q/√k`.
pub fn simpler_step_bound(inputs: &BoundInputs, b_sched: f64, k: usize) -> Result<f64, BoundError> {
    Ok(simpler_step_q(inputs, b_sched)? / (k.max(1) as f64).sqrt())
}

/// Minimizer of Q over B: `B* = 2Δ(1-b)²/(L S²)`.
pub fn optimal_schedule_b(inputs: &BoundInputs) -> f64 {
    let b = inputs.momentum_product();
    2.0 * inputs.initial_gap * (1.0 - b).powi(2) / (inputs.smoothness * inputs.noise_energy())
}

/// `Q(B*) = 2√(2ΔL S²)/(1-b)`.
pub fn optimal_simpler_step_q(inputs: &BoundInputs) -> f64 {
    let b = inputs.momentum_product();
    2.0 * (2.0 * inputs.initial_gap * inputs.smoothness * inputs.noise_energy()).sqrt() / (1.0 - b)
}

/// One point of an α* positivity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPoint {
    pub grad_bound: f64,
    pub sigma: f64,
    pub beta: f64,
    pub lambda: f64,
    pub smoothness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub points: usize,
    pub min_alpha: f64,
    pub argmin: usize,
}

/// Evaluates the raw α* formula on each grid point and fails on the first
/// non-positive value.
pub fn verify_alpha_positivity(grid: &[AlphaPoint]) -> Result<PositivityReport, BoundError> {
    let mut report = PositivityReport {
        points: grid.len(),
        min_alpha: f64::INFINITY,
        argmin: 0,
    };
    for (index, p) in grid.iter().enumerate() {
        let b = p.beta * p.lambda;
        if !(b < 1.0) {
            return Err(BoundError::MomentumProduct(b));
        }
        let value = alpha_star_formula(p.grad_bound, p.sigma, b, p.smoothness);
        if !(value > 0.0) {
            return Err(BoundError::NonPositiveAlpha { index, value });
        }
        if value < report.min_alpha {
            report.min_alpha = value;
            report.argmin = index;
        }
    }
    Ok(report)
}

/// Additive slack of the one-step descent inequality (everything except the
/// `-(α/2)E‖∇𝓕‖²` term):
///
/// `(Lα² - α)S²/(2(1-b)²) + ασ²/2 + ασSb/(1-b) + αb²S²/(2(1-b)²)`.
///
/// With `Some(k)` the three momentum terms carry `(1-b^{k+1})²`, `(1-b^k)`
/// and `(1-b^k)²` respectively.
pub fn lemma4_descent_bound(inputs: &BoundInputs, k: Option<usize>) -> Result<f64, BoundError> {
    inputs.validate()?;
    let b = inputs.momentum_product();
    let (a, sigma, l) = (inputs.alpha, inputs.sigma, inputs.smoothness);
    let s2 = inputs.noise_energy();
    let (f1, f2, f3) = match k {
        Some(k) => {
            let bk = b.powi(k as i32);
            ((1.0 - b * bk).powi(2), 1.0 - bk, (1.0 - bk).powi(2))
        }
        None => (1.0, 1.0, 1.0),
    };
    let denom = 2.0 * (1.0 - b).powi(2);
    Ok(f1 * (l * a * a - a) * s2 / denom
        + a * sigma * sigma / 2.0
        + f2 * a * sigma * s2.sqrt() * b / (1.0 - b)
        + f3 * a * b * b * s2 / denom)
}
