//! Turning a [`RunConfig`] into simulations, bound reports, output files and
//! sweep summaries.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use thiserror::Error;

use super::config::{
    ConfigError, DataSource, GradBoundSetting, ObjectiveSetting, OracleSetting, PartitionKind, RunConfig,
    TopologySetting,
};
use super::trace_io::{self, BoundsFile, Metadata, TraceFile, TraceIoError, TraceRow};
use crate::bounds::{self, BoundError, BoundInputs, BoundReport};
use crate::objectives::{
    self, partition_iid, partition_noniid, Dataset, ObjectiveClass, ObjectiveError, ObjectiveSuite, StochasticOracle,
    UnifiedObjective,
};
use crate::optimizer::{
    AgentSwarm, HyperParams, OmegaMode, RunStatus, RunTrace, SimError, Simulation, StepSchedule, TraceRecord,
    UpdateOption,
};
use crate::topology::{MixingMatrix, Topology, TopologyError, TopologyKind};
use crate::verify::{check_bound_domination, DominationReport, VerifyError};

/// Iterations of the pilot run used to measure the gradient bound and the
/// mean adaptive ω.
pub const PILOT_ITERS: usize = 200;
/// Inflation applied to the largest pilot gradient norm.
pub const PILOT_INFLATION: f64 = 1.05;

pub const PROP1_CONSENSUS: &str = "prop1_consensus";
pub const LEMMA2_STEP_SQ: &str = "lemma2_step_sq";
pub const COR1_GAP: &str = "cor1_gap";
pub const THM1_TIGHT_GAP: &str = "thm1_tight_gap";
pub const THM2_GAP: &str = "thm2_gap";
pub const THM3_AVG_GRAD: &str = "thm3_avg_grad";
pub const SIMPLER_STEP_AVG_GRAD: &str = "simpler_step_avg_grad";

/// Bounds `check` compares by default. The displacement bound carries the
/// disagreement-subspace factor Λ, but the consensus component of a step
/// contracts only by β, so it is checked only on request.
pub const DEFAULT_CHECKED: &[&str] = &[
    PROP1_CONSENSUS,
    COR1_GAP,
    THM1_TIGHT_GAP,
    THM2_GAP,
    THM3_AVG_GRAD,
    SIMPLER_STEP_AVG_GRAD,
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("objective: {0}")]
    Objective(#[from] ObjectiveError),
    #[error("simulation: {0}")]
    Simulation(#[from] SimError),
    #[error("bounds: {0}")]
    Bound(#[from] BoundError),
    #[error("{0}")]
    Io(#[from] TraceIoError),
    #[error("{0}")]
    Invalid(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(TraceIoError::Io(e))
    }
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn build_mixing(config: &RunConfig, base_dir: &Path) -> Result<MixingMatrix, HarnessError> {
    let n = config.topology.n;
    let topology = match &config.topology.kind {
        TopologySetting::Full => Topology::build(TopologyKind::Full, n)?,
        TopologySetting::Ring => Topology::build(TopologyKind::Ring, n)?,
        TopologySetting::Bipartite { left } => {
            let left = left.unwrap_or(n / 2);
            Topology::build(
                TopologyKind::Bipartite {
                    left,
                    right: n.saturating_sub(left),
                },
                n,
            )?
        }
        TopologySetting::EdgeList(path) => {
            let t = Topology::load_edge_list(&resolve(base_dir, path))?;
            if t.n() != n {
                return Err(HarnessError::Invalid(format!(
                    "edge list has {} agents but topology.n = {n}",
                    t.n()
                )));
            }
            t
        }
    };
    Ok(MixingMatrix::metropolis(&topology, config.topology.laziness)?)
}

pub fn build_suite(config: &RunConfig, base_dir: &Path) -> Result<ObjectiveSuite, HarnessError> {
    let n = config.topology.n;
    let check_len = |what: &str, len: usize| {
        if len == n {
            Ok(())
        } else {
            Err(HarnessError::Invalid(format!(
                "{what} lists {len} agents but topology.n = {n}"
            )))
        }
    };
    let mut suite = match &config.objective.setting {
        ObjectiveSetting::Quadratic { targets, curvatures } => {
            check_len("objective.targets", targets.len())?;
            let curvatures = curvatures.clone().unwrap_or_else(|| vec![1.0; n]);
            check_len("objective.curvatures", curvatures.len())?;
            ObjectiveSuite::quadratic(targets.clone(), curvatures)?
        }
        ObjectiveSetting::Pl { shifts } => {
            check_len("objective.shifts", shifts.len())?;
            ObjectiveSuite::pl(shifts.clone())?
        }
        ObjectiveSetting::Logistic {
            source,
            partition,
            lambda_reg,
            positive_class,
        } => {
            let (data, seed) = match source {
                DataSource::File(p) => (Dataset::load_csv(&resolve(base_dir, p))?, 0),
                DataSource::Synthetic {
                    samples,
                    features,
                    classes,
                    seed,
                } => (
                    objectives::make_synthetic_dataset(*seed, *samples, *features, *classes)?,
                    *seed,
                ),
            };
            let part = match partition {
                PartitionKind::Iid => partition_iid(&data, n, seed)?,
                PartitionKind::NonIid => partition_noniid(&data, n)?,
            };
            ObjectiveSuite::logistic(&data, &part, *lambda_reg, *positive_class)?
        }
    };
    if let GradBoundSetting::Value(m) = config.objective.grad_bound {
        suite = suite.with_grad_bound(m);
    }
    if let Some(pl) = config.objective.pl {
        suite = suite.with_pl_constant(pl);
    }
    Ok(suite)
}

pub fn build_oracle(config: &RunConfig) -> StochasticOracle {
    match config.oracle.setting {
        OracleSetting::Additive { sigma } => StochasticOracle::additive(sigma),
        OracleSetting::Minibatch { batch } => StochasticOracle::minibatch(batch),
    }
}

/// Measurements from a short run at the configured settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotStats {
    /// Largest ‖∇𝓕‖ (Option I) or ‖∇F‖ (Option II) seen.
    pub max_grad_norm: f64,
    pub mean_omega: f64,
}

/// Bounds that could be evaluated, plus the ones left out and why.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSet {
    pub inputs: BoundInputs,
    pub reports: Vec<BoundReport>,
    pub skipped: Vec<(String, String)>,
    /// ω used for Λ and η (the pilot mean when ω is adaptive).
    pub omega: f64,
}

/// A configured experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub sim: Simulation,
    pub hash: String,
}

impl Experiment {
    pub fn from_config(config: &RunConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        let mixing = build_mixing(config, base_dir)?;
        let suite = build_suite(config, base_dir)?;
        let hp = HyperParams {
            step: config.hp.step,
            beta: config.hp.beta,
            omega: config.hp.omega,
            option: config.hp.option,
            iters: config.hp.iters,
            seed: config.hp.seed,
        };
        let sim = Simulation::new(mixing, suite, build_oracle(config), hp)?;
        Ok(Self {
            config: config.clone(),
            sim,
            hash: config.hash(),
        })
    }

    /// Seeds `hp.seed, hp.seed + 1, ...`.
    pub fn seeds(&self, count: usize) -> Vec<u64> {
        (0..count as u64).map(|i| self.config.hp.seed.wrapping_add(i)).collect()
    }

    pub fn run_seeds(&self, count: usize) -> Vec<(u64, RunTrace)> {
        self.seeds(count)
            .into_par_iter()
            .map(|s| (s, self.sim.run_seed(s)))
            .collect()
    }

    pub fn pilot(&self) -> Result<PilotStats, HarnessError> {
        let mut sim = self.sim.clone();
        sim.hp.iters = PILOT_ITERS;
        let trace = sim.run();
        if let RunStatus::Aborted(e) = &trace.status {
            return Err(HarnessError::Invalid(format!("pilot run aborted: {e}")));
        }
        let max_sq = trace.records.iter().map(|r| r.grad_norm_sq).fold(0.0, f64::max);
        let mean_omega = trace.records.iter().map(|r| r.omega_used).sum::<f64>() / trace.records.len().max(1) as f64;
        debug!("pilot: max grad norm {}, mean omega {}", max_sq.sqrt(), mean_omega);
        Ok(PilotStats {
            max_grad_norm: max_sq.sqrt(),
            mean_omega,
        })
    }

    /// Step size used in the penalty and in every bound (`α`, or `√B` for a
    /// schedule).
    pub fn reference_alpha(&self) -> f64 {
        self.sim.hp.step.reference()
    }

    /// Stacked noise level: the per-agent σ (or declared σ bound) times √N.
    pub fn stacked_sigma(&self) -> Result<f64, HarnessError> {
        let per_agent =
            match self.config.oracle.setting {
                OracleSetting::Additive { sigma } => self.config.oracle.sigma_bound.unwrap_or(sigma),
                OracleSetting::Minibatch { .. } => self.config.oracle.sigma_bound.ok_or_else(|| {
                    HarnessError::Invalid("minibatch bounds need a declared oracle.sigma_bound".into())
                })?,
            };
        Ok(per_agent * (self.sim.suite.n_agents() as f64).sqrt())
    }

    pub fn bound_inputs(&self) -> Result<(BoundInputs, f64), HarnessError> {
        let sim = &self.sim;
        let needs_pilot = matches!(self.config.objective.grad_bound, GradBoundSetting::Auto)
            || !matches!(sim.hp.omega, OmegaMode::Fixed(_));
        let pilot = if needs_pilot { Some(self.pilot()?) } else { None };
        let grad_bound = match self.config.objective.grad_bound {
            GradBoundSetting::Value(m) => m,
            GradBoundSetting::Auto => PILOT_INFLATION * pilot.expect("pilot ran").max_grad_norm,
        };
        let omega = match sim.hp.omega {
            OmegaMode::Fixed(w) => w,
            _ => pilot.expect("pilot ran").mean_omega,
        };
        let alpha = self.reference_alpha();
        let n = sim.suite.n_agents();
        let mut inputs = BoundInputs::from_spectrum(&sim.spectrum, omega, alpha, sim.hp.beta, n);
        inputs.grad_bound = grad_bound;
        inputs.sigma = self.stacked_sigma()?;
        let constants = sim.suite.constants();
        let strongly_convex = sim.suite.class() == ObjectiveClass::StronglyConvex;
        match sim.hp.option {
            UpdateOption::I => {
                let u = UnifiedObjective::new(&sim.suite, &sim.mixing, alpha)?;
                inputs.smoothness = u.l_prime(&sim.spectrum);
                inputs.strong_convexity = strongly_convex.then(|| u.mu_prime(&sim.spectrum));
            }
            UpdateOption::II => {
                inputs.smoothness = constants.smoothness;
                inputs.strong_convexity = strongly_convex.then_some(constants.strong_convexity);
            }
        }
        inputs.pl = constants.pl;
        let zeros = vec![0.0; n * sim.suite.dim()];
        inputs.initial_gap = (sim.tracked(&zeros).0 - sim.reference.objective_min).max(0.0);
        Ok((inputs, omega))
    }

    pub fn bound_set(&self) -> Result<BoundSet, HarnessError> {
        let (inputs, omega) = self.bound_inputs()?;
        let k_max = self.sim.hp.iters;
        let mut reports = Vec::new();
        let mut skipped = Vec::new();

        let consensus = bounds::consensus_bound(&inputs).map_err(|e| match e {
            BoundError::NotPositiveDefinite(eta) => HarnessError::Invalid(format!(
                "λ_min(ωI + (1-ω)Π) = {eta:.6} ≤ 0 at ω = {omega}; the consensus bound needs a positive \
                 definite effective mixing matrix (raise ω or the laziness)"
            )),
            other => other.into(),
        })?;
        reports.push(BoundReport::scalar(PROP1_CONSENSUS, consensus, inputs));
        let steps = (1..=k_max)
            .map(|k| bounds::displacement_bound(&inputs, Some(k)))
            .collect::<Result<_, _>>()?;
        reports.push(BoundReport::trajectory(LEMMA2_STEP_SQ, steps, inputs));

        let constant_step = matches!(self.sim.hp.step, StepSchedule::Constant(_));
        match self.sim.suite.class() {
            ObjectiveClass::StronglyConvex if constant_step => {
                match bounds::strongly_convex_trajectory(&inputs, k_max, false) {
                    Ok(t) => {
                        reports.push(BoundReport::trajectory(COR1_GAP, t, inputs));
                        let tight = bounds::strongly_convex_trajectory(&inputs, k_max, true)?;
                        reports.push(BoundReport::trajectory(THM1_TIGHT_GAP, tight, inputs));
                    }
                    Err(e) => {
                        skipped.push((COR1_GAP.to_string(), e.to_string()));
                        skipped.push((THM1_TIGHT_GAP.to_string(), e.to_string()));
                    }
                }
            }
            ObjectiveClass::Pl if constant_step => {
                match bounds::pl_trajectory(&inputs, k_max, self.config.pl_variant) {
                    Ok(t) => reports.push(BoundReport::trajectory(THM2_GAP, t, inputs)),
                    Err(e) => skipped.push((THM2_GAP.to_string(), e.to_string())),
                }
            }
            _ => {}
        }

        match self.sim.hp.step {
            StepSchedule::Constant(alpha) => match bounds::nonconvex_alpha_star(&inputs) {
                Ok(star) if alpha <= star => {
                    // row k averages k iterates, the bound's (K+1) with K = k-1
                    let env = (1..=k_max)
                        .map(|k| bounds::nonconvex_avg_grad_bound(&inputs, k - 1))
                        .collect();
                    reports.push(BoundReport::trajectory(THM3_AVG_GRAD, env, inputs));
                }
                Ok(star) => skipped.push((THM3_AVG_GRAD.to_string(), format!("alpha {alpha} above alpha* {star}"))),
                Err(e) => skipped.push((THM3_AVG_GRAD.to_string(), e.to_string())),
            },
            StepSchedule::InvSqrt { b } => {
                let env = (1..=k_max)
                    .map(|k| bounds::simpler_step_bound(&inputs, b, k))
                    .collect::<Result<_, _>>()?;
                reports.push(BoundReport::trajectory(SIMPLER_STEP_AVG_GRAD, env, inputs));
            }
        }
        info!("evaluated {} bounds, skipped {}", reports.len(), skipped.len());
        Ok(BoundSet {
            inputs,
            reports,
            skipped,
            omega,
        })
    }

    /// Metadata shared by trace and bounds files.
    pub fn metadata(&self) -> Metadata {
        let spec = &self.sim.spectrum;
        let mut meta = vec![
            ("config_hash".to_string(), self.hash.clone()),
            ("option".to_string(), self.sim.hp.option.to_string()),
            ("lambda2".to_string(), spec.lambda2().to_string()),
            ("lambda_n".to_string(), spec.lambda_n().to_string()),
        ];
        if let OmegaMode::Fixed(w) = self.sim.hp.omega {
            meta.push(("Lambda".to_string(), spec.lambda_cap(w).to_string()));
            meta.push(("eta".to_string(), spec.lambda_min_effective(w).to_string()));
        } else {
            meta.push(("omega".to_string(), "adaptive".to_string()));
        }
        meta
    }

    /// Runs every seed and writes one trace per seed plus `trace_avg.csv`
    /// (and `bounds.csv` when enabled). Returns the paths written.
    pub fn write_run(&self, out_dir: &Path, seeds: usize) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(out_dir)?;
        let runs = self.run_seeds(seeds);
        let mut written = Vec::new();
        for (seed, trace) in &runs {
            let mut meta = self.metadata();
            meta.push(("seed".into(), seed.to_string()));
            meta.push(("status".into(), status_label(&trace.status)));
            let rows: Vec<TraceRow> = trace.records.iter().map(TraceRow::from).collect();
            let path = out_dir.join(format!("trace_seed{seed}.csv"));
            trace_io::write_trace(&path, &meta, &rows)?;
            written.push(path);
        }
        let traces: Vec<&[TraceRecord]> = runs.iter().map(|(_, t)| t.records.as_slice()).collect();
        let averaged = average_traces(&traces);
        let all_ok = runs.iter().all(|(_, t)| t.is_complete());
        let mut meta = self.metadata();
        meta.push(("seed".into(), "avg".into()));
        meta.push(("seeds".into(), seeds.to_string()));
        meta.push(("status".into(), if all_ok { "ok".into() } else { "aborted".into() }));
        let path = out_dir.join("trace_avg.csv");
        trace_io::write_trace(&path, &meta, &averaged.iter().map(TraceRow::from).collect::<Vec<_>>())?;
        written.push(path);
        if self.config.output.bounds {
            written.push(self.write_bounds(out_dir)?);
        }
        Ok(written)
    }

    pub fn write_bounds(&self, out_dir: &Path) -> Result<PathBuf, HarnessError> {
        fs::create_dir_all(out_dir)?;
        let set = self.bound_set()?;
        let inputs = set.inputs;
        let mut meta = self.metadata();
        meta.extend(
            [
                ("k_max", self.sim.hp.iters.to_string()),
                ("alpha", inputs.alpha.to_string()),
                ("beta", inputs.beta.to_string()),
                ("omega_bound", set.omega.to_string()),
                ("grad_bound", inputs.grad_bound.to_string()),
                ("sigma", inputs.sigma.to_string()),
                ("smoothness", inputs.smoothness.to_string()),
                ("initial_gap", inputs.initial_gap.to_string()),
            ]
            .map(|(k, v)| (k.to_string(), v)),
        );
        if let Some(mu) = inputs.strong_convexity {
            meta.push(("strong_convexity".into(), mu.to_string()));
        }
        if let Some(pl) = inputs.pl {
            meta.push(("pl".into(), pl.to_string()));
        }
        for (name, reason) in &set.skipped {
            meta.push(("skipped".into(), format!("{name}: {reason}")));
        }
        let path = out_dir.join("bounds.csv");
        trace_io::write_bounds(&path, &meta, &set.reports, self.sim.hp.iters)?;
        Ok(path)
    }
}

fn status_label(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "ok".into(),
        RunStatus::Aborted(e) => format!("aborted ({e})"),
    }
}

/// Elementwise mean of the traces over their common prefix.
pub fn average_traces(traces: &[&[TraceRecord]]) -> Vec<TraceRecord> {
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let m = traces.len() as f64;
    (0..len)
        .map(|i| {
            let mean = |f: fn(&TraceRecord) -> f64| traces.iter().map(|t| f(&t[i])).sum::<f64>() / m;
            TraceRecord {
                k: traces[0][i].k,
                consensus_err_max: mean(|r| r.consensus_err_max),
                consensus_err_stacked: mean(|r| r.consensus_err_stacked),
                gap: mean(|r| r.gap),
                grad_norm_sq: mean(|r| r.grad_norm_sq),
                running_avg_grad: mean(|r| r.running_avg_grad),
                step_norm: mean(|r| r.step_norm),
                omega_used: mean(|r| r.omega_used),
                objective_at_mean: mean(|r| r.objective_at_mean),
                objective: mean(|r| r.objective),
            }
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("trace and bounds disagree: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Verify(#[from] VerifyError),
    #[error("unknown bound `{0}`")]
    UnknownBound(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub results: Vec<(String, DominationReport)>,
    /// The trace stopped early.
    pub aborted: bool,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        !self.aborted && self.results.iter().all(|(_, r)| r.passed())
    }
}

fn metric_for(name: &str, row: &TraceRow) -> Option<f64> {
    Some(match name {
        PROP1_CONSENSUS => row.consensus_err_max,
        LEMMA2_STEP_SQ => row.step_norm * row.step_norm,
        COR1_GAP | THM1_TIGHT_GAP | THM2_GAP => row.gap,
        THM3_AVG_GRAD | SIMPLER_STEP_AVG_GRAD => row.running_avg_grad,
        _ => return None,
    })
}

/// Compares a trace file with a bounds file from the same config.
pub fn check_files(
    trace: &TraceFile,
    bounds: &BoundsFile,
    slack: f64,
    only: Option<&[String]>,
) -> Result<CheckOutcome, CheckError> {
    let hash = |m: &std::collections::BTreeMap<String, String>| m.get("config_hash").cloned();
    match (hash(&trace.meta), hash(&bounds.meta)) {
        (Some(a), Some(b)) if a == b => {}
        (a, b) => return Err(CheckError::Mismatch(format!("config hashes {a:?} vs {b:?}"))),
    }
    let k_max: usize = bounds
        .meta
        .get("k_max")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CheckError::Mismatch("bounds file has no k_max".into()))?;
    for (name, values) in &bounds.series {
        let complete = values.len() == k_max && values.iter().enumerate().all(|(i, (k, _))| *k == i + 1);
        if !complete {
            return Err(CheckError::Mismatch(format!(
                "bound `{name}` has {} rows; expected k = 1..={k_max}",
                values.len()
            )));
        }
    }
    if trace.rows.len() > k_max {
        return Err(CheckError::Mismatch(format!(
            "trace has {} rows but bounds stop at {k_max}",
            trace.rows.len()
        )));
    }
    let aborted = trace.meta.get("status").is_some_and(|s| s != "ok");
    if !aborted && trace.rows.len() != k_max {
        return Err(CheckError::Mismatch(format!(
            "trace has {} rows, bounds have {k_max}",
            trace.rows.len()
        )));
    }

    let selected: Vec<String> = match only {
        Some(names) => {
            for n in names {
                if !bounds.series.contains_key(n) || metric_for(n, &ZERO_ROW).is_none() {
                    return Err(CheckError::UnknownBound(n.clone()));
                }
            }
            names.to_vec()
        }
        None => bounds
            .series
            .keys()
            .filter(|n| DEFAULT_CHECKED.contains(&n.as_str()))
            .cloned()
            .collect(),
    };
    let mut results = Vec::new();
    for name in selected {
        let metrics: Vec<f64> = trace
            .rows
            .iter()
            .map(|r| metric_for(&name, r).expect("checked name"))
            .collect();
        let values: Vec<f64> = bounds.series[&name]
            .iter()
            .take(metrics.len())
            .map(|(_, v)| *v)
            .collect();
        results.push((name, check_bound_domination(&metrics, &values, slack)?));
    }
    Ok(CheckOutcome { results, aborted })
}

const ZERO_ROW: TraceRow = TraceRow {
    k: 1,
    consensus_err_max: 0.0,
    consensus_err_stacked: 0.0,
    gap: 0.0,
    grad_norm_sq: 0.0,
    running_avg_grad: 0.0,
    step_norm: 0.0,
    omega_used: 0.0,
};

pub const SWEEP_HEADER: [&str; 13] = [
    "cell",
    "option",
    "topology",
    "omega",
    "beta",
    "status",
    "iters_completed",
    "final_gap",
    "final_true_gap",
    "final_agent_gap",
    "final_consensus_err",
    "mean_omega",
    "config_hash",
];

/// One cell of a sweep summary. Failed or diverged cells keep NaN metrics
/// and say why in `status`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub option: UpdateOption,
    pub topology: String,
    pub omega: String,
    pub beta: f64,
    pub status: String,
    pub iters_completed: usize,
    pub final_gap: f64,
    /// `F(x̄) - min F` at the last averaged iterate.
    pub final_true_gap: f64,
    /// Mean over agents of `F(x_j) - min F` at the final iterate, averaged
    /// over seeds. Unlike `final_true_gap` it charges for disagreement.
    pub final_agent_gap: f64,
    pub final_consensus_err: f64,
    pub mean_omega: f64,
    pub config_hash: String,
}

/// Cartesian product of the grid axes; axes left empty keep the base value.
/// An entirely empty grid has no cells.
pub fn sweep_cells(base: &RunConfig) -> Vec<RunConfig> {
    let grid = &base.sweep;
    if grid.is_empty() {
        return Vec::new();
    }
    let options = if grid.option.is_empty() {
        vec![base.hp.option]
    } else {
        grid.option.clone()
    };
    let topologies = if grid.topology.is_empty() {
        vec![base.topology.kind.clone()]
    } else {
        grid.topology.clone()
    };
    let omegas: Vec<OmegaMode> = if grid.omega.is_empty() {
        vec![base.hp.omega]
    } else {
        grid.omega.iter().map(|&w| OmegaMode::Fixed(w)).collect()
    };
    let betas = if grid.beta.is_empty() {
        vec![base.hp.beta]
    } else {
        grid.beta.clone()
    };
    let mut cells = Vec::new();
    for option in &options {
        for topo in &topologies {
            for omega in &omegas {
                for beta in &betas {
                    let mut c = base.clone();
                    c.sweep = Default::default();
                    c.hp.option = *option;
                    c.topology.kind = match (topo, &base.topology.kind) {
                        // keep an explicitly configured split
                        (TopologySetting::Bipartite { left: None }, TopologySetting::Bipartite { left }) => {
                            TopologySetting::Bipartite { left: *left }
                        }
                        _ => topo.clone(),
                    };
                    c.hp.omega = *omega;
                    c.hp.beta = *beta;
                    cells.push(c);
                }
            }
        }
    }
    cells
}

fn sweep_cell(cell: usize, config: &RunConfig, base_dir: &Path) -> SweepRow {
    let mut row = SweepRow {
        cell,
        option: config.hp.option,
        topology: config.topology.kind.name().to_string(),
        omega: match config.hp.omega {
            OmegaMode::Fixed(w) => w.to_string(),
            OmegaMode::Adaptive => "adaptive".into(),
            OmegaMode::AdaptiveGlobal => "adaptive_global".into(),
        },
        beta: config.hp.beta,
        status: String::new(),
        iters_completed: 0,
        final_gap: f64::NAN,
        final_true_gap: f64::NAN,
        final_agent_gap: f64::NAN,
        final_consensus_err: f64::NAN,
        mean_omega: f64::NAN,
        config_hash: config.hash(),
    };
    let exp = match Experiment::from_config(config, base_dir) {
        Ok(e) => e,
        Err(e) => {
            row.status = format!("error: {e}");
            return row;
        }
    };
    let runs = exp.run_seeds(config.output.seeds);
    let traces: Vec<&[TraceRecord]> = runs.iter().map(|(_, t)| t.records.as_slice()).collect();
    let avg = average_traces(&traces);
    row.status = match runs.iter().find_map(|(_, t)| match &t.status {
        RunStatus::Aborted(e) => Some(e.to_string()),
        RunStatus::Completed => None,
    }) {
        None => "ok".into(),
        Some(reason) => format!("aborted: {reason}"),
    };
    row.iters_completed = avg.len();
    if let Some(last) = avg.last() {
        if row.status == "ok" {
            row.final_gap = last.gap;
            row.final_true_gap = last.objective_at_mean - exp.sim.reference.consensus_min;
            row.final_agent_gap =
                runs.iter().map(|(_, t)| agent_gap(&exp.sim, &t.swarm)).sum::<f64>() / runs.len() as f64;
            row.final_consensus_err = last.consensus_err_max;
        }
        if !matches!(config.hp.omega, OmegaMode::Fixed(_)) {
            row.mean_omega = avg.iter().map(|r| r.omega_used).sum::<f64>() / avg.len() as f64;
        }
    }
    row
}

/// `(1/N) Σ_j F(x_j) - min F`, where `F(z) = Σ_i f_i(z)`.
fn agent_gap(sim: &Simulation, swarm: &AgentSwarm) -> f64 {
    let n = swarm.n();
    (0..n).map(|j| sim.suite.consensus_value(swarm.agent(j))).sum::<f64>() / n as f64 - sim.reference.consensus_min
}

/// Runs every cell of the sweep concurrently. Cell failures are recorded in
/// the row; the sweep itself only fails on output errors.
pub fn run_sweep(base: &RunConfig, base_dir: &Path) -> Vec<SweepRow> {
    let cells = sweep_cells(base);
    info!("sweep over {} cells", cells.len());
    cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| sweep_cell(i, c, base_dir))
        .collect()
}

pub fn render_sweep(rows: &[SweepRow]) -> Result<String, TraceIoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.cell.to_string(),
            r.option.to_string(),
            r.topology.clone(),
            r.omega.clone(),
            r.beta.to_string(),
            r.status.clone(),
            r.iters_completed.to_string(),
            r.final_gap.to_string(),
            r.final_true_gap.to_string(),
            r.final_agent_gap.to_string(),
            r.final_consensus_err.to_string(),
            r.mean_omega.to_string(),
            r.config_hash.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| TraceIoError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads `trace` and `bounds` files from disk and checks them.
pub fn check_paths(
    trace: &Path,
    bounds: &Path,
    slack: f64,
    only: Option<&[String]>,
) -> Result<Result<CheckOutcome, CheckError>, TraceIoError> {
    let t = trace_io::read_trace(trace)?;
    let b = trace_io::read_bounds(bounds)?;
    Ok(check_files(&t, &b, slack, only))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_config(extra: &str) -> RunConfig {
        RunConfig::parse(&format!(
            "topology.kind = full\ntopology.n = 3\nobjective.kind = quadratic\n\
             objective.targets = 0.1;-0.2;0.05\nhp.alpha = 0.01\nhp.beta = 0.5\nhp.omega = 0.5\n\
             hp.iters = 50\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn quadratic_dispatch() {
        let exp = Experiment::from_config(&quad_config(""), Path::new(".")).unwrap();
        let set = exp.bound_set().unwrap();
        let names: Vec<&str> = set.reports.iter().map(|r| r.name.as_str()).collect();
        assert!(names.contains(&COR1_GAP) && names.contains(&PROP1_CONSENSUS));
        assert!(!names.contains(&THM2_GAP));
        assert!((set.inputs.eta.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pl_dispatch() {
        let c = RunConfig::parse(
            "topology.kind = full\ntopology.n = 2\nobjective.kind = pl\nobjective.shifts = 2,2\n\
             hp.option = II\nhp.alpha = 0.01\nhp.beta = 0.2\nhp.omega = 0.5\nhp.iters = 20\n",
        )
        .unwrap();
        let set = Experiment::from_config(&c, Path::new("."))
            .unwrap()
            .bound_set()
            .unwrap();
        let names: Vec<&str> = set.reports.iter().map(|r| r.name.as_str()).collect();
        assert!(names.contains(&THM2_GAP));
        assert!(!names.contains(&COR1_GAP));
    }

    #[test]
    fn indefinite_effective_mixing_is_an_error() {
        let c = RunConfig::parse(
            "topology.kind = ring\ntopology.n = 4\nobjective.kind = quadratic\n\
             objective.targets = 0;1;2;3\nhp.alpha = 0.01\nhp.omega = 0\nhp.iters = 5\n",
        )
        .unwrap();
        let err = Experiment::from_config(&c, Path::new("."))
            .unwrap()
            .bound_set()
            .unwrap_err();
        assert!(err.to_string().contains("-0.333333"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn averaged_trace_is_the_mean() {
        let exp = Experiment::from_config(&quad_config("oracle.sigma = 0.3\n"), Path::new(".")).unwrap();
        let runs = exp.run_seeds(3);
        let traces: Vec<&[TraceRecord]> = runs.iter().map(|(_, t)| t.records.as_slice()).collect();
        let avg = average_traces(&traces);
        assert_eq!(avg.len(), 50);
        for (i, r) in avg.iter().enumerate() {
            let m = traces.iter().map(|t| t[i].gap).sum::<f64>() / 3.0;
            assert!((r.gap - m).abs() <= 1e-12);
        }
    }

    #[test]
    fn sweep_grid_sizes() {
        assert!(sweep_cells(&quad_config("")).is_empty());
        let c = quad_config("sweep.omega = 0,0.25,0.5,0.75,1\n");
        let rows = run_sweep(&c, Path::new("."));
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.status == "ok"));
        let c = quad_config("sweep.omega = 0,1\nsweep.option = I,II\nsweep.topology = full,ring\n");
        assert_eq!(sweep_cells(&c).len(), 8);
    }
}
