//! Flat `section.key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment line; blank lines are
//! ignored. Lists are comma separated, and per-agent vectors (quadratic
//! targets) separate agents with `;`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bounds::PlVariant;
use crate::optimizer::{OmegaMode, StepSchedule, UpdateOption};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` does not apply here ({context})")]
    NotApplicable { line: usize, key: String, context: String },
    #[error("`{key}`: invalid value {value:?} ({reason})")]
    Invalid { key: String, value: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
}

const KNOWN_KEYS: &[&str] = &[
    "topology.kind",
    "topology.n",
    "topology.laziness",
    "topology.left",
    "topology.edges",
    "objective.kind",
    "objective.targets",
    "objective.curvatures",
    "objective.shifts",
    "objective.M",
    "objective.pl",
    "objective.lambda_reg",
    "objective.dataset",
    "objective.samples",
    "objective.features",
    "objective.classes",
    "objective.data_seed",
    "objective.partition",
    "objective.positive_class",
    "oracle.mode",
    "oracle.sigma",
    "oracle.batch",
    "oracle.sigma_bound",
    "hp.option",
    "hp.schedule",
    "hp.alpha",
    "hp.B",
    "hp.beta",
    "hp.omega",
    "hp.iters",
    "hp.seed",
    "output.dir",
    "output.bounds",
    "output.seeds",
    "bounds.pl_variant",
    "sweep.omega",
    "sweep.beta",
    "sweep.topology",
    "sweep.option",
];

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySetting {
    Full,
    Ring,
    /// Complete bipartite graph; `left` defaults to `n / 2`.
    Bipartite {
        left: Option<usize>,
    },
    /// Edge-list file: first line `n`, then one `j l` pair per line.
    EdgeList(PathBuf),
}

impl TopologySetting {
    pub fn name(&self) -> &'static str {
        match self {
            TopologySetting::Full => "full",
            TopologySetting::Ring => "ring",
            TopologySetting::Bipartite { .. } => "bipartite",
            TopologySetting::EdgeList(_) => "edges",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub kind: TopologySetting,
    pub n: usize,
    pub laziness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Iid,
    NonIid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic {
        samples: usize,
        features: usize,
        classes: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSetting {
    Quadratic {
        targets: Vec<Vec<f64>>,
        curvatures: Option<Vec<f64>>,
    },
    Pl {
        shifts: Vec<f64>,
    },
    Logistic {
        source: DataSource,
        partition: PartitionKind,
        lambda_reg: f64,
        positive_class: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradBoundSetting {
    /// Measured by a pilot run.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub setting: ObjectiveSetting,
    pub grad_bound: GradBoundSetting,
    /// Declared PL constant overriding the suite's own.
    pub pl: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleSetting {
    Additive { sigma: f64 },
    Minibatch { batch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub setting: OracleSetting,
    /// Declared per-agent variance bound, needed for bounds in minibatch
    /// mode.
    pub sigma_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpConfig {
    pub option: UpdateOption,
    pub step: StepSchedule,
    pub beta: f64,
    pub omega: OmegaMode,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub bounds: bool,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub omega: Vec<f64>,
    pub beta: Vec<f64>,
    pub topology: Vec<TopologySetting>,
    pub option: Vec<UpdateOption>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.omega.is_empty() && self.beta.is_empty() && self.topology.is_empty() && self.option.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: TopologyConfig,
    pub objective: ObjectiveConfig,
    pub oracle: OracleConfig,
    pub hp: HpConfig,
    pub output: OutputConfig,
    pub pl_variant: PlVariant,
    pub sweep: SweepGrid,
}

/// Raw assignments with their line numbers; keys are removed as they are
/// consumed so leftovers can be reported.
struct Fields(BTreeMap<String, (usize, String)>);

impl Fields {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: trimmed.to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: trimmed.to_string(),
                });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if map.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self(map))
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key).map(|(_, v)| v)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| invalid(key, &v, "not a valid number")),
        }
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T, ConfigError> {
        self.take_parsed(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn take_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => parse_list(&v).map(Some).map_err(|r| invalid(key, &v, &r)),
        }
    }

    /// Errors on the first key that was not consumed.
    fn finish(self, context: &str) -> Result<(), ConfigError> {
        match self.0.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(ConfigError::NotApplicable {
                line,
                key,
                context: context.to_string(),
            }),
        }
    }

    fn reject(&mut self, keys: &[&str], context: &str) -> Result<(), ConfigError> {
        for key in keys {
            if let Some((line, _)) = self.0.get(*key) {
                return Err(ConfigError::NotApplicable {
                    line: *line,
                    key: key.to_string(),
                    context: context.to_string(),
                });
            }
        }
        Ok(())
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {:?}", t.trim()))
        })
        .collect()
}

fn parse_targets(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.split(';').map(|agent| parse_list(agent.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, v, "expected true or false")),
    }
}

fn parse_option(key: &str, v: &str) -> Result<UpdateOption, ConfigError> {
    match v {
        "I" | "1" => Ok(UpdateOption::I),
        "II" | "2" => Ok(UpdateOption::II),
        _ => Err(invalid(key, v, "expected I or II")),
    }
}

fn parse_sweep_topology(key: &str, v: &str) -> Result<TopologySetting, ConfigError> {
    match v {
        "full" => Ok(TopologySetting::Full),
        "ring" => Ok(TopologySetting::Ring),
        "bipartite" => Ok(TopologySetting::Bipartite { left: None }),
        _ => Err(invalid(key, v, "expected full, ring or bipartite")),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut f = Fields::parse(text)?;

        let topo_kind = f.take("topology.kind").unwrap_or_else(|| "full".into());
        let kind = match topo_kind.as_str() {
            "full" => TopologySetting::Full,
            "ring" => TopologySetting::Ring,
            "bipartite" => TopologySetting::Bipartite {
                left: f.take_parsed("topology.left")?,
            },
            "edges" => TopologySetting::EdgeList(PathBuf::from(
                f.take("topology.edges")
                    .ok_or_else(|| ConfigError::Missing("topology.edges".into()))?,
            )),
            other => {
                return Err(invalid(
                    "topology.kind",
                    other,
                    "expected full, ring, bipartite or edges",
                ))
            }
        };
        f.reject(
            &["topology.left", "topology.edges"],
            &format!("topology.kind = {topo_kind}"),
        )?;
        let topology = TopologyConfig {
            kind,
            n: f.required("topology.n")?,
            laziness: f.take_parsed("topology.laziness")?.unwrap_or(0.0),
        };

        let obj_kind = f
            .take("objective.kind")
            .ok_or_else(|| ConfigError::Missing("objective.kind".into()))?;
        let setting = match obj_kind.as_str() {
            "quadratic" => {
                let raw = f
                    .take("objective.targets")
                    .ok_or_else(|| ConfigError::Missing("objective.targets".into()))?;
                let targets = parse_targets(&raw).map_err(|r| invalid("objective.targets", &raw, &r))?;
                ObjectiveSetting::Quadratic {
                    targets,
                    curvatures: f.take_list("objective.curvatures")?,
                }
            }
            "pl" => ObjectiveSetting::Pl {
                shifts: f
                    .take_list("objective.shifts")?
                    .ok_or_else(|| ConfigError::Missing("objective.shifts".into()))?,
            },
            "logistic" => {
                let source = match f.take("objective.dataset") {
                    Some(path) => {
                        f.reject(
                            &[
                                "objective.samples",
                                "objective.features",
                                "objective.classes",
                                "objective.data_seed",
                            ],
                            "objective.dataset is set",
                        )?;
                        DataSource::File(PathBuf::from(path))
                    }
                    None => DataSource::Synthetic {
                        samples: f.take_parsed("objective.samples")?.unwrap_or(400),
                        features: f.take_parsed("objective.features")?.unwrap_or(5),
                        classes: f.take_parsed("objective.classes")?.unwrap_or(2),
                        seed: f.take_parsed("objective.data_seed")?.unwrap_or(0),
                    },
                };
                let partition = match f.take("objective.partition").as_deref() {
                    None | Some("iid") => PartitionKind::Iid,
                    Some("noniid") => PartitionKind::NonIid,
                    Some(other) => return Err(invalid("objective.partition", other, "expected iid or noniid")),
                };
                ObjectiveSetting::Logistic {
                    source,
                    partition,
                    lambda_reg: f.take_parsed("objective.lambda_reg")?.unwrap_or(0.0),
                    positive_class: f.take_parsed("objective.positive_class")?.unwrap_or(1),
                }
            }
            other => return Err(invalid("objective.kind", other, "expected quadratic, pl or logistic")),
        };
        let grad_bound = match f.take("objective.M").as_deref() {
            None | Some("auto") => GradBoundSetting::Auto,
            Some(v) => match v.parse::<f64>() {
                Ok(m) if m > 0.0 && m.is_finite() => GradBoundSetting::Value(m),
                _ => return Err(invalid("objective.M", v, "expected auto or a positive number")),
            },
        };
        let objective = ObjectiveConfig {
            setting,
            grad_bound,
            pl: f.take_parsed("objective.pl")?,
        };

        let mode = f.take("oracle.mode").unwrap_or_else(|| "additive".into());
        let oracle_setting = match mode.as_str() {
            "additive" => {
                f.reject(&["oracle.batch"], "oracle.mode = additive")?;
                OracleSetting::Additive {
                    sigma: f.take_parsed("oracle.sigma")?.unwrap_or(0.0),
                }
            }
            "minibatch" => {
                f.reject(&["oracle.sigma"], "oracle.mode = minibatch")?;
                OracleSetting::Minibatch {
                    batch: f.required("oracle.batch")?,
                }
            }
            other => return Err(invalid("oracle.mode", other, "expected additive or minibatch")),
        };
        if let OracleSetting::Additive { sigma } = oracle_setting {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(invalid("oracle.sigma", &sigma.to_string(), "must be nonnegative"));
            }
        }
        let oracle = OracleConfig {
            setting: oracle_setting,
            sigma_bound: f.take_parsed("oracle.sigma_bound")?,
        };

        let option = match f.take("hp.option") {
            None => UpdateOption::I,
            Some(v) => parse_option("hp.option", &v)?,
        };
        let schedule = f.take("hp.schedule").unwrap_or_else(|| "constant".into());
        let step = match schedule.as_str() {
            "constant" => {
                f.reject(&["hp.B"], "hp.schedule = constant")?;
                StepSchedule::Constant(f.required("hp.alpha")?)
            }
            "sqrt" => {
                f.reject(&["hp.alpha"], "hp.schedule = sqrt")?;
                StepSchedule::InvSqrt { b: f.required("hp.B")? }
            }
            other => return Err(invalid("hp.schedule", other, "expected constant or sqrt")),
        };
        let omega = match f.take("hp.omega").as_deref() {
            None => OmegaMode::Fixed(0.5),
            Some("adaptive") => OmegaMode::Adaptive,
            Some("adaptive_global") => OmegaMode::AdaptiveGlobal,
            Some(v) => OmegaMode::Fixed(
                v.parse()
                    .map_err(|_| invalid("hp.omega", v, "expected a number, adaptive or adaptive_global"))?,
            ),
        };
        let hp = HpConfig {
            option,
            step,
            beta: f.take_parsed("hp.beta")?.unwrap_or(0.0),
            omega,
            iters: f.take_parsed("hp.iters")?.unwrap_or(100),
            seed: f.take_parsed("hp.seed")?.unwrap_or(0),
        };

        let output = OutputConfig {
            dir: PathBuf::from(f.take("output.dir").unwrap_or_else(|| "out".into())),
            bounds: match f.take("output.bounds") {
                None => false,
                Some(v) => parse_bool("output.bounds", &v)?,
            },
            seeds: f.take_parsed("output.seeds")?.unwrap_or(1),
        };
        if output.seeds == 0 {
            return Err(invalid("output.seeds", "0", "need at least one seed"));
        }

        let pl_variant = match f.take("bounds.pl_variant").as_deref() {
            None | Some("squared") => PlVariant::Squared,
            Some("linear") => PlVariant::Linear,
            Some(other) => return Err(invalid("bounds.pl_variant", other, "expected squared or linear")),
        };

        let mut sweep = SweepGrid {
            omega: f.take_list("sweep.omega")?.unwrap_or_default(),
            beta: f.take_list("sweep.beta")?.unwrap_or_default(),
            ..SweepGrid::default()
        };
        if let Some(v) = f.take("sweep.topology") {
            sweep.topology = v
                .split(',')
                .map(|t| parse_sweep_topology("sweep.topology", t.trim()))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = f.take("sweep.option") {
            sweep.option = v
                .split(',')
                .map(|t| parse_option("sweep.option", t.trim()))
                .collect::<Result<_, _>>()?;
        }

        f.finish(&format!("objective.kind = {obj_kind}"))?;
        Ok(Self {
            topology,
            objective,
            oracle,
            hp,
            output,
            pl_variant,
            sweep,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };

        put("topology.kind", self.topology.kind.name().into());
        match &self.topology.kind {
            TopologySetting::Bipartite { left: Some(l) } => put("topology.left", l.to_string()),
            TopologySetting::EdgeList(p) => put("topology.edges", p.display().to_string()),
            _ => {}
        }
        put("topology.n", self.topology.n.to_string());
        put("topology.laziness", self.topology.laziness.to_string());

        match &self.objective.setting {
            ObjectiveSetting::Quadratic { targets, curvatures } => {
                put("objective.kind", "quadratic".into());
                put(
                    "objective.targets",
                    targets.iter().map(|t| join(t)).collect::<Vec<_>>().join(";"),
                );
                if let Some(c) = curvatures {
                    put("objective.curvatures", join(c));
                }
            }
            ObjectiveSetting::Pl { shifts } => {
                put("objective.kind", "pl".into());
                put("objective.shifts", join(shifts));
            }
            ObjectiveSetting::Logistic {
                source,
                partition,
                lambda_reg,
                positive_class,
            } => {
                put("objective.kind", "logistic".into());
                match source {
                    DataSource::File(p) => put("objective.dataset", p.display().to_string()),
                    DataSource::Synthetic {
                        samples,
                        features,
                        classes,
                        seed,
                    } => {
                        put("objective.samples", samples.to_string());
                        put("objective.features", features.to_string());
                        put("objective.classes", classes.to_string());
                        put("objective.data_seed", seed.to_string());
                    }
                }
                put(
                    "objective.partition",
                    match partition {
                        PartitionKind::Iid => "iid",
                        PartitionKind::NonIid => "noniid",
                    }
                    .into(),
                );
                put("objective.lambda_reg", lambda_reg.to_string());
                put("objective.positive_class", positive_class.to_string());
            }
        }
        put(
            "objective.M",
            match self.objective.grad_bound {
                GradBoundSetting::Auto => "auto".into(),
                GradBoundSetting::Value(m) => m.to_string(),
            },
        );
        if let Some(pl) = self.objective.pl {
            put("objective.pl", pl.to_string());
        }

        match self.oracle.setting {
            OracleSetting::Additive { sigma } => {
                put("oracle.mode", "additive".into());
                put("oracle.sigma", sigma.to_string());
            }
            OracleSetting::Minibatch { batch } => {
                put("oracle.mode", "minibatch".into());
                put("oracle.batch", batch.to_string());
            }
        }
        if let Some(s) = self.oracle.sigma_bound {
            put("oracle.sigma_bound", s.to_string());
        }

        put("hp.option", self.hp.option.to_string());
        match self.hp.step {
            StepSchedule::Constant(a) => {
                put("hp.schedule", "constant".into());
                put("hp.alpha", a.to_string());
            }
            StepSchedule::InvSqrt { b } => {
                put("hp.schedule", "sqrt".into());
                put("hp.B", b.to_string());
            }
        }
        put("hp.beta", self.hp.beta.to_string());
        put(
            "hp.omega",
            match self.hp.omega {
                OmegaMode::Fixed(w) => w.to_string(),
                OmegaMode::Adaptive => "adaptive".into(),
                OmegaMode::AdaptiveGlobal => "adaptive_global".into(),
            },
        );
        put("hp.iters", self.hp.iters.to_string());
        put("hp.seed", self.hp.seed.to_string());

        put("output.dir", self.output.dir.display().to_string());
        put("output.bounds", self.output.bounds.to_string());
        put("output.seeds", self.output.seeds.to_string());
        put("bounds.pl_variant", self.pl_variant.to_string());

        if !self.sweep.omega.is_empty() {
            put("sweep.omega", join(&self.sweep.omega));
        }
        if !self.sweep.beta.is_empty() {
            put("sweep.beta", join(&self.sweep.beta));
        }
        if !self.sweep.topology.is_empty() {
            put(
                "sweep.topology",
                self.sweep
                    .topology
                    .iter()
                    .map(|t| t.name())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        if !self.sweep.option.is_empty() {
            put(
                "sweep.option",
                self.sweep
                    .option
                    .iter()
                    .map(|o| o.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical text, ignoring
    /// output and sweep settings (which do not change a single run).
    pub fn hash(&self) -> String {
        let mut run = self.clone();
        run.output = OutputConfig {
            dir: PathBuf::new(),
            bounds: false,
            seeds: 1,
        };
        run.sweep = SweepGrid::default();
        let digest = Sha256::digest(run.serialize().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
