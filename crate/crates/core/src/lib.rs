//! Decentralized momentum SGD over doubly stochastic mixing graphs, with the
//! matching closed-form consensus and convergence bounds.

// NaN must fail range checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod optimizer;
pub mod topology;
pub mod verify;

pub use bounds::{BoundError, BoundInputs, BoundReport, BoundValues, PlVariant};
pub use objectives::{
    Dataset, NoiseModel, ObjectiveClass, ObjectiveError, ObjectiveSuite, Partition, StochasticOracle, SuiteConstants,
    UnifiedObjective,
};
pub use optimizer::{
    AgentSwarm, HyperParams, OmegaMode, RunStatus, RunTrace, Simulation, StepSchedule, TraceRecord, UpdateOption,
};
pub use topology::{MixingMatrix, SpectralInfo, Topology, TopologyError, TopologyKind};
