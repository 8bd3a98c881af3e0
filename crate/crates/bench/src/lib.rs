//! Shared fixtures for the criterion benches.

use dmsgd_core::{
    HyperParams, MixingMatrix, ObjectiveSuite, OmegaMode, Simulation, StepSchedule, StochasticOracle, Topology,
    TopologyKind, UpdateOption,
};

/// Metropolis weights on an `n`-agent ring with laziness 0.5.
pub fn ring_mixing(n: usize) -> MixingMatrix {
    MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, n).expect("n ≥ 1"), 0.5).expect("valid laziness")
}

/// Noisy quadratic run on a ring of `n` agents in `d` dimensions.
pub fn quadratic_simulation(n: usize, d: usize, iters: usize, option: UpdateOption) -> Simulation {
    let targets = (0..n)
        .map(|j| (0..d).map(|c| ((j * d + c) as f64).sin()).collect())
        .collect();
    let curvatures = (0..n).map(|j| 1.0 + (j % 3) as f64 * 0.5).collect();
    let suite = ObjectiveSuite::quadratic(targets, curvatures).expect("well-formed suite");
    let hp = HyperParams {
        step: StepSchedule::Constant(0.05),
        beta: 0.5,
        omega: OmegaMode::Fixed(0.5),
        option,
        iters,
        seed: 7,
    };
    Simulation::new(ring_mixing(n), suite, StochasticOracle::additive(0.1), hp).expect("valid simulation")
}
