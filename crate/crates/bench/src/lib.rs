//! Shared fixtures for the pipeline benchmarks.

use nca_core::{rollout, sample_rule, GenConfig, RuleParams, Trajectory};

/// Default configuration at alphabet size `n`, unfiltered.
pub fn config(n: usize) -> GenConfig {
    GenConfig::default()
        .with_alphabet(n)
        .with_band(nca_core::ComplexityBand::FULL)
}

pub fn rule(n: usize, index: u64) -> RuleParams {
    sample_rule(0xBE4C, index, &config(n))
}

pub fn trajectory(n: usize, index: u64) -> Trajectory {
    rollout(&rule(n, index), &config(n)).expect("finite rule")
}
