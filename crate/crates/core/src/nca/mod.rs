//! Discrete neural cellular automata: rules, grids, and their dynamics.

mod dynamics;
mod grid;
mod rule;

pub use dynamics::{cell_logits, rollout, rollout_with_mode, step, RolloutMode, StepMode, Trajectory};
pub use grid::{sample_init, Grid};
pub use rule::{rule_seed, sample_rule, RuleParams};
