//! The outer optimization loop.

mod engine;
mod sweep;
mod trace;
pub mod ucb;

pub use engine::{Engine, IterationOutput};
pub use sweep::{final_score, sweep_batch_sizes};
pub use trace::{prompt_digest, BeamSnapshot, IterationSummary, IterationTrace, OptimizeReport};
pub use ucb::{ucb_select, ucb_value, UcbOutcome, UcbParams};
