//! The iterative tracing agent.

mod buffer;
mod builder;
mod engine;

use thiserror::Error;

pub use buffer::CandidateBuffer;
pub use builder::GraphBuilder;
pub use engine::{run, seed_buffer, Action, Engine, EngineConfig, RunReport, StepRecord};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("{what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    Dimensions {
        what: &'static str,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
}
