//! Deterministic multi-UAV data-relay network simulator with a multi-agent
//! actor-critic learning stack, a delay-penalized reward, and a
//! spatio-temporal attention predictor that reconstructs stale global state.

pub mod autodiff;
pub mod channel;
pub mod config;
pub mod env;
pub mod error;
pub mod infocache;
pub mod linkplan;
pub mod marl;
pub mod power;
pub mod predictor;
pub mod rng;
pub mod train;
pub mod world;

#[doc(hidden)]
pub mod test_support;

pub use config::WorldConfig;
pub use error::SimError;
