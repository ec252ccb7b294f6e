//! Run orchestration, metrics persistence, figure rendering, sweeps, and the
//! brute-force one-step oracle around the simulator core.

pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod runner;
pub mod sweep;
