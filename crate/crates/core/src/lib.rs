//! Demand-flexibility engine for clustered geothermal heat pumps.
//!
//! The crate is organised bottom-up:
//!
//! - [`solver`]: dense LP/QP interior-point solver and disk polygonization.
//! - [`thermal`]: zone/wall/radiator RC models, transient and steady-state solves.
//! - [`envelope`]: per-heat-pump active-power envelopes `[p_lo, p_hi]` and `p_desired`.
//! - [`opf`]: linearized optimal power flow that aggregates envelopes per bus.
//! - [`scenario`]: scenario files, disturbance bands, horizon runs and result files.

pub mod envelope;
pub mod opf;
pub mod scenario;
pub mod solver;
pub mod thermal;
