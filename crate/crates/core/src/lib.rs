//! Hidden regular variation of diagonal stochastic recurrence equations
//! `X = AX + B`: tail indices, the critical exponent pair, stationary-law
//! simulation, tilted-walk importance sampling and tail diagnostics.

pub mod group;
pub mod levelset;
pub mod linalg;
pub mod mc;
pub mod mgf;
pub mod models;
pub mod quadrature;
pub mod renewal;
pub mod rng;
pub mod special;
pub mod stats;
pub mod tails;

pub use models::{closed_form_log_mgf, sample_ab, AbDraw, BLaw, Blocks, Family, ModelError, ModelSpec};
pub use rng::{Lane, StreamFactory};
pub use stats::Estimate;
