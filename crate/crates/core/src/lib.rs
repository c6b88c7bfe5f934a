//! Quantitative information flow for scheduled compositions of channels.

pub mod channel;
pub mod error;
pub mod interleave;
pub mod lp;
pub mod matrix;
pub mod measures;
pub mod minimize;
pub mod observer;
pub mod par;
pub mod scenarios;
pub mod scheduler;
pub mod trace;

pub use error::{Error, Result};
