//! Desensitized optimal control and guidance by Legendre-Gauss-Radau collocation.

// `!(a < b)` is used deliberately so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod guidance;
pub mod lgr;
pub mod monte_carlo;
pub mod nlp;
pub mod ocp;
pub mod problem;
pub mod report;
pub mod sensitivity;
pub mod sim;
pub mod trajectory;
pub mod transcription;

pub use error::{Error, Result};
