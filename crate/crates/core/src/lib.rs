//! Repeated three-party coalition formation game for physical layer security
//! with third-party intelligent reflecting surfaces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod econ;
pub mod env;
pub mod error;
pub mod game;
pub mod harness;
pub mod numerics;
pub mod phy;
pub mod ppo;

pub use error::{Error, Result};
