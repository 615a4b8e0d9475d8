//! Event-guided video super-resolution at arbitrary real-valued scales.
//!
//! Video frames and a synchronized event stream are fused into a
//! spatial-temporal feature volume that is decoded at any continuous
//! `(x, y, t)` query grid, so a single model serves every upsampling factor.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datapipe;
pub mod diffcore;
pub mod error;
pub mod eventrepr;
pub mod eventsim;
pub mod model;
pub mod traineval;

pub use error::{Error, Result};
