//! OTFS-based joint sensing and communication with a MIMO transmitter that
//! keeps a few private TF bins per antenna to form a virtual array.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod channel;
pub mod coarse;
pub mod comm;
pub mod crlb;
pub mod error;
pub mod grid;
pub mod harness;
pub mod par;
pub mod rng;
pub mod ssr;
pub mod transforms;

pub use error::{Error, Result};
pub use grid::{Bin, DdGrid, Grid, TfGrid};
