//! Benchmark programs (solver, BSP ring, ping-pong, intra-node
//! microbenchmarks), the trial/statistics harness, and the `mhb` driver.

pub mod bsp;
pub mod cli;
mod error;
pub mod harness;
pub mod hpcg;
pub mod launch;
pub mod micro;
pub mod pingpong;

pub use error::{BenchError, Result};
