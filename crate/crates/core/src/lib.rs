//! Structured filter pruning with a soft-to-hard schedule.
//!
//! The crate bundles a small dense autodiff engine ([`ops`], [`sgd`]), static
//! architecture descriptions and MAC accounting ([`arch`], [`flops`]), the
//! pruning schedules and masks ([`pruning`]), a desk-scale trainer
//! ([`trainer`]), checkpointing and offline compaction ([`compact`]).

pub mod arch;
pub mod checkpoint;
pub mod compact;
pub mod config;
pub mod data;
pub mod error;
pub mod flops;
pub mod network;
pub mod ops;
pub mod pruning;
pub mod sgd;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
