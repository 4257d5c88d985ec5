//! Checks shared by the core integration tests and the acceptance target,
//! which includes this directory by path.

#![allow(dead_code)]

pub mod ablation;
pub mod divergence;
pub mod grad;
pub mod metrics;
