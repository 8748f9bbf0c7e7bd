//! Shared harnesses for the integration suites.
#![allow(dead_code)]

pub mod gradients;
pub mod lattice;
