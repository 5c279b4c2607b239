//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod collective;
pub mod flops;

