//! Oracles shared by several test targets.
#![allow(dead_code)]

pub mod gibbs;
pub mod specfun_oracle;
