//! Independent oracles and gradient-check cases shared by the integration
//! tests and the acceptance runner.
#![allow(dead_code)]

pub mod gradcases;
pub mod oracles;
