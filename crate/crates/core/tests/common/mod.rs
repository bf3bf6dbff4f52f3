//! Independent oracles shared by the integration suites.
//!
//! Everything here is written against plain `Vec<Vec<f64>>` so that it shares
//! no numerical code with the library under test.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod dense;
pub mod gradcheck;
pub mod oracles;
