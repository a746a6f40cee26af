//! Numerical tools for Gromov-conformal maps: eccentricity
//! profiles, induced plane fields and their lifts, staircase surfaces and
//! discrete conformal modulus.
//!
//! The guide in `book/` walks through each module with runnable examples.

pub mod demo;
pub mod distribution;
pub mod error;
pub mod linalg;
pub mod maps;
pub mod modulus;
pub mod qc;
pub mod staircase;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/distributions.md")]
    mod distributions {}
    #[doc = include_str!("../../../book/src/staircase.md")]
    mod staircase {}
    #[doc = include_str!("../../../book/src/modulus.md")]
    mod modulus {}
    #[doc = include_str!("../../../book/src/parabolicity.md")]
    mod parabolicity {}
    #[doc = include_str!("../../../book/src/demo.md")]
    mod demo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
