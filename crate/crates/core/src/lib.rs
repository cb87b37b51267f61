//! Two-stage optimal stopping on a two-site compound renewal catch process.

pub mod cli;
pub mod error;
pub mod model;
pub mod numerics;
pub mod policy;
pub mod sim;
pub mod stage1;
pub mod stage2;
mod sweep;

pub use error::{Error, Result};

// The guide's chapters are compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/after_switch.md")]
    mod after_switch {}
    #[doc = include_str!("../../../book/src/before_switch.md")]
    mod before_switch {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
