//! Hierarchical implicit models and likelihood-free variational inference.

pub mod abc;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lfvi;
pub mod models;
pub mod ndcore;
pub mod ratio;
pub mod variational;

pub use error::{Error, Result};

// The guide's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tapes.md")]
    mod tapes {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/ratio.md")]
    mod ratio {}
    #[doc = include_str!("../../../book/src/lfvi.md")]
    mod lfvi {}
    #[doc = include_str!("../../../book/src/abc.md")]
    mod abc {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
