pub mod analysis;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod intensity;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod simulate;
pub mod timeline;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
}
