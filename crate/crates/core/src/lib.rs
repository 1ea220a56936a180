//! Sparse MIMO-OFDM channel recovery with dictionaries calibrated against
//! hardware impairments. See the guide under `book/` for a walkthrough.

pub mod calibration;
pub mod channel;
pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod localization;
pub mod mod_baseline;
pub mod recovery;
pub mod seeding;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/dictionaries.md")]
    mod dictionaries {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/localization.md")]
    mod localization {}
    #[doc = include_str!("../../../book/src/mod.md")]
    mod mod_comparison {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
