pub mod cases;
pub mod detattack;
pub mod detection;
pub mod ergodic;
pub mod error;
pub mod estimation;
pub mod game;
pub mod grid;
pub mod linalg;
pub mod mc;
pub mod prior;
pub mod special;
pub mod stealth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/deterministic-attacks.md")]
    mod deterministic_attacks {}
    #[doc = include_str!("../../../book/src/stealth.md")]
    mod stealth {}
    #[doc = include_str!("../../../book/src/game.md")]
    mod game {}
    #[doc = include_str!("../../../book/src/ergodic.md")]
    mod ergodic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
