//! Layered atlas decomposition of multi-view scenes.
//!
//! A coordinate network maps every view pixel onto a foreground and a
//! background texture square; a hash-encoded color network paints both.
//! Once fitted, the two squares can be rasterized, edited as ordinary
//! images and mapped back onto every view without retraining. A small
//! dialogue layer routes natural-language requests to editing tools.

pub mod editor;
pub mod error;
pub mod field;
pub mod hashgrid;
pub mod image;
pub mod nn;
pub mod router;
pub mod scene;
pub mod service;
pub mod train;

pub use error::{Error, Result};
