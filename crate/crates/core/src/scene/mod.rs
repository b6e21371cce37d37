//! Scene inputs, on-disk layout and checkpoints.

pub mod checkpoint;
pub mod flow;
pub mod layout;
pub mod synth;
pub mod viewset;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layout::{load_scene, EditId, Manifest, SceneDir};
pub use synth::{constant_scene, synth_scene, SynthSpec};
pub use viewset::{Flow, ViewSet};
