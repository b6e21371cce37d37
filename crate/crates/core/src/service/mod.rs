//! Operator surface: whole-scene workflows and the HTTP service.

pub mod server;
pub mod workflow;

pub use server::{app, artifact_urls, serve, AppState, ArtifactUrl, PlannerKind, ServiceConfig, TrainStatus};
pub use workflow::{init_scene, render_scene, synth_scene_dir, train_scene, write_scene_atlases, RenderSource};
