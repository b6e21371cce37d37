//! Whole-scene operations shared by the command line and the HTTP service.

use std::path::{Path, PathBuf};

use crate::editor::apply::{edit_textures, load_atlas_pair, rasterize_scene, write_atlases};
use crate::editor::{load_fields, render_textures, AtlasImage};
use crate::error::{Error, Result};
use crate::field::render_view;
use crate::scene::synth::SynthSpec;
use crate::scene::{load_scene, save_checkpoint, synth_scene, SceneDir};
use crate::train::{fit, write_loss_csv, FitResult, LossReport, TrainConfig};

/// Builds a scene directory from a directory of view images (optionally
/// with `masks/`, `inpainted/` and `flows/` next to a `views/` folder).
pub fn init_scene(images: &Path, out: &Path) -> Result<SceneDir> {
    let views = load_scene(images)?;
    SceneDir::create(out, &views, &format!("imported from {}", images.display()))
}

/// Writes a synthetic scene; ground-truth layers go under `truth/`.
pub fn synth_scene_dir(spec: &SynthSpec, out: &Path) -> Result<SceneDir> {
    let views = synth_scene(spec)?;
    let scene = SceneDir::create(out, &views, "synthetic")?;
    let truth = out.join("truth");
    for (t, m) in views.fg_masks().unwrap_or_default().iter().enumerate() {
        m.save_png(&truth.join("masks").join(format!("{t:04}.png")))?;
    }
    if let Some(bg) = views.inpainted().and_then(|b| b.first()) {
        bg.save_png(&truth.join("background.png"))?;
    }
    let text = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(truth.join("spec.toml"), text).map_err(|e| Error::io(&truth, e))?;
    Ok(scene)
}

/// Fits the scene and stores the checkpoint and loss log. Atlases from a
/// previous fit are discarded so they are re-rasterized on demand.
pub fn train_scene(scene: &SceneDir, config: &TrainConfig, progress: impl FnMut(&LossReport)) -> Result<FitResult> {
    let views = scene.load_views()?;
    let result = fit(&views, config, progress)?;
    save_checkpoint(&result.fields, &scene.checkpoint_path())?;
    write_loss_csv(&scene.loss_csv_path(), &result.history)?;
    let atlases = scene.atlas_dir();
    if atlases.exists() {
        std::fs::remove_dir_all(&atlases).map_err(|e| Error::io(&atlases, e))?;
    }
    Ok(result)
}

/// Rasterizes both atlases at `resolution` (the manifest's when `None`)
/// and replaces the stored pair.
pub fn write_scene_atlases(scene: &SceneDir, resolution: Option<usize>) -> Result<(AtlasImage, AtlasImage)> {
    let fields = load_fields(scene)?;
    let res = resolution.unwrap_or(scene.manifest().atlas_resolution);
    if res < 2 {
        return Err(Error::Config("atlas resolution must be at least 2".into()));
    }
    let (fg, bg) = rasterize_scene(scene, &fields, res)?;
    write_atlases(scene, &fg, &bg)?;
    Ok((fg, bg))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RenderSource {
    /// Direct evaluation of the fitted networks.
    Fields,
    /// Texture lookup into the stored original atlases.
    Atlas,
    /// Texture lookup into an edit's atlases.
    Edit(String),
}

/// Renders every view and writes `renders/<source>/NNNN.png`.
pub fn render_scene(scene: &SceneDir, source: &RenderSource) -> Result<Vec<PathBuf>> {
    let fields = load_fields(scene)?;
    let m = scene.manifest().clone();
    let (sub, images) = match source {
        RenderSource::Fields => (
            "fields".to_string(),
            (0..m.views)
                .map(|t| render_view(&fields, t, m.views, m.width, m.height))
                .collect::<Result<Vec<_>>>()?,
        ),
        RenderSource::Atlas | RenderSource::Edit(_) => {
            if !scene.has_atlases() {
                write_scene_atlases(scene, None)?;
            }
            let (fg0, bg0) = load_atlas_pair(&scene.atlas_fg_path(), &scene.atlas_bg_path())?;
            match source {
                RenderSource::Edit(id) => {
                    let (fg, bg) = edit_textures(scene, id)?;
                    (id.clone(), render_textures(&fields.mapping, &m, &fg, &bg, &fg0)?)
                }
                _ => ("atlas".to_string(), render_textures(&fields.mapping, &m, &fg0, &bg0, &fg0)?),
            }
        }
    };
    let dir = scene.renders_dir().join(sub);
    images
        .iter()
        .enumerate()
        .map(|(t, img)| {
            let p = dir.join(format!("{t:04}.png"));
            img.save_png(&p).map(|_| p)
        })
        .collect()
}
