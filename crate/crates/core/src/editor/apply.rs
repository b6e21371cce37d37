use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::editor::atlas::{decide_region, merge, rasterize_atlases, split, AtlasImage, Region, Square};
use crate::editor::tools::{find_tool, ToolInput, ToolResult};
use crate::error::{Error, Result};
use crate::field::{render_view_from_textures, Fields, MappingField};
use crate::image::Image;
use crate::scene::layout::fresh_id_in;
use crate::scene::{load_checkpoint, EditId, Manifest, SceneDir};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EditRequest {
    pub tool: String,
    pub args: Vec<String>,
    /// Restricts a global tool to these texels (one channel, `R×R`).
    pub mask: Option<Image>,
    /// Texels that become opaque foreground after a merged edit.
    pub new_object: Option<Image>,
    /// Edit to build on instead of the original atlases.
    pub parent: Option<EditId>,
}

impl EditRequest {
    pub fn new(tool: &str, args: &[&str]) -> Self {
        Self {
            tool: tool.to_string(),
            args: args.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }
}

/// Stored next to every edit as `meta.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditMeta {
    pub tool: String,
    pub args: Vec<String>,
    pub region: Region,
    pub parent: Option<String>,
    pub masked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Edit { id: EditId, region: Region },
    Artifact { id: String, path: PathBuf },
    Text(String),
}

pub fn load_fields(scene: &SceneDir) -> Result<Fields<f32>> {
    let path = scene.checkpoint_path();
    if !path.exists() {
        return Err(Error::Precondition(format!(
            "scene at {} has not been trained yet",
            scene.root().display()
        )));
    }
    load_checkpoint(&path)
}

pub fn load_atlas_pair(fg: &Path, bg: &Path) -> Result<(AtlasImage, AtlasImage)> {
    let f = Image::load_png(fg)?.with_channels(4);
    let b = Image::load_png(bg)?.with_channels(3);
    Ok((AtlasImage::new(Square::Foreground, f)?, AtlasImage::new(Square::Background, b)?))
}

/// Rasterizes the atlases at `resolution`, quantized as stored.
pub fn rasterize_scene(scene: &SceneDir, fields: &Fields<f32>, resolution: usize) -> Result<(AtlasImage, AtlasImage)> {
    let m = scene.manifest();
    let (fg, bg) = rasterize_atlases(fields, m.views, m.width, m.height, resolution)?;
    Ok((
        AtlasImage::new(Square::Foreground, fg.image.quantized())?,
        AtlasImage::new(Square::Background, bg.image.quantized())?,
    ))
}

pub fn write_atlases(scene: &SceneDir, fg: &AtlasImage, bg: &AtlasImage) -> Result<()> {
    fg.image.save_png(&scene.atlas_fg_path())?;
    bg.image.save_png(&scene.atlas_bg_path())
}

/// The scene's original atlases, rasterized first if absent.
pub fn ensure_atlases(scene: &SceneDir, fields: &Fields<f32>) -> Result<(AtlasImage, AtlasImage)> {
    if scene.has_atlases() {
        return load_atlas_pair(&scene.atlas_fg_path(), &scene.atlas_bg_path());
    }
    let (fg, bg) = rasterize_scene(scene, fields, scene.manifest().atlas_resolution)?;
    write_atlases(scene, &fg, &bg)?;
    Ok((fg, bg))
}

/// Renders every view from textures; `reference` is the unedited
/// foreground atlas the alpha rescaling is relative to.
pub fn render_textures(
    mapping: &MappingField<f32>,
    manifest: &Manifest,
    fg: &AtlasImage,
    bg: &AtlasImage,
    reference: &AtlasImage,
) -> Result<Vec<Image>> {
    (0..manifest.views)
        .map(|t| {
            render_view_from_textures(
                mapping,
                t,
                manifest.views,
                manifest.width,
                manifest.height,
                &fg.image,
                &bg.image,
                Some(&reference.image),
            )
        })
        .collect()
}

pub fn edit_textures(scene: &SceneDir, id: &str) -> Result<(AtlasImage, AtlasImage)> {
    let dir = scene.edit_dir(id);
    if !dir.is_dir() {
        return Err(Error::NotFound(format!("edit {id}")));
    }
    load_atlas_pair(&dir.join("fg.png"), &dir.join("bg.png"))
}

fn restrict(edited: Image, original: &Image, mask: &Image) -> Result<Image> {
    if mask.width != original.width || mask.height != original.height {
        return Err(Error::Dimension("edit mask resolution differs from the atlas".into()));
    }
    let mut out = edited;
    let c = original.channels;
    for i in 0..mask.width * mask.height {
        if mask.data[i * mask.channels] <= 0.5 {
            out.data[i * c..(i + 1) * c].copy_from_slice(&original.data[i * c..(i + 1) * c]);
        }
    }
    Ok(out)
}

/// Runs one tool against a scene. Edits are written all-or-nothing
/// under a fresh id; original assets are never modified.
pub fn apply_edit<R: Rng>(scene: &SceneDir, request: &EditRequest, rng: &mut R) -> Result<Outcome> {
    let tool = find_tool(&request.tool)?;
    let edits = scene.list_edits()?.len();
    if tool.name == "describe_scene" {
        let dummy = AtlasImage {
            square: Square::Foreground,
            image: Image::new(1, 1, 4),
        };
        let input = ToolInput {
            target: &dummy.image,
            fg: &dummy,
            original: &dummy,
            manifest: scene.manifest(),
            edits,
            base_dir: scene.root(),
        };
        return match tool.invoke(&input, &request.args)? {
            ToolResult::Text(t) => Ok(Outcome::Text(t)),
            _ => Err(Error::tool(tool.name, "unexpected result kind")),
        };
    }

    let fields = load_fields(scene)?;
    let (fg0, bg0) = ensure_atlases(scene, &fields)?;
    let (fg, bg) = match &request.parent {
        Some(p) => edit_textures(scene, p)?,
        None => (fg0.clone(), bg0.clone()),
    };
    let region = decide_region(tool.scope, &fg, request.mask.as_ref())?;
    let target = match region {
        Region::Merged => merge(&fg, &bg)?.image.quantized(),
        Region::Background => bg.image.clone(),
        Region::Foreground => fg.image.clone(),
    };
    let input = ToolInput {
        target: &target,
        fg: &fg,
        original: &fg0,
        manifest: scene.manifest(),
        edits,
        base_dir: scene.root(),
    };
    let edited = match tool.invoke(&input, &request.args)? {
        ToolResult::Text(t) => return Ok(Outcome::Text(t)),
        ToolResult::Artifact(img) => {
            let dir = scene.artifacts_dir();
            let id = fresh_id_in(&dir, rng)?;
            let path = dir.join(format!("{id}.png"));
            img.save_png(&path)?;
            return Ok(Outcome::Artifact { id, path });
        }
        ToolResult::Texture(t) => t,
    };
    if !edited.same_shape(&target) {
        return Err(Error::tool(tool.name, "returned a texture of the wrong shape"));
    }
    let edited = match (&request.mask, region) {
        (Some(m), Region::Merged | Region::Background) => restrict(edited, &target, m)?,
        _ => edited,
    };
    let edited = edited.quantized();
    let (fg2, bg2) = match region {
        Region::Merged => split(
            &AtlasImage::new(Square::Merged, edited)?,
            &fg,
            &bg,
            request.new_object.as_ref(),
        )?,
        Region::Background => (fg.clone(), AtlasImage::new(Square::Background, edited)?),
        Region::Foreground => (AtlasImage::new(Square::Foreground, edited)?, bg.clone()),
    };
    let (fg2, bg2) = (
        AtlasImage::new(Square::Foreground, fg2.image.quantized())?,
        AtlasImage::new(Square::Background, bg2.image.quantized())?,
    );

    let id = scene.fresh_edit_id(rng)?;
    let staging = scene.edits_dir().join(format!(".staging-{id}"));
    let meta = EditMeta {
        tool: tool.name.to_string(),
        args: request.args.clone(),
        region,
        parent: request.parent.clone(),
        masked: request.mask.is_some(),
    };
    let write = || -> Result<()> {
        std::fs::create_dir_all(staging.join("views")).map_err(|e| Error::io(&staging, e))?;
        fg2.image.save_png(&staging.join("fg.png"))?;
        bg2.image.save_png(&staging.join("bg.png"))?;
        let views = render_textures(&fields.mapping, scene.manifest(), &fg2, &bg2, &fg0)?;
        for (t, v) in views.iter().enumerate() {
            v.save_png(&staging.join("views").join(format!("{t:04}.png")))?;
        }
        let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        let p = staging.join("meta.toml");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        let dest = scene.edit_dir(&id);
        std::fs::rename(&staging, &dest).map_err(|e| Error::io(&dest, e))
    };
    if let Err(e) = write() {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(Outcome::Edit { id, region })
}

pub fn read_meta(scene: &SceneDir, id: &str) -> Result<EditMeta> {
    let p = scene.edit_dir(id).join("meta.toml");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    toml::from_str(&text).map_err(|e| Error::decode(p.display(), e.to_string()))
}
