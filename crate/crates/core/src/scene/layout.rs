//! On-disk scene layout:
//!
//! ```text
//! <scene>/manifest.toml
//! <scene>/views/%04d.png        <scene>/masks/%04d.png
//! <scene>/inpainted/%04d.png    <scene>/flows/%04d_%04d.flo3
//! <scene>/atlases/{fg.png,bg.png}
//! <scene>/ckpt/fields.hat       <scene>/ckpt/losses.csv
//! <scene>/edits/<edit-id>/{fg.png,bg.png,views/%04d.png,meta.toml}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::flow::{flow_file_name, read_flow, write_flow};
use crate::scene::viewset::{Flow, ViewSet};

pub const MANIFEST_FORMAT: u32 = 1;
pub const DEFAULT_ATLAS_RESOLUTION: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub width: usize,
    pub height: usize,
    pub views: usize,
    #[serde(default)]
    pub masks: usize,
    #[serde(default)]
    pub inpainted: usize,
    #[serde(default)]
    pub flows: usize,
    #[serde(default = "default_atlas_resolution")]
    pub atlas_resolution: usize,
    /// Where each asset class came from (`views`, `masks`, …).
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

fn default_atlas_resolution() -> usize {
    DEFAULT_ATLAS_RESOLUTION
}

impl Manifest {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::decode(name, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case(ext))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_images(files: &[PathBuf], channels: usize) -> Result<Vec<Image>> {
    files
        .iter()
        .map(|f| Image::load_png(f).map(|i| i.with_channels(channels)))
        .collect()
}

/// Loads the inputs of a scene. `path` is either a scene directory (with a
/// `views/` subfolder and optional `masks/`, `inpainted/`, `flows/`) or a
/// plain directory of view images.
pub fn load_scene(path: &Path) -> Result<ViewSet> {
    if !path.is_dir() {
        return Err(Error::decode(path.display(), "not a directory"));
    }
    let views_dir = if path.join("views").is_dir() {
        path.join("views")
    } else {
        path.to_path_buf()
    };
    let view_files = sorted_files(&views_dir, "png")?;
    if view_files.is_empty() {
        return Err(Error::decode(views_dir.display(), "no views found"));
    }
    let views = load_images(&view_files, 3)?;
    let optional = |sub: &str, channels: usize| -> Result<Option<Vec<Image>>> {
        let files = sorted_files(&path.join(sub), "png")?;
        if files.is_empty() {
            Ok(None)
        } else {
            load_images(&files, channels).map(Some)
        }
    };
    let masks = optional("masks", 1)?.map(|ms| {
        ms.into_iter()
            .map(|mut m| {
                m.data.iter_mut().for_each(|v| *v = if *v > 0.5 { 1.0 } else { 0.0 });
                m
            })
            .collect()
    });
    let inpainted = optional("inpainted", 3)?;
    let flows = sorted_files(&path.join("flows"), "flo3")?
        .iter()
        .map(|f| read_flow(f))
        .collect::<Result<Vec<Flow>>>()?;
    ViewSet::new(views, masks, inpainted, flows)
}

/// Identifier of one edit output directory: a sequence number followed by
/// a random suffix, e.g. `0003-k2v9qa`.
pub type EditId = String;

pub fn random_token<R: Rng>(rng: &mut R, len: usize) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..len)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

pub fn is_edit_id(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 11
        && b[..4].iter().all(u8::is_ascii_digit)
        && b[4] == b'-'
        && b[5..]
            .iter()
            .all(|c| c.is_ascii_digit() || c.is_ascii_lowercase())
}

#[derive(Clone, Debug)]
pub struct SceneDir {
    root: PathBuf,
    manifest: Manifest,
}

impl SceneDir {
    /// Writes a new scene directory from a validated view set.
    pub fn create(root: &Path, viewset: &ViewSet, provenance: &str) -> Result<Self> {
        if root.join("manifest.toml").exists() {
            return Err(Error::Config(format!("{} already holds a scene", root.display())));
        }
        let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mkdir(&root.join("views"))?;
        for (i, v) in viewset.views().iter().enumerate() {
            v.save_png(&root.join("views").join(format!("{i:04}.png")))?;
        }
        let mut prov = BTreeMap::new();
        prov.insert("views".to_string(), provenance.to_string());
        if let Some(masks) = viewset.fg_masks() {
            mkdir(&root.join("masks"))?;
            for (i, m) in masks.iter().enumerate() {
                m.save_png(&root.join("masks").join(format!("{i:04}.png")))?;
            }
            prov.insert("masks".to_string(), provenance.to_string());
        }
        if let Some(inp) = viewset.inpainted() {
            mkdir(&root.join("inpainted"))?;
            for (i, m) in inp.iter().enumerate() {
                m.save_png(&root.join("inpainted").join(format!("{i:04}.png")))?;
            }
            prov.insert("inpainted".to_string(), provenance.to_string());
        }
        if !viewset.flows().is_empty() {
            mkdir(&root.join("flows"))?;
            for f in viewset.flows() {
                write_flow(f, &root.join("flows").join(flow_file_name(f.from, f.to)))?;
            }
            prov.insert("flows".to_string(), provenance.to_string());
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT,
            width: viewset.width(),
            height: viewset.height(),
            views: viewset.len(),
            masks: viewset.fg_masks().map_or(0, |m| m.len()),
            inpainted: viewset.inpainted().map_or(0, |m| m.len()),
            flows: viewset.flows().len(),
            atlas_resolution: DEFAULT_ATLAS_RESOLUTION,
            provenance: prov,
        };
        let dir = Self {
            root: root.to_path_buf(),
            manifest,
        };
        dir.save_manifest()?;
        Ok(dir)
    }

    /// Opens an existing scene and checks the manifest against the files.
    pub fn open(root: &Path) -> Result<Self> {
        let mpath = root.join("manifest.toml");
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest = Manifest::parse(&text, &mpath.display().to_string())?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!(
                "manifest format {} unsupported (expected {MANIFEST_FORMAT})",
                manifest.format
            )));
        }
        let count = |sub: &str, ext: &str| sorted_files(&root.join(sub), ext).map(|f| f.len());
        for (what, want, have) in [
            ("views", manifest.views, count("views", "png")?),
            ("masks", manifest.masks, count("masks", "png")?),
            ("inpainted", manifest.inpainted, count("inpainted", "png")?),
            ("flows", manifest.flows, count("flows", "flo3")?),
        ] {
            if want != have {
                return Err(Error::Integrity(format!(
                    "manifest lists {want} {what}, directory holds {have}"
                )));
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn save_manifest(&self) -> Result<()> {
        let p = self.root.join("manifest.toml");
        let tmp = self.root.join("manifest.toml.tmp");
        std::fs::write(&tmp, self.manifest.to_text()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &p).map_err(|e| Error::io(&p, e))
    }

    pub fn load_views(&self) -> Result<ViewSet> {
        let vs = load_scene(&self.root)?;
        if vs.width() != self.manifest.width || vs.height() != self.manifest.height {
            return Err(Error::Integrity(format!(
                "manifest says {}x{}, views are {}x{}",
                self.manifest.width,
                self.manifest.height,
                vs.width(),
                vs.height()
            )));
        }
        Ok(vs)
    }

    pub fn view_path(&self, t: usize) -> PathBuf {
        self.root.join("views").join(format!("{t:04}.png"))
    }

    pub fn atlas_dir(&self) -> PathBuf {
        self.root.join("atlases")
    }

    pub fn atlas_fg_path(&self) -> PathBuf {
        self.atlas_dir().join("fg.png")
    }

    pub fn atlas_bg_path(&self) -> PathBuf {
        self.atlas_dir().join("bg.png")
    }

    pub fn has_atlases(&self) -> bool {
        self.atlas_fg_path().is_file() && self.atlas_bg_path().is_file()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.root.join("ckpt").join("fields.hat")
    }

    pub fn loss_csv_path(&self) -> PathBuf {
        self.root.join("ckpt").join("losses.csv")
    }

    pub fn renders_dir(&self) -> PathBuf {
        self.root.join("renders")
    }

    pub fn edits_dir(&self) -> PathBuf {
        self.root.join("edits")
    }

    pub fn edit_dir(&self, id: &str) -> PathBuf {
        self.edits_dir().join(id)
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    /// Completed edits in creation order.
    pub fn list_edits(&self) -> Result<Vec<EditId>> {
        let dir = self.edits_dir();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<EditId> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| is_edit_id(n))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Picks an identifier that has never been used in this scene.
    pub fn fresh_edit_id<R: Rng>(&self, rng: &mut R) -> Result<EditId> {
        fresh_id_in(&self.edits_dir(), rng)
    }
}

/// `NNNN-xxxxxx` whose sequence number is one past every id in `dir`,
/// staged or complete.
pub fn fresh_id_in<R: Rng>(dir: &Path, rng: &mut R) -> Result<EditId> {
    let mut next = 1;
    if dir.is_dir() {
        for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            let name = name.trim_start_matches(".staging-");
            if let Some(n) = name.get(..4).and_then(|s| s.parse::<usize>().ok()) {
                next = next.max(n + 1);
            }
        }
    }
    Ok(format!("{next:04}-{}", random_token(rng, 6)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_viewset(n: usize) -> ViewSet {
        let views = (0..n)
            .map(|i| Image::from_fn(6, 4, 3, |x, y, c| ((x + y * 2 + c + i) % 7) as f32 / 6.0))
            .collect();
        let masks = (0..n).map(|_| Image::from_fn(6, 4, 1, |x, _, _| (x > 2) as u8 as f32)).collect();
        ViewSet::new(views, Some(masks), None, vec![Flow::zeros(0, 1, 6, 4)]).unwrap()
    }

    #[test]
    fn create_open_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("s");
        let vs = tiny_viewset(3);
        SceneDir::create(&root, &vs, "test").unwrap();
        let sd = SceneDir::open(&root).unwrap();
        assert_eq!(sd.manifest().views, 3);
        assert_eq!(sd.manifest().masks, 3);
        assert_eq!(sd.manifest().flows, 1);
        let back = sd.load_views().unwrap();
        assert_eq!(back.fg_masks(), vs.fg_masks());
        assert_eq!(back.flows(), vs.flows());
        for (a, b) in back.views().iter().zip(vs.views()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 1.0 / 255.0);
            }
        }
        assert!(SceneDir::create(&root, &vs, "test").is_err());
    }

    #[test]
    fn manifest_must_match_disk() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("s");
        SceneDir::create(&root, &tiny_viewset(2), "test").unwrap();
        std::fs::remove_file(root.join("masks/0001.png")).unwrap();
        assert!(matches!(SceneDir::open(&root), Err(Error::Integrity(_))));
    }

    #[test]
    fn load_plain_directory_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let e = load_scene(dir.path()).unwrap_err();
        assert!(e.to_string().contains("no views found"));
        for i in 0..4 {
            Image::filled(5, 5, 3, 0.5).save_png(&dir.path().join(format!("img{i}.png"))).unwrap();
        }
        let vs = load_scene(dir.path()).unwrap();
        assert_eq!((vs.len(), vs.width(), vs.height()), (4, 5, 5));
        assert!(vs.fg_masks().is_none() && vs.inpainted().is_none() && vs.flows().is_empty());
        std::fs::write(dir.path().join("img9.png"), b"garbage").unwrap();
        let e = load_scene(dir.path()).unwrap_err();
        assert!(matches!(e, Error::Decode { ref file, .. } if file.contains("img9.png")));
    }

    #[test]
    fn edit_ids_are_fresh() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("s");
        let sd = SceneDir::create(&root, &tiny_viewset(2), "test").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sd.fresh_edit_id(&mut rng).unwrap();
        assert!(is_edit_id(&a) && a.starts_with("0001-"));
        std::fs::create_dir_all(sd.edit_dir(&a)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sd.fresh_edit_id(&mut rng).unwrap();
        assert!(b.starts_with("0002-"));
        assert_eq!(sd.list_edits().unwrap(), vec![a]);
    }
}
