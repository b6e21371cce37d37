#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use scene_atlas::image::Image;
use scene_atlas::scene::{SceneDir, SynthSpec};
use scene_atlas::service::{synth_scene_dir, train_scene};
use scene_atlas::train::TrainConfig;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn quick_config() -> TrainConfig {
    TrainConfig::load(&fixture("quick.toml")).unwrap()
}

pub fn quick_spec() -> SynthSpec {
    SynthSpec::drifting(32, 32, 6, 6.0, (1.0, 0.0))
}

/// A small synthetic scene trained with the quick schedule, shared by all
/// tests of one binary. Never mutate it; work on a [`scene_copy`].
pub fn trained_template() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let root = tempfile::tempdir().unwrap().keep().join("scene");
        let scene = synth_scene_dir(&quick_spec(), &root).unwrap();
        train_scene(&scene, &quick_config(), |_| {}).unwrap();
        root
    })
}

pub fn copy_dir(src: &Path, dst: &Path) {
    std::fs::create_dir_all(dst).unwrap();
    for e in std::fs::read_dir(src).unwrap() {
        let e = e.unwrap();
        let to = dst.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to);
        } else {
            std::fs::copy(e.path(), to).unwrap();
        }
    }
}

/// Fresh copy of the trained template, with a `texture.png` for
/// `replace_foreground`.
pub fn scene_copy() -> (tempfile::TempDir, SceneDir) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("scene");
    copy_dir(trained_template(), &root);
    Image::from_fn(8, 8, 3, |_, _, c| if c == 2 { 1.0 } else { 0.0 })
        .save_png(&root.join("texture.png"))
        .unwrap();
    (tmp, SceneDir::open(&root).unwrap())
}

/// SHA-256 over relative paths and contents of every file below `root`,
/// skipping top-level entries named in `skip`.
pub fn tree_hash(root: &Path, skip: &[&str]) -> String {
    fn walk(dir: &Path, rel: &Path, out: &mut Vec<(PathBuf, PathBuf)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let e = e.unwrap();
            let r = rel.join(e.file_name());
            if e.file_type().unwrap().is_dir() {
                walk(&e.path(), &r, out);
            } else {
                out.push((r, e.path()));
            }
        }
    }
    let mut files = Vec::new();
    for e in std::fs::read_dir(root).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().to_string();
        if skip.contains(&name.as_str()) {
            continue;
        }
        if e.file_type().unwrap().is_dir() {
            walk(&e.path(), Path::new(&name), &mut files);
        } else {
            files.push((PathBuf::from(&name), e.path()));
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for (rel, abs) in files {
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(abs).unwrap());
    }
    hex::encode(h.finalize())
}

/// Everything a scene owns before any edit: inputs, manifest, checkpoint.
pub fn source_hash(root: &Path) -> String {
    tree_hash(root, &["edits", "artifacts", "atlases", "renders", "texture.png"])
}
