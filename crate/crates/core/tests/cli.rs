mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use common::{fixture, scene_copy};
use scene_atlas::image::Image;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scene-atlas"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scripted_chat_matches_golden_transcript() {
    let (_tmp, scene) = scene_copy();
    let mut child = bin()
        .args(["chat", s(scene.root()), "--rules", s(&fixture("chat_rules.txt"))])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let script = std::fs::read(fixture("chat_script.txt")).unwrap();
    child.stdin.take().unwrap().write_all(&script).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let golden = std::fs::read_to_string(fixture("chat_golden.txt")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
    assert_eq!(scene.list_edits().unwrap().len(), 3);
}

#[test]
fn identity_edit_renders_like_the_original_textures() {
    let (_tmp, scene) = scene_copy();
    let root = s(scene.root());
    let line = ok(&["edit", root, "--tool", "identity"]);
    let id = line.split_whitespace().nth(1).unwrap().to_string();
    ok(&["render", root, "--from-atlas"]);
    ok(&["render", root, "--edit", &id]);
    for t in 0..scene.manifest().views {
        let a = Image::load_png(&scene.renders_dir().join("atlas").join(format!("{t:04}.png"))).unwrap();
        let b = Image::load_png(&scene.renders_dir().join(&id).join(format!("{t:04}.png"))).unwrap();
        let c = Image::load_png(&scene.edit_dir(&id).join("views").join(format!("{t:04}.png"))).unwrap();
        assert_eq!(a.to_u8(), b.to_u8());
        assert_eq!(a.to_u8(), c.to_u8());
    }
}

#[test]
fn atlas_command_is_idempotent() {
    let (_tmp, scene) = scene_copy();
    let root = s(scene.root());
    ok(&["atlas", root, "--res", "48"]);
    let first = std::fs::read(scene.atlas_fg_path()).unwrap();
    ok(&["atlas", root, "--res", "48"]);
    assert_eq!(first, std::fs::read(scene.atlas_fg_path()).unwrap());
    assert_eq!(Image::load_png(&scene.atlas_bg_path()).unwrap().width, 48);
}

#[test]
fn init_builds_a_scene_from_images() {
    let tmp = tempfile::tempdir().unwrap();
    let imgs = tmp.path().join("imgs");
    for t in 0..3 {
        Image::from_fn(10, 8, 3, |x, y, c| ((x + y + c + t) % 5) as f32 / 4.0)
            .save_png(&imgs.join(format!("img{t}.png")))
            .unwrap();
    }
    let out = tmp.path().join("scene");
    let line = ok(&["init", s(&imgs), "--out", s(&out)]);
    assert!(line.contains("3 views of 10x8"), "{line}");
    let again = run(&["init", s(&imgs), "--out", s(&out)]);
    assert!(!again.status.success());
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    for args in [
        vec!["render", s(&missing)],
        vec!["train", s(&missing), "--steps", "5"],
        vec!["chat", s(&missing)],
    ] {
        let out = run(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error:"));
    }
    let (_t, scene) = scene_copy();
    let out = run(&["edit", s(scene.root()), "--tool", "melt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown tool"));
}

#[test]
fn untrained_scene_cannot_be_rendered() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("s");
    ok(&["synth", "--out", s(&root), "--width", "16", "--height", "16", "--views", "3", "--radius", "3"]);
    let out = run(&["render", s(&root)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not been trained"));
}
