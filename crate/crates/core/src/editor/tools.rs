//! Built-in deterministic editing and analysis tools.

use std::path::Path;

use crate::editor::atlas::{AtlasImage, ToolScope, TAU};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::Manifest;

/// What a tool hands back.
#[derive(Clone, Debug, PartialEq)]
pub enum ToolResult {
    /// The edited version of the texture the tool was given.
    Texture(Image),
    /// A derived image that is not an edit.
    Artifact(Image),
    Text(String),
}

/// Inputs available to a tool run.
pub struct ToolInput<'a> {
    /// The routed texture: merged RGB, background RGB or foreground RGBA.
    pub target: &'a Image,
    pub fg: &'a AtlasImage,
    /// The scene's unedited foreground atlas.
    pub original: &'a AtlasImage,
    pub manifest: &'a Manifest,
    pub edits: usize,
    /// Directory relative paths in arguments resolve against.
    pub base_dir: &'a Path,
}

pub type ToolFn = fn(&ToolInput, &[String]) -> Result<ToolResult>;

#[derive(Clone, Debug)]
pub struct ToolDef {
    pub name: &'static str,
    pub usage: &'static str,
    /// `(name, description)` of each argument after the scene handle.
    pub params: &'static [(&'static str, &'static str)],
    /// Example arguments after the scene handle, comma separated.
    pub example_args: &'static str,
    pub scope: ToolScope,
    pub run: ToolFn,
}

impl ToolDef {
    pub fn invoke(&self, input: &ToolInput, args: &[String]) -> Result<ToolResult> {
        if args.len() != self.params.len() {
            let names: Vec<&str> = self.params.iter().map(|p| p.0).collect();
            return Err(Error::tool(
                self.name,
                format!("expects {} argument(s) ({}), got {}", names.len(), names.join(", "), args.len()),
            ));
        }
        (self.run)(input, args)
    }
}

fn number(tool: &str, name: &str, s: &str) -> Result<f32> {
    s.trim()
        .parse::<f32>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::tool(tool, format!("{name} must be a number, got `{s}`")))
}

fn map_rgb(img: &Image, f: impl Fn([f32; 3]) -> [f32; 3]) -> Image {
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(img.channels) {
        let c = f([px[0], px[1], px[2]]);
        px[..3].copy_from_slice(&c.map(|v| v.clamp(0.0, 1.0)));
    }
    out
}

fn luma(c: [f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn identity(input: &ToolInput, _: &[String]) -> Result<ToolResult> {
    Ok(ToolResult::Texture(input.target.clone()))
}

fn grayscale(input: &ToolInput, _: &[String]) -> Result<ToolResult> {
    Ok(ToolResult::Texture(map_rgb(input.target, |c| [luma(c); 3])))
}

fn rgb_to_hsv(c: [f32; 3]) -> [f32; 3] {
    let max = c[0].max(c[1]).max(c[2]);
    let min = c[0].min(c[1]).min(c[2]);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == c[0] {
        60.0 * ((c[1] - c[2]) / d).rem_euclid(6.0)
    } else if max == c[1] {
        60.0 * ((c[2] - c[0]) / d + 2.0)
    } else {
        60.0 * ((c[0] - c[1]) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn hue_rotate(input: &ToolInput, args: &[String]) -> Result<ToolResult> {
    let deg = number("hue_rotate", "degrees", &args[0])?;
    Ok(ToolResult::Texture(map_rgb(input.target, |c| {
        let [h, s, v] = rgb_to_hsv(c);
        hsv_to_rgb([h + deg, s, v])
    })))
}

fn brightness(input: &ToolInput, args: &[String]) -> Result<ToolResult> {
    let delta = number("brightness", "delta", &args[0])?;
    if !(-1.0..=1.0).contains(&delta) {
        return Err(Error::tool("brightness", "delta must lie in [-1, 1]"));
    }
    Ok(ToolResult::Texture(map_rgb(input.target, |c| c.map(|v| v + delta))))
}

fn sobel(input: &ToolInput, _: &[String]) -> Result<ToolResult> {
    let img = input.target;
    let (w, h) = (img.width, img.height);
    let l = |x: i64, y: i64| {
        let (x, y) = (x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize);
        let p = img.pixel(x, y);
        luma([p[0], p[1], p[2]])
    };
    let norm = 4.0 * std::f32::consts::SQRT_2;
    Ok(ToolResult::Artifact(Image::from_fn(w, h, 3, |x, y, _| {
        let (x, y) = (x as i64, y as i64);
        let gx = l(x + 1, y - 1) + 2.0 * l(x + 1, y) + l(x + 1, y + 1) - l(x - 1, y - 1) - 2.0 * l(x - 1, y) - l(x - 1, y + 1);
        let gy = l(x - 1, y + 1) + 2.0 * l(x, y + 1) + l(x + 1, y + 1) - l(x - 1, y - 1) - 2.0 * l(x, y - 1) - l(x + 1, y - 1);
        (gx.hypot(gy) / norm).min(1.0)
    })))
}

fn remove_foreground(input: &ToolInput, _: &[String]) -> Result<ToolResult> {
    let mut out = input.target.clone();
    for px in out.data.chunks_exact_mut(4) {
        px[3] = 0.0;
    }
    Ok(ToolResult::Texture(out))
}

fn extract_foreground(input: &ToolInput, _: &[String]) -> Result<ToolResult> {
    Ok(ToolResult::Texture(Image::filled(input.target.width, input.target.height, 3, 1.0)))
}

fn footprint(fg: &Image) -> Option<(usize, usize, usize, usize)> {
    let r = fg.width;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..r {
        for x in 0..r {
            if fg.get(x, y, 3) > TAU {
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            }
        }
    }
    (x0 != usize::MAX).then_some((x0, y0, x1, y1))
}

/// Fills the object's bounding box with the picture. A removed object is
/// brought back with its original footprint.
fn replace_foreground(input: &ToolInput, args: &[String]) -> Result<ToolResult> {
    let path = input.base_dir.join(args[0].trim());
    let src = Image::load_png(&path).map_err(|e| Error::tool("replace_foreground", e.to_string()))?;
    let (shape, restore) = match footprint(&input.fg.image) {
        Some(b) => (b, false),
        None => (
            footprint(&input.original.image)
                .ok_or_else(|| Error::tool("replace_foreground", "the scene has no foreground to replace"))?,
            true,
        ),
    };
    let (x0, y0, x1, y1) = shape;
    let src = src.with_channels(3);
    let mut out = input.target.clone();
    let (bw, bh) = ((x1 - x0).max(1) as f32, (y1 - y0).max(1) as f32);
    let mut px = [0f32; 3];
    for y in y0..=y1 {
        for x in x0..=x1 {
            src.sample_bilinear((x - x0) as f32 / bw, (y - y0) as f32 / bh, &mut px);
            let o = out.pixel_mut(x, y);
            o[..3].copy_from_slice(&px);
            if restore && o.len() == 4 {
                o[3] = input.original.image.get(x, y, 3);
            }
        }
    }
    Ok(ToolResult::Texture(out))
}

fn describe_scene(input: &ToolInput, _: &[String]) -> Result<ToolResult> {
    let m = input.manifest;
    let yes = |n: usize| if n > 0 { "yes" } else { "no" };
    let mut text = format!(
        "{} views of {}x{} pixels; foreground masks: {}; inpainted backgrounds: {}; optical flows: {}; atlas resolution {}; edits so far: {}",
        m.views,
        m.width,
        m.height,
        yes(m.masks),
        yes(m.inpainted),
        m.flows,
        m.atlas_resolution,
        input.edits
    );
    if let Some(src) = m.provenance.get("source") {
        text.push_str(&format!("; source: {src}"));
    }
    Ok(ToolResult::Text(text))
}

/// The registered tools, in prompt order.
pub fn builtin_tools() -> Vec<ToolDef> {
    vec![
        ToolDef {
            name: "identity",
            usage: "Re-render the scene without changing anything. Use when the user asks to refresh or re-export the current scene.",
            params: &[],
            example_args: "",
            scope: ToolScope::Global,
            run: identity,
        },
        ToolDef {
            name: "grayscale_stylize",
            usage: "Turn the whole scene into black and white. Use when the user wants the scene gray, grayscale, monochrome or black-and-white.",
            params: &[],
            example_args: "",
            scope: ToolScope::Global,
            run: grayscale,
        },
        ToolDef {
            name: "hue_rotate",
            usage: "Shift every color of the scene around the color wheel. Use when the user wants different colors or a color shift.",
            params: &[("degrees", "rotation angle in degrees, e.g. 90")],
            example_args: "120",
            scope: ToolScope::Global,
            run: hue_rotate,
        },
        ToolDef {
            name: "brightness",
            usage: "Make the whole scene brighter or darker. Use when the user asks for a lighter or darker scene.",
            params: &[("delta", "amount added to every channel, between -1 and 1")],
            example_args: "0.2",
            scope: ToolScope::Global,
            run: brightness,
        },
        ToolDef {
            name: "sobel_edge_map",
            usage: "Compute an edge map of the scene. Use when the user asks for edges, outlines or contours; it produces an image and does not edit the scene.",
            params: &[],
            example_args: "",
            scope: ToolScope::Analysis,
            run: sobel,
        },
        ToolDef {
            name: "remove_foreground",
            usage: "Remove the foreground object and keep only the background. Use when the user wants the main object deleted or erased.",
            params: &[],
            example_args: "",
            scope: ToolScope::Foreground,
            run: remove_foreground,
        },
        ToolDef {
            name: "extract_foreground",
            usage: "Keep the foreground object and paint the background white. Use when the user wants the object cut out or isolated.",
            params: &[],
            example_args: "",
            scope: ToolScope::Background,
            run: extract_foreground,
        },
        ToolDef {
            name: "replace_foreground",
            usage: "Replace the appearance of the foreground object with a given picture. Use when the user provides an image to put in place of the object.",
            params: &[("image", "path of a PNG image")],
            example_args: "texture.png",
            scope: ToolScope::Foreground,
            run: replace_foreground,
        },
        ToolDef {
            name: "describe_scene",
            usage: "Describe what is known about the scene. Use when the user asks a question about the scene rather than requesting an edit.",
            params: &[],
            example_args: "",
            scope: ToolScope::Analysis,
            run: describe_scene,
        },
    ]
}

pub fn find_tool(name: &str) -> Result<ToolDef> {
    builtin_tools()
        .into_iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::tool(name, "unknown tool"))
}
