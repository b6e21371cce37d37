//! Atlas textures: rasterization from the fields, merge and split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{composite, map_view, Fields, MAP_OUT};
use crate::image::{quantize, Image};

/// Foreground-involvement threshold on the splatted alpha.
pub const TAU: f32 = 0.5;

/// Texels with less accumulated splat weight are treated as uncovered.
const MIN_COVERAGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Square {
    Foreground,
    Background,
    Merged,
}

/// An `R×R` texture of one atlas square: RGBA for the foreground, RGB
/// otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct AtlasImage {
    pub square: Square,
    pub image: Image,
}

impl AtlasImage {
    pub fn new(square: Square, image: Image) -> Result<Self> {
        let want = if square == Square::Foreground { 4 } else { 3 };
        if image.channels != want {
            return Err(Error::Dimension(format!(
                "{square:?} atlas needs {want} channels, got {}",
                image.channels
            )));
        }
        if image.width != image.height {
            return Err(Error::Dimension(format!("atlas must be square, got {}x{}", image.width, image.height)));
        }
        if image.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("atlas channels must lie in [0,1]".into()));
        }
        Ok(Self { square, image })
    }

    pub fn resolution(&self) -> usize {
        self.image.width
    }

    pub fn alpha(&self, x: usize, y: usize) -> f32 {
        debug_assert_eq!(self.square, Square::Foreground);
        self.image.get(x, y, 3)
    }

    /// `alpha > τ` as a one-channel mask (foreground only).
    pub fn fg_mask(&self) -> Image {
        let r = self.resolution();
        Image::from_fn(r, r, 1, |x, y, _| (self.alpha(x, y) > TAU) as u8 as f32)
    }
}

/// Full-plane coordinate of texel `i` of a square: texel centres sit on a
/// corner-aligned grid, so texel 0 and `R-1` lie on the square's edges.
fn plane_coord(i: usize, r: usize, square: Square) -> f32 {
    let s = if r > 1 { i as f64 / (r - 1) as f64 } else { 0.0 };
    let off = if square == Square::Foreground { 0.0 } else { 0.5 };
    (off + 0.5 * s) as f32
}

/// Rasterizes both squares at `resolution²` texels. The foreground alpha
/// is forward-splatted from every view pixel with bilinear weights.
pub fn rasterize_atlases(
    fields: &Fields<f32>,
    views: usize,
    width: usize,
    height: usize,
    resolution: usize,
) -> Result<(AtlasImage, AtlasImage)> {
    if resolution < 2 {
        return Err(Error::Config("atlas resolution must be at least 2".into()));
    }
    let r = resolution;
    let mut colors = [Image::new(r, r, 3), Image::new(r, r, 3)];
    for (img, square) in colors.iter_mut().zip([Square::Foreground, Square::Background]) {
        const CHUNK: usize = 1 << 14;
        let n = r * r;
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let mut uv = Vec::with_capacity((end - start) * 2);
            for i in start..end {
                uv.push(plane_coord(i % r, r, square));
                uv.push(plane_coord(i / r, r, square));
            }
            let b = fields.atlas.forward_batch(&uv)?;
            img.data[start * 3..end * 3].copy_from_slice(&b.rgb);
        }
    }

    let mut acc = vec![0f64; r * r];
    let mut weight = vec![0f64; r * r];
    let scale = (r - 1) as f32;
    for t in 0..views {
        let mapped = map_view(&fields.mapping, t, views, width, height)?;
        for m in mapped.chunks_exact(MAP_OUT) {
            let fx = (2.0 * m[0] * scale).clamp(0.0, scale);
            let fy = (2.0 * m[1] * scale).clamp(0.0, scale);
            let ix = (fx as usize).min(r - 2);
            let iy = (fy as usize).min(r - 2);
            let (wx, wy) = ((fx - ix as f32) as f64, (fy - iy as f32) as f64);
            let a = m[4] as f64;
            for (dx, dy, w) in [
                (0, 0, (1.0 - wx) * (1.0 - wy)),
                (1, 0, wx * (1.0 - wy)),
                (0, 1, (1.0 - wx) * wy),
                (1, 1, wx * wy),
            ] {
                let k = (iy + dy) * r + ix + dx;
                acc[k] += w * a;
                weight[k] += w;
            }
        }
    }
    let [fg_rgb, bg] = colors;
    let fg = Image::from_fn(r, r, 4, |x, y, c| {
        if c < 3 {
            fg_rgb.get(x, y, c)
        } else {
            let k = y * r + x;
            if weight[k] < MIN_COVERAGE {
                0.0
            } else {
                (acc[k] / weight[k]).clamp(0.0, 1.0) as f32
            }
        }
    });
    Ok((AtlasImage::new(Square::Foreground, fg)?, AtlasImage::new(Square::Background, bg)?))
}

fn same_resolution(a: &Image, b: &Image, what: &str) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension(format!(
            "{what}: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Composites the foreground square over the background, texel-wise.
pub fn merge(fg: &AtlasImage, bg: &AtlasImage) -> Result<AtlasImage> {
    same_resolution(&fg.image, &bg.image, "merge of atlases with different resolutions")?;
    let r = fg.resolution();
    let mut out = Image::new(r, r, 3);
    for i in 0..r * r {
        let f = &fg.image.data[i * 4..i * 4 + 4];
        let b = &bg.image.data[i * 3..i * 3 + 3];
        let c = composite([f[0], f[1], f[2]], [b[0], b[1], b[2]], f[3]);
        out.data[i * 3..i * 3 + 3].copy_from_slice(&c);
    }
    Ok(AtlasImage {
        square: Square::Merged,
        image: out,
    })
}

/// Separates an edited merged texture back into layers.
///
/// Texels whose 8-bit value the edit left unchanged keep the original
/// layers verbatim. Elsewhere both layers take the edited color; the
/// foreground keeps its alpha inside the original mask, becomes opaque on
/// `new_object` and transparent outside both.
pub fn split(
    edited: &AtlasImage,
    fg: &AtlasImage,
    bg: &AtlasImage,
    new_object: Option<&Image>,
) -> Result<(AtlasImage, AtlasImage)> {
    same_resolution(&edited.image, &fg.image, "edited vs foreground atlas")?;
    same_resolution(&edited.image, &bg.image, "edited vs background atlas")?;
    if let Some(m) = new_object {
        same_resolution(&edited.image, m, "new object mask")?;
    }
    let original = merge(fg, bg)?;
    let r = fg.resolution();
    let mut fg2 = fg.image.clone();
    let mut bg2 = bg.image.clone();
    for i in 0..r * r {
        let e = &edited.image.data[i * 3..i * 3 + 3];
        let o = &original.image.data[i * 3..i * 3 + 3];
        let touched = (0..3).any(|c| quantize(e[c]) != quantize(o[c]));
        let is_new = new_object.is_some_and(|m| m.data[i * m.channels] > 0.5);
        if !touched && !is_new {
            continue;
        }
        let a = fg.image.data[i * 4 + 3];
        let in_fg = a > TAU;
        fg2.data[i * 4..i * 4 + 3].copy_from_slice(e);
        fg2.data[i * 4 + 3] = if is_new {
            1.0
        } else if in_fg {
            a
        } else {
            0.0
        };
        bg2.data[i * 3..i * 3 + 3].copy_from_slice(e);
    }
    Ok((
        AtlasImage {
            square: Square::Foreground,
            image: fg2,
        },
        AtlasImage {
            square: Square::Background,
            image: bg2,
        },
    ))
}

/// Where an edit is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Foreground,
    Background,
    Merged,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Foreground => "foreground",
            Region::Background => "background",
            Region::Merged => "merged",
        }
    }
}

/// What a tool declares about the texels it needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToolScope {
    /// Acts on the whole visible scene (optionally restricted by a mask).
    Global,
    /// Acts on the foreground layer only.
    Foreground,
    /// Acts on the background layer only.
    Background,
    /// Reads the scene and produces an artifact, no edit.
    Analysis,
}

/// Routes an edit: foreground-only and background-only tools keep their
/// layer; otherwise a mask that touches the foreground (or no mask at all)
/// needs the merged view.
pub fn decide_region(scope: ToolScope, fg: &AtlasImage, mask: Option<&Image>) -> Result<Region> {
    Ok(match scope {
        ToolScope::Foreground => Region::Foreground,
        ToolScope::Background => Region::Background,
        ToolScope::Analysis => Region::Merged,
        ToolScope::Global => match mask {
            None => Region::Merged,
            Some(m) => {
                same_resolution(m, &fg.image, "edit mask vs foreground atlas")?;
                let r = fg.resolution();
                let hit = (0..r * r).any(|i| m.data[i * m.channels] > 0.5 && fg.image.data[i * 4 + 3] > TAU);
                if hit {
                    Region::Merged
                } else {
                    Region::Background
                }
            }
        },
    })
}

/// Grows a one-channel mask by one texel in the 8-neighbourhood.
pub fn dilate(mask: &Image) -> Image {
    let (w, h) = (mask.width, mask.height);
    Image::from_fn(w, h, 1, |x, y, _| {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && mask.get(nx as usize, ny as usize, 0) > 0.5 {
                    return 1.0;
                }
            }
        }
        0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgba(r: usize, f: impl Fn(usize, usize) -> [f32; 4]) -> AtlasImage {
        AtlasImage::new(Square::Foreground, Image::from_fn(r, r, 4, |x, y, c| f(x, y)[c])).unwrap()
    }

    fn rgb(r: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> AtlasImage {
        AtlasImage::new(Square::Background, Image::from_fn(r, r, 3, |x, y, c| f(x, y)[c])).unwrap()
    }

    fn q(v: f32) -> f32 {
        quantize(v) as f32 / 255.0
    }

    #[test]
    fn merge_extremes_and_checkerboard() {
        let bg = rgb(6, |x, y| [q(x as f32 / 5.0), q(y as f32 / 5.0), 0.2]);
        let clear = rgba(6, |_, _| [0.9, 0.1, 0.4, 0.0]);
        assert_eq!(merge(&clear, &bg).unwrap().image.data, bg.image.data);
        let solid = rgba(6, |x, _| [0.9, q(x as f32 / 7.0), 0.4, 1.0]);
        let m = merge(&solid, &bg).unwrap();
        for i in 0..36 {
            assert_eq!(&m.image.data[i * 3..i * 3 + 3], &solid.image.data[i * 4..i * 4 + 3]);
        }
        let check = rgba(6, |x, y| [0.7, 0.3, 0.5, ((x + y) % 2) as f32 * 0.75]);
        let m = merge(&check, &bg).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let f = check.image.pixel(x, y);
                let b = bg.image.pixel(x, y);
                let c = composite([f[0], f[1], f[2]], [b[0], b[1], b[2]], f[3]);
                assert_eq!(m.image.pixel(x, y), &c);
            }
        }
    }

    #[test]
    fn merge_rejects_resolution_mismatch() {
        let e = merge(&rgba(4, |_, _| [0.0; 4]), &rgb(5, |_, _| [0.0; 3])).unwrap_err();
        assert!(matches!(e, Error::Dimension(_)));
    }

    #[test]
    fn unmodified_split_is_exact() {
        let fg = rgba(8, |x, y| [q(x as f32 / 8.0), 0.5, q(y as f32 / 9.0), if x > 3 { 1.0 } else { q(0.2) }]);
        let bg = rgb(8, |x, y| [0.1, q((x * y) as f32 / 64.0), 0.3]);
        let mut merged = merge(&fg, &bg).unwrap();
        merged.image = merged.image.quantized();
        let (f2, b2) = split(&merged, &fg, &bg, None).unwrap();
        assert_eq!(f2, fg);
        assert_eq!(b2, bg);
    }

    #[test]
    fn new_object_becomes_opaque_foreground() {
        let fg = rgba(6, |_, _| [0.0, 0.0, 0.0, 0.0]);
        let bg = rgb(6, |_, _| [0.2, 0.6, 0.2]);
        let mask = Image::from_fn(6, 6, 1, |x, y, _| (x < 2 && y < 2) as u8 as f32);
        let mut edited = merge(&fg, &bg).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                edited.image.pixel_mut(x, y).copy_from_slice(&[1.0, 0.0, 0.0]);
            }
        }
        let (f2, b2) = split(&edited, &fg, &bg, Some(&mask)).unwrap();
        assert_eq!(f2.image.pixel(1, 1), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(f2.image.pixel(4, 4)[3], 0.0);
        assert_eq!(b2.image, edited.image);
    }

    #[test]
    fn empty_masks_give_transparent_foreground() {
        let fg = rgba(5, |_, _| [0.3, 0.3, 0.3, 0.0]);
        let bg = rgb(5, |x, _| [q(x as f32 / 4.0), 0.5, 0.5]);
        let edited = AtlasImage {
            square: Square::Merged,
            image: Image::from_fn(5, 5, 3, |x, y, c| ((x + y + c) % 3) as f32 / 2.0),
        };
        let (f2, b2) = split(&edited, &fg, &bg, None).unwrap();
        assert!(f2.image.data.chunks_exact(4).all(|p| p[3] == 0.0));
        assert_eq!(b2.image, edited.image);
    }

    #[test]
    fn touched_texels_follow_the_mask_rules() {
        let fg = rgba(4, |x, _| [0.5, 0.5, 0.5, if x < 2 { 0.8 } else { 0.3 }]);
        let bg = rgb(4, |_, _| [0.1, 0.2, 0.3]);
        let edited = AtlasImage {
            square: Square::Merged,
            image: Image::filled(4, 4, 3, 0.9),
        };
        let (f2, b2) = split(&edited, &fg, &bg, None).unwrap();
        assert_eq!(f2.image.pixel(0, 0), &[0.9, 0.9, 0.9, 0.8]);
        assert_eq!(f2.image.pixel(3, 0), &[0.9, 0.9, 0.9, 0.0]);
        assert_eq!(b2.image.pixel(3, 3), &[0.9, 0.9, 0.9]);
    }

    #[test]
    fn split_rejects_mismatched_masks() {
        let fg = rgba(4, |_, _| [0.0; 4]);
        let bg = rgb(4, |_, _| [0.0; 3]);
        let e = split(&merge(&fg, &bg).unwrap(), &fg, &bg, Some(&Image::new(3, 3, 1)));
        assert!(matches!(e, Err(Error::Dimension(_))));
    }

    #[test]
    fn region_decisions() {
        let fg = rgba(6, |x, _| [0.0, 0.0, 0.0, if x >= 3 { 1.0 } else { 0.0 }]);
        assert_eq!(decide_region(ToolScope::Global, &fg, None).unwrap(), Region::Merged);
        let left = Image::from_fn(6, 6, 1, |x, _, _| (x < 2) as u8 as f32);
        assert_eq!(decide_region(ToolScope::Global, &fg, Some(&left)).unwrap(), Region::Background);
        let over = Image::from_fn(6, 6, 1, |x, _, _| (x == 4) as u8 as f32);
        assert_eq!(decide_region(ToolScope::Global, &fg, Some(&over)).unwrap(), Region::Merged);
        assert_eq!(decide_region(ToolScope::Foreground, &fg, Some(&left)).unwrap(), Region::Foreground);
    }

    #[test]
    fn dilation_grows_by_one() {
        let m = Image::from_fn(5, 5, 1, |x, y, _| (x == 2 && y == 2) as u8 as f32);
        let d = dilate(&m);
        assert_eq!(d.data.iter().filter(|&&v| v > 0.5).count(), 9);
    }

    #[test]
    fn plane_coordinates_are_corner_aligned() {
        assert_eq!(plane_coord(0, 4, Square::Foreground), 0.0);
        assert_eq!(plane_coord(3, 4, Square::Foreground), 0.5);
        assert_eq!(plane_coord(0, 4, Square::Background), 0.5);
        assert_eq!(plane_coord(3, 4, Square::Background), 1.0);
    }
}
