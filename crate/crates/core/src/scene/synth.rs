//! Synthetic scenes with exactly known decomposition: a smooth textured
//! background and a shaded disc sprite translated per view.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::viewset::{Flow, ViewSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub views: usize,
    /// Sprite radius in pixels.
    pub radius: f64,
    /// Sprite centre in view 0, pixels.
    pub center: (f64, f64),
    /// Per-view sprite offset from `center`, pixels; one entry per view.
    pub offsets: Vec<(f64, f64)>,
    /// Base sprite color.
    pub sprite_color: [f32; 3],
}

impl Default for SynthSpec {
    /// 16 views of 96×96 with a radius-16 disc drifting 1 px per view.
    fn default() -> Self {
        Self::drifting(96, 96, 16, 16.0, (1.0, 0.0))
    }
}

impl SynthSpec {
    pub fn drifting(width: usize, height: usize, views: usize, radius: f64, step: (f64, f64)) -> Self {
        let travel = (step.0 * (views.max(1) - 1) as f64, step.1 * (views.max(1) - 1) as f64);
        Self {
            width,
            height,
            views,
            radius,
            center: (
                (width as f64 - 1.0 - travel.0) / 2.0,
                (height as f64 - 1.0 - travel.1) / 2.0,
            ),
            offsets: (0..views)
                .map(|t| (step.0 * t as f64, step.1 * t as f64))
                .collect(),
            sprite_color: [0.92, 0.42, 0.18],
        }
    }

    pub fn sprite_center(&self, view: usize) -> (f64, f64) {
        let (dx, dy) = self.offsets[view];
        (self.center.0 + dx, self.center.1 + dy)
    }

    fn validate(&self) -> Result<()> {
        if self.views == 0 || self.width < 2 || self.height < 2 {
            return Err(Error::Config("synthetic scene needs >= 1 view of >= 2x2 pixels".into()));
        }
        if self.offsets.len() != self.views {
            return Err(Error::Config(format!(
                "{} sprite offsets for {} views",
                self.offsets.len(),
                self.views
            )));
        }
        let moves = self.offsets.iter().any(|&o| o != self.offsets[0]);
        if moves && self.radius > self.width.min(self.height) as f64 / 2.0 {
            return Err(Error::Config(format!(
                "sprite radius {} exceeds half the frame with motion",
                self.radius
            )));
        }
        for t in 0..self.views {
            let (cx, cy) = self.sprite_center(t);
            let r = self.radius;
            if cx - r < 0.0 || cy - r < 0.0 || cx + r > (self.width - 1) as f64 || cy + r > (self.height - 1) as f64 {
                return Err(Error::Config(format!("sprite exits frame in view {t}")));
            }
        }
        Ok(())
    }

    /// Background color at pixel `(x, y)`: low-frequency color waves.
    pub fn background(&self, x: f64, y: f64) -> [f32; 3] {
        let u = x / (self.width - 1) as f64;
        let v = y / (self.height - 1) as f64;
        let tau = std::f64::consts::TAU;
        [
            0.45 + 0.22 * (tau * (1.2 * u + 0.3 * v)).sin(),
            0.50 + 0.20 * (tau * (0.8 * v - 0.5 * u) + 1.0).cos(),
            0.55 + 0.18 * (tau * (0.9 * u + 1.1 * v) + 2.0).sin(),
        ]
        .map(|c| c as f32)
    }

    /// Sprite color at offset `(dx, dy)` from its centre: radial shading
    /// with a faint stripe so the foreground atlas carries texture.
    pub fn sprite(&self, dx: f64, dy: f64) -> [f32; 3] {
        let r2 = (dx * dx + dy * dy) / (self.radius * self.radius);
        let shade = 1.0 - 0.35 * r2;
        let stripe = 0.06 * (dx / self.radius * std::f64::consts::PI * 1.5).sin();
        let c = self.sprite_color;
        [0, 1, 2].map(|k| ((c[k] as f64 * shade + stripe).clamp(0.0, 1.0)) as f32)
    }

    pub fn in_sprite(&self, view: usize, x: f64, y: f64) -> bool {
        let (cx, cy) = self.sprite_center(view);
        (x - cx).powi(2) + (y - cy).powi(2) <= self.radius * self.radius
    }
}

/// Renders the views with exact masks, exact inpainted (sprite-free) views
/// and exact flows between consecutive views.
pub fn synth_scene(spec: &SynthSpec) -> Result<ViewSet> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let bg = Image::from_fn(w, h, 3, |x, y, c| spec.background(x as f64, y as f64)[c]);
    let mut views = Vec::with_capacity(spec.views);
    let mut masks = Vec::with_capacity(spec.views);
    for t in 0..spec.views {
        let (cx, cy) = spec.sprite_center(t);
        let mask = Image::from_fn(w, h, 1, |x, y, _| spec.in_sprite(t, x as f64, y as f64) as u8 as f32);
        let view = Image::from_fn(w, h, 3, |x, y, c| {
            if mask.get(x, y, 0) > 0.5 {
                spec.sprite(x as f64 - cx, y as f64 - cy)[c]
            } else {
                bg.get(x, y, c)
            }
        });
        views.push(view);
        masks.push(mask);
    }
    let mut flows = Vec::new();
    for t in 0..spec.views.saturating_sub(1) {
        let (ox, oy) = spec.offsets[t];
        let (nx, ny) = spec.offsets[t + 1];
        let (dx, dy) = ((nx - ox) as f32, (ny - oy) as f32);
        let mut f = Flow::zeros(t, t + 1, w, h);
        for y in 0..h {
            for x in 0..w {
                if masks[t].get(x, y, 0) > 0.5 {
                    let inside = spec.in_sprite(t + 1, x as f64 + dx as f64, y as f64 + dy as f64);
                    f.set(x, y, dx, dy, inside as u8 as f32);
                } else {
                    // background is static; occluded in the next view → no confidence
                    let visible = masks[t + 1].get(x, y, 0) < 0.5;
                    f.set(x, y, 0.0, 0.0, visible as u8 as f32);
                }
            }
        }
        flows.push(f);
    }
    let inpainted = vec![bg; spec.views];
    ViewSet::new(views, Some(masks), Some(inpainted), flows)
}

/// A scene whose every pixel has the same color, used for convergence
/// checks of the degenerate case.
pub fn constant_scene(width: usize, height: usize, views: usize, color: [f32; 3]) -> Result<ViewSet> {
    let v = Image::from_fn(width, height, 3, |_, _, c| color[c]);
    let m = Image::new(width, height, 1);
    ViewSet::new(vec![v.clone(); views], Some(vec![m; views]), Some(vec![v; views]), vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_is_complete() {
        let vs = synth_scene(&SynthSpec::default()).unwrap();
        assert_eq!((vs.len(), vs.width(), vs.height()), (16, 96, 96));
        assert!(vs.fg_masks().is_some() && vs.inpainted().is_some());
        assert_eq!(vs.flows().len(), 15);
        for f in vs.flows() {
            let mut sprite_px = 0;
            for y in 0..96 {
                for x in 0..96 {
                    let (dx, dy, _) = f.at(x, y);
                    if vs.mask_at(f.from, x, y).unwrap() {
                        assert_eq!((dx, dy), (1.0, 0.0));
                        sprite_px += 1;
                    } else {
                        assert_eq!((dx, dy), (0.0, 0.0));
                    }
                }
            }
            assert!(sprite_px > 700);
        }
    }

    #[test]
    fn zero_motion_has_zero_flows() {
        let spec = SynthSpec::drifting(32, 32, 4, 6.0, (0.0, 0.0));
        let vs = synth_scene(&spec).unwrap();
        assert!(vs.flows().iter().all(|f| f
            .data
            .chunks_exact(3)
            .all(|c| c[0] == 0.0 && c[1] == 0.0)));
    }

    #[test]
    fn invalid_sprites_are_rejected() {
        let big = SynthSpec::drifting(32, 32, 4, 17.0, (1.0, 0.0));
        assert!(matches!(synth_scene(&big), Err(Error::Config(_))));
        let mut exits = SynthSpec::drifting(32, 32, 4, 6.0, (1.0, 0.0));
        exits.offsets[3] = (20.0, 0.0);
        let e = synth_scene(&exits).unwrap_err();
        assert!(e.to_string().contains("exits frame"));
    }

    #[test]
    fn composite_of_parts_reproduces_views() {
        let spec = SynthSpec::drifting(40, 30, 5, 7.0, (1.0, 1.0));
        let vs = synth_scene(&spec).unwrap();
        for t in 0..vs.len() {
            let (cx, cy) = spec.sprite_center(t);
            let m = &vs.fg_masks().unwrap()[t];
            let bg = &vs.inpainted().unwrap()[t];
            for y in 0..30 {
                for x in 0..40 {
                    let a = m.get(x, y, 0);
                    let s = spec.sprite(x as f64 - cx, y as f64 - cy);
                    for c in 0..3 {
                        let comp = a * s[c] + (1.0 - a) * bg.get(x, y, c);
                        assert_eq!(comp, vs.views()[t].get(x, y, c));
                    }
                }
            }
        }
    }
}
