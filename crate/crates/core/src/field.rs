//! The learned fields: a coordinate network mapping view pixels to two UV
//! squares plus a foreground weight, and a hash-encoded color network shared
//! by both squares. Includes the compositing rule and the two render paths.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashgrid::{Footprint, HashGrid, HashGridConfig};
use crate::image::Image;
use crate::nn::{sigmoid, Mlp, MlpTrace, Real, TensorKind};

/// Number of raw outputs of the mapping network: u1, v1, u2, v2, alpha.
pub const MAP_OUT: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingConfig {
    /// Linear layers, input and output layer included.
    pub layers: usize,
    pub width: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self { layers: 8, width: 256 }
    }
}

impl MappingConfig {
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![3];
        d.extend(std::iter::repeat(self.width).take(self.layers - 1));
        d.push(MAP_OUT);
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtlasConfig {
    pub grid: HashGridConfig,
    pub hidden_layers: usize,
    pub width: usize,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            grid: HashGridConfig::default(),
            hidden_layers: 2,
            width: 64,
        }
    }
}

impl AtlasConfig {
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.grid.output_dim()];
        d.extend(std::iter::repeat(self.width).take(self.hidden_layers));
        d.push(3);
        d
    }
}

/// Normalized sample position: pixel indices divided by `W-1`, `H-1` and
/// the view index by `max(T-1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl PixelCoord {
    pub fn new(x: f64, y: f64, t: f64) -> Result<Self> {
        for (name, v) in [("x", x), ("y", y), ("t", t)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("pixel coordinate {name}={v} outside [0,1]")));
            }
        }
        Ok(Self { x, y, t })
    }

    pub fn from_pixel(px: f64, py: f64, view: usize, width: usize, height: usize, views: usize) -> Self {
        Self {
            x: px / (width.max(2) - 1) as f64,
            y: py / (height.max(2) - 1) as f64,
            t: view as f64 / (views.max(2) - 1) as f64,
        }
    }
}

/// Foreground UV in `[0, 0.5]²`, background UV in `[0.5, 1]²` and the
/// foreground weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappingOutput {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
    pub alpha: f64,
}

impl MappingOutput {
    /// Foreground UV rescaled to the unit square.
    pub fn fg_local(&self) -> (f64, f64) {
        (2.0 * self.u1, 2.0 * self.v1)
    }

    /// Background UV rescaled to the unit square.
    pub fn bg_local(&self) -> (f64, f64) {
        (2.0 * self.u2 - 1.0, 2.0 * self.v2 - 1.0)
    }

    pub fn in_bounds(&self) -> bool {
        (0.0..=0.5).contains(&self.u1)
            && (0.0..=0.5).contains(&self.v1)
            && (0.5..=1.0).contains(&self.u2)
            && (0.5..=1.0).contains(&self.v2)
            && (0.0..=1.0).contains(&self.alpha)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingField<T> {
    pub mlp: Mlp<T>,
}

/// Batched mapping evaluation: the network trace plus activated outputs
/// (`rows × 5`).
pub struct MappingBatch<T> {
    pub trace: MlpTrace<T>,
    pub out: Vec<T>,
}

impl<T: Real> MappingBatch<T> {
    pub fn rows(&self) -> usize {
        self.trace.rows
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.out[r * MAP_OUT..(r + 1) * MAP_OUT]
    }

    /// Raw alpha logit of row `r`.
    pub fn alpha_logit(&self, r: usize) -> T {
        self.trace.output()[r * MAP_OUT + 4]
    }
}

impl<T: Real> MappingField<T> {
    pub fn init<R: Rng>(config: MappingConfig, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::init(&config.dims(), 0.01, rng),
        }
    }

    pub fn zeros(config: MappingConfig) -> Self {
        Self {
            mlp: Mlp::zeros(&config.dims()),
        }
    }

    pub fn config(&self) -> MappingConfig {
        MappingConfig {
            layers: self.mlp.layers.len(),
            width: self.mlp.layers[0].outputs,
        }
    }

    /// `coords` holds `rows × (x, y, t)`.
    pub fn forward_batch(&self, coords: Vec<T>) -> MappingBatch<T> {
        let rows = coords.len() / 3;
        let trace = self.mlp.forward(coords, rows);
        let half = T::c(0.5);
        let out = trace
            .output()
            .chunks_exact(MAP_OUT)
            .flat_map(|r| {
                [
                    half * sigmoid(r[0]),
                    half * sigmoid(r[1]),
                    half + half * sigmoid(r[2]),
                    half + half * sigmoid(r[3]),
                    sigmoid(r[4]),
                ]
            })
            .collect();
        MappingBatch { trace, out }
    }

    /// `d_out` is the gradient with respect to the activated outputs
    /// (`rows × 5`); `d_alpha_logit` optionally adds a gradient directly on
    /// the alpha logit (used by the cross-entropy term for stability).
    pub fn backward_batch(
        &self,
        batch: &MappingBatch<T>,
        d_out: &[T],
        d_alpha_logit: Option<&[T]>,
        grads: &mut MappingField<T>,
    ) {
        let half = T::c(0.5);
        let one = T::one();
        let mut d_raw = vec![T::zero(); d_out.len()];
        for (r, (dr, d)) in d_raw
            .chunks_exact_mut(MAP_OUT)
            .zip(d_out.chunks_exact(MAP_OUT))
            .enumerate()
        {
            let o = batch.row(r);
            for k in 0..4 {
                // u = 0.5·σ(r) (+0.5): du/dr = 0.5·σ(1-σ), σ = 2u (or 2u - 1)
                let s = if k < 2 { o[k] / half } else { (o[k] - half) / half };
                dr[k] = d[k] * half * s * (one - s);
            }
            dr[4] = d[4] * o[4] * (one - o[4]);
            if let Some(dl) = d_alpha_logit {
                dr[4] += dl[r];
            }
        }
        self.mlp.backward(&batch.trace, d_raw, &mut grads.mlp, false);
    }

    pub fn map_point(&self, p: PixelCoord) -> Result<MappingOutput> {
        let coords = vec![T::c(p.x), T::c(p.y), T::c(p.t)];
        let b = self.forward_batch(coords);
        if b.trace.output().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("mapping network produced a non-finite output".into()));
        }
        let o = b.row(0);
        Ok(MappingOutput {
            u1: o[0].f64(),
            v1: o[1].f64(),
            u2: o[2].f64(),
            v2: o[3].f64(),
            alpha: o[4].f64(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtlasField<T> {
    pub grid: HashGrid<T>,
    pub mlp: Mlp<T>,
}

pub struct AtlasBatch<T> {
    pub footprints: Vec<Footprint<T>>,
    pub trace: MlpTrace<T>,
    /// `rows × 3` colors in `[0, 1]`.
    pub rgb: Vec<T>,
}

impl<T: Real> AtlasField<T> {
    pub fn init<R: Rng>(config: AtlasConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            grid: HashGrid::init(config.grid, rng)?,
            mlp: Mlp::init(&config.dims(), 0.1, rng),
        })
    }

    pub fn zeros(config: AtlasConfig) -> Result<Self> {
        Ok(Self {
            grid: HashGrid::zeros(config.grid)?,
            mlp: Mlp::zeros(&config.dims()),
        })
    }

    pub fn config(&self) -> AtlasConfig {
        AtlasConfig {
            grid: *self.grid.config(),
            hidden_layers: self.mlp.layers.len() - 1,
            width: self.mlp.layers[0].outputs,
        }
    }

    /// `uv` holds `rows × (u, v)` in the full atlas plane.
    pub fn forward_batch(&self, uv: &[T]) -> Result<AtlasBatch<T>> {
        let rows = uv.len() / 2;
        let (feats, footprints) = self.grid.encode_batch(uv)?;
        let trace = self.mlp.forward(feats, rows);
        let half = T::c(0.5);
        let rgb = trace
            .output()
            .iter()
            .map(|&r| half * (r.tanh() + T::one()))
            .collect();
        Ok(AtlasBatch {
            footprints,
            trace,
            rgb,
        })
    }

    /// Backpropagates `d_rgb` into `grads`; returns the gradient with
    /// respect to the input UVs (`rows × 2`) when `want_uv` is set.
    pub fn backward_batch(
        &self,
        batch: &AtlasBatch<T>,
        d_rgb: &[T],
        grads: &mut AtlasField<T>,
        want_uv: bool,
    ) -> Option<Vec<T>> {
        let half = T::c(0.5);
        let one = T::one();
        // c = 0.5(tanh r + 1)  =>  dc/dr = 0.5(1 - tanh²) = 2c(1-c)
        let d_raw: Vec<T> = d_rgb
            .iter()
            .zip(&batch.rgb)
            .map(|(&d, &c)| {
                let th = c / half - one;
                d * half * (one - th * th)
            })
            .collect();
        let d_feat = self
            .mlp
            .backward(&batch.trace, d_raw, &mut grads.mlp, true)
            .unwrap();
        let mut d_uv = want_uv.then(|| vec![T::zero(); batch.trace.rows * 2]);
        self.grid
            .backward_batch(&batch.footprints, &d_feat, &mut grads.grid, d_uv.as_deref_mut());
        d_uv
    }

    /// Color at a point of the full `[0,1]²` atlas plane.
    pub fn atlas_color(&self, u: f64, v: f64) -> Result<[f64; 3]> {
        let b = self.forward_batch(&[T::c(u), T::c(v)])?;
        Ok([b.rgb[0].f64(), b.rgb[1].f64(), b.rgb[2].f64()])
    }
}

/// Both learned fields together; also serves as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Fields<T> {
    pub mapping: MappingField<T>,
    pub atlas: AtlasField<T>,
}

/// Which optimizer group a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Mapping,
    Atlas,
}

impl<T: Real> Fields<T> {
    pub fn init<R: Rng>(mapping: MappingConfig, atlas: AtlasConfig, rng: &mut R) -> Result<Self> {
        Ok(Self {
            mapping: MappingField::init(mapping, rng),
            atlas: AtlasField::init(atlas, rng)?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mapping: MappingField {
                mlp: self.mapping.mlp.zeros_like(),
            },
            atlas: AtlasField {
                grid: self.atlas.grid.zeros_like(),
                mlp: self.atlas.mlp.zeros_like(),
            },
        }
    }

    pub fn tensors(&self) -> Vec<(ParamGroup, TensorKind, &[T])> {
        let mut v: Vec<_> = self
            .mapping
            .mlp
            .tensors()
            .into_iter()
            .map(|(k, t)| (ParamGroup::Mapping, k, t))
            .collect();
        v.push((ParamGroup::Atlas, TensorKind::HashTable, self.atlas.grid.tables.as_slice()));
        v.extend(
            self.atlas
                .mlp
                .tensors()
                .into_iter()
                .map(|(k, t)| (ParamGroup::Atlas, k, t)),
        );
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, TensorKind, &mut [T])> {
        let mut v: Vec<_> = self
            .mapping
            .mlp
            .tensors_mut()
            .into_iter()
            .map(|(k, t)| (ParamGroup::Mapping, k, t))
            .collect();
        v.push((
            ParamGroup::Atlas,
            TensorKind::HashTable,
            self.atlas.grid.tables.as_mut_slice(),
        ));
        v.extend(
            self.atlas
                .mlp
                .tensors_mut()
                .into_iter()
                .map(|(k, t)| (ParamGroup::Atlas, k, t)),
        );
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (group, kind, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite {kind:?} parameter in {group:?} field")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Fields<U> {
        Fields {
            mapping: MappingField {
                mlp: self.mapping.mlp.cast(),
            },
            atlas: AtlasField {
                grid: self.atlas.grid.cast(),
                mlp: self.atlas.mlp.cast(),
            },
        }
    }
}

/// `alpha · c_f + (1 - alpha) · c_b` per channel.
#[inline]
pub fn composite<T: Real>(c_f: [T; 3], c_b: [T; 3], alpha: T) -> [T; 3] {
    let beta = T::one() - alpha;
    [
        alpha * c_f[0] + beta * c_b[0],
        alpha * c_f[1] + beta * c_b[1],
        alpha * c_f[2] + beta * c_b[2],
    ]
}

/// Rows rendered per network batch.
const RENDER_CHUNK: usize = 4096;

fn view_coords<T: Real>(view: usize, views: usize, width: usize, height: usize, start: usize, end: usize) -> Vec<T> {
    let mut coords = Vec::with_capacity((end - start) * 3);
    for i in start..end {
        let p = PixelCoord::from_pixel((i % width) as f64, (i / width) as f64, view, width, height, views);
        coords.extend([T::c(p.x), T::c(p.y), T::c(p.t)]);
    }
    coords
}

/// Evaluates the mapping field at every pixel of `view`; returns
/// `H·W × 5` activated outputs.
pub fn map_view<T: Real>(mapping: &MappingField<T>, view: usize, views: usize, width: usize, height: usize) -> Result<Vec<T>> {
    let n = width * height;
    let mut out = Vec::with_capacity(n * MAP_OUT);
    for start in (0..n).step_by(RENDER_CHUNK) {
        let end = (start + RENDER_CHUNK).min(n);
        let b = mapping.forward_batch(view_coords(view, views, width, height, start, end));
        if b.out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("mapping network produced a non-finite output".into()));
        }
        out.extend_from_slice(&b.out);
    }
    Ok(out)
}

/// Field render: map every pixel, evaluate both atlas colors, composite.
pub fn render_view<T: Real>(fields: &Fields<T>, view: usize, views: usize, width: usize, height: usize) -> Result<Image> {
    if view >= views {
        return Err(Error::Index { index: view, len: views });
    }
    let mapped = map_view(&fields.mapping, view, views, width, height)?;
    let mut img = Image::new(width, height, 3);
    let n = width * height;
    for start in (0..n).step_by(RENDER_CHUNK) {
        let end = (start + RENDER_CHUNK).min(n);
        let m = &mapped[start * MAP_OUT..end * MAP_OUT];
        let mut uv = Vec::with_capacity((end - start) * 4);
        for r in m.chunks_exact(MAP_OUT) {
            uv.extend([r[0], r[1]]);
        }
        for r in m.chunks_exact(MAP_OUT) {
            uv.extend([r[2], r[3]]);
        }
        let b = fields.atlas.forward_batch(&uv)?;
        let rows = end - start;
        for (i, r) in m.chunks_exact(MAP_OUT).enumerate() {
            let cf = [b.rgb[i * 3], b.rgb[i * 3 + 1], b.rgb[i * 3 + 2]];
            let j = rows + i;
            let cb = [b.rgb[j * 3], b.rgb[j * 3 + 1], b.rgb[j * 3 + 2]];
            let c = composite(cf, cb, r[4]);
            let o = (start + i) * 3;
            for k in 0..3 {
                img.data[o + k] = c[k].f64() as f32;
            }
        }
    }
    Ok(img)
}

/// Effective foreground weight in the texture render path.
///
/// A fully transparent texel hides the foreground. Otherwise the learned
/// per-pixel alpha is rescaled by how much the edited foreground texture's
/// alpha differs from the reference (unedited) alpha at the same UV. Where
/// the reference is empty the edited alpha is used directly, so content
/// added by an edit becomes visible.
#[inline]
pub fn edited_alpha(learned: f32, edited: f32, reference: f32) -> f32 {
    let a = if edited <= 0.0 {
        0.0
    } else if edited == reference {
        learned
    } else if reference > 1e-6 {
        learned * edited / reference
    } else {
        edited
    };
    a.clamp(0.0, 1.0)
}

/// Texture render: map every pixel, bilinearly sample the rasterized
/// foreground (RGBA) and background (RGB) textures at the per-square
/// normalized UVs, composite with the learned alpha adjusted by
/// [`edited_alpha`]. `reference` is the unedited foreground texture; `None`
/// means `fg` itself is unedited.
pub fn render_view_from_textures<T: Real>(
    mapping: &MappingField<T>,
    view: usize,
    views: usize,
    width: usize,
    height: usize,
    fg: &Image,
    bg: &Image,
    reference: Option<&Image>,
) -> Result<Image> {
    if fg.width != bg.width || fg.height != bg.height {
        return Err(Error::Dimension(format!(
            "foreground atlas {}x{} vs background atlas {}x{}",
            fg.width, fg.height, bg.width, bg.height
        )));
    }
    if fg.channels != 4 || bg.channels < 3 {
        return Err(Error::Dimension("foreground atlas must be RGBA, background RGB".into()));
    }
    let reference = reference.unwrap_or(fg);
    if !reference.same_shape(fg) {
        return Err(Error::Dimension("reference atlas differs from foreground atlas".into()));
    }
    if view >= views {
        return Err(Error::Index { index: view, len: views });
    }
    let mapped = map_view(mapping, view, views, width, height)?;
    let mut img = Image::new(width, height, 3);
    let (mut f, mut b, mut r) = ([0f32; 4], [0f32; 4], [0f32; 4]);
    for (i, m) in mapped.chunks_exact(MAP_OUT).enumerate() {
        let (fu, fv) = (2.0 * m[0].f64() as f32, 2.0 * m[1].f64() as f32);
        let (bu, bv) = (2.0 * m[2].f64() as f32 - 1.0, 2.0 * m[3].f64() as f32 - 1.0);
        fg.sample_bilinear(fu, fv, &mut f);
        bg.sample_bilinear(bu, bv, &mut b);
        reference.sample_bilinear(fu, fv, &mut r);
        let alpha = edited_alpha(m[4].f64() as f32, f[3], r[3]);
        let c = composite([f[0], f[1], f[2]], [b[0], b[1], b[2]], alpha);
        img.data[i * 3..i * 3 + 3].copy_from_slice(&c);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_atlas() -> AtlasConfig {
        AtlasConfig {
            grid: HashGridConfig {
                levels: 4,
                base_resolution: 4,
                per_level_scale: 1.5,
                table_size: 1 << 10,
                feature_dim: 2,
            },
            hidden_layers: 2,
            width: 16,
        }
    }

    #[test]
    fn zeroed_output_layer_gives_centred_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m: MappingField<f64> = MappingField::init(MappingConfig { layers: 4, width: 32 }, &mut rng);
        let last = m.mlp.layers.last_mut().unwrap();
        last.weight.iter_mut().for_each(|w| *w = 0.0);
        for p in [(0.0, 0.0, 0.0), (0.3, 0.9, 0.5), (1.0, 1.0, 1.0)] {
            let o = m.map_point(PixelCoord::new(p.0, p.1, p.2).unwrap()).unwrap();
            assert_eq!((o.u1, o.v1, o.u2, o.v2, o.alpha), (0.25, 0.25, 0.75, 0.75, 0.5));
        }
        m.mlp.layers.last_mut().unwrap().bias[4] = 1e4;
        let o = m.map_point(PixelCoord::new(0.5, 0.5, 0.5).unwrap()).unwrap();
        assert_eq!(o.alpha, 1.0);
    }

    #[test]
    fn zeroed_color_network_is_mid_grey() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a: AtlasField<f64> = AtlasField::init(small_atlas(), &mut rng).unwrap();
        a.mlp = a.mlp.zeros_like();
        assert_eq!(a.atlas_color(0.1, 0.9).unwrap(), [0.5; 3]);
        assert!(matches!(a.atlas_color(1.2, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn composite_edges() {
        let cf = [0.2f64, 0.4, 0.6];
        let cb = [0.9f64, 0.1, 0.3];
        assert_eq!(composite(cf, cb, 1.0), cf);
        assert_eq!(composite(cf, cb, 0.0), cb);
        assert_eq!(composite([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.5), [0.5, 0.0, 0.5]);
    }

    #[test]
    fn zero_fields_render_mid_grey() {
        let fields: Fields<f32> = Fields {
            mapping: MappingField::zeros(MappingConfig { layers: 3, width: 8 }),
            atlas: AtlasField::zeros(small_atlas()).unwrap(),
        };
        let img = render_view(&fields, 0, 2, 5, 4).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn render_pixel_matches_hand_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fields: Fields<f64> = Fields::init(MappingConfig { layers: 4, width: 16 }, small_atlas(), &mut rng).unwrap();
        let img = render_view(&fields, 0, 3, 6, 5).unwrap();
        let m = fields.mapping.map_point(PixelCoord::new(0.0, 0.0, 0.0).unwrap()).unwrap();
        let cf = fields.atlas.atlas_color(m.u1, m.v1).unwrap();
        let cb = fields.atlas.atlas_color(m.u2, m.v2).unwrap();
        let c = composite(cf, cb, m.alpha);
        for k in 0..3 {
            assert_eq!(img.data[k], c[k] as f32);
        }
    }

    #[test]
    fn fg_and_bg_squares_are_distinct_inputs() {
        // The two squares share weights but not coordinates.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: AtlasField<f64> = AtlasField::init(small_atlas(), &mut rng).unwrap();
        let f = a.grid.encode(0.2, 0.3).unwrap();
        let b = a.grid.encode(0.7, 0.8).unwrap();
        assert_ne!(f, b);
    }

    #[test]
    fn edited_alpha_rules() {
        assert_eq!(edited_alpha(0.7, 0.4, 0.4), 0.7);
        assert_eq!(edited_alpha(0.7, 0.0, 0.0), 0.0);
        assert_eq!(edited_alpha(0.7, 0.0, 0.4), 0.0);
        assert_eq!(edited_alpha(0.7, 0.2, 0.4), 0.35);
        assert_eq!(edited_alpha(0.01, 1.0, 0.0), 1.0);
        assert_eq!(edited_alpha(0.5, 1.0, 0.1), 1.0);
    }

    #[test]
    fn texture_render_checks_shapes() {
        let m: MappingField<f32> = MappingField::zeros(MappingConfig { layers: 2, width: 4 });
        let fg = Image::new(8, 8, 4);
        let bg = Image::new(9, 8, 3);
        assert!(matches!(
            render_view_from_textures(&m, 0, 1, 4, 4, &fg, &bg, None),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn transparent_foreground_renders_background_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m: MappingField<f32> = MappingField::init(MappingConfig { layers: 3, width: 16 }, &mut rng);
        let fg = Image::from_fn(8, 8, 4, |x, _, c| if c == 3 { 0.0 } else { x as f32 / 7.0 });
        let bg = Image::from_fn(8, 8, 3, |x, y, c| ((x + y + c) % 5) as f32 / 4.0);
        let img = render_view_from_textures(&m, 1, 2, 6, 6, &fg, &bg, None).unwrap();
        let mapped = map_view(&m, 1, 2, 6, 6).unwrap();
        let mut b = [0f32; 3];
        for (i, r) in mapped.chunks_exact(MAP_OUT).enumerate() {
            bg.sample_bilinear(2.0 * r[2] - 1.0, 2.0 * r[3] - 1.0, &mut b);
            assert_eq!(&img.data[i * 3..i * 3 + 3], &b);
        }
    }
}
