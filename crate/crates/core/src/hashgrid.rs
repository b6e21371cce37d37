//! Multiresolution hash-grid encoding of 2D coordinates.
//!
//! Each level overlays a square grid of `N_l = floor(N_min · s^l)` cells on
//! the unit square. The `(N_l + 1)²` corner vertices index a per-level table
//! of `F`-dimensional features: densely when the vertex grid fits into the
//! table, through a spatial hash otherwise. A lookup bilinearly blends the
//! four corners of the enclosing cell; levels are concatenated coarse to
//! fine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Real;

/// Second hashing prime; the first is 1.
pub const HASH_PRIME_Y: u32 = 2_654_435_761;

/// Tables are initialized uniformly in `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    pub base_resolution: usize,
    pub per_level_scale: f64,
    pub table_size: usize,
    pub feature_dim: usize,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 16,
            base_resolution: 16,
            per_level_scale: 1.5,
            table_size: 1 << 15,
            feature_dim: 2,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("hash grid needs at least one level".into()));
        }
        if self.base_resolution < 2 {
            return Err(Error::Config("hash grid base resolution must be >= 2".into()));
        }
        if !(self.per_level_scale > 1.0) || !self.per_level_scale.is_finite() {
            return Err(Error::Config("hash grid per-level scale must be > 1".into()));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "hash table size {} is not a power of two",
                self.table_size
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("hash grid feature dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.feature_dim
    }

    fn resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * self.per_level_scale.powi(level as i32)).floor() as usize
    }
}

/// Corners and weights touched by one point at one level, kept for the
/// backward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct Footprint<T> {
    pub index: [u32; 4],
    pub weight: [T; 4],
    pub fx: T,
    pub fy: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashGrid<T> {
    config: HashGridConfig,
    resolutions: Vec<usize>,
    /// `levels × table_size × feature_dim`, level-major.
    pub tables: Vec<T>,
}

impl<T: Real> HashGrid<T> {
    pub fn zeros(config: HashGridConfig) -> Result<Self> {
        config.validate()?;
        let resolutions = (0..config.levels).map(|l| config.resolution(l)).collect();
        Ok(Self {
            config,
            resolutions,
            tables: vec![T::zero(); config.levels * config.table_size * config.feature_dim],
        })
    }

    pub fn init<R: Rng>(config: HashGridConfig, rng: &mut R) -> Result<Self> {
        let mut grid = Self::zeros(config)?;
        for v in grid.tables.iter_mut() {
            *v = T::c(rng.gen_range(-INIT_RANGE..=INIT_RANGE));
        }
        Ok(grid)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            resolutions: self.resolutions.clone(),
            tables: vec![T::zero(); self.tables.len()],
        }
    }

    pub fn config(&self) -> &HashGridConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn level_resolution(&self, level: usize) -> Result<usize> {
        self.resolutions.get(level).copied().ok_or(Error::Index {
            index: level,
            len: self.config.levels,
        })
    }

    /// Whether `level` addresses its table densely.
    pub fn is_dense(&self, level: usize) -> bool {
        let side = self.resolutions[level] + 1;
        side * side <= self.config.table_size
    }

    /// Table slot of vertex `(ix, iy)` at `level`; callers keep
    /// `0 <= ix, iy <= level_resolution(level)`.
    pub fn cell_index(&self, ix: u32, iy: u32, level: usize) -> usize {
        if self.is_dense(level) {
            ix as usize + iy as usize * (self.resolutions[level] + 1)
        } else {
            hash_index(ix, iy, self.config.table_size)
        }
    }

    fn check_domain(u: T, v: T) -> Result<()> {
        let ok = |x: T| x.is_finite() && x >= T::zero() && x <= T::one();
        if ok(u) && ok(v) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "hash-grid coordinate ({}, {}) outside [0,1]²",
                u.f64(),
                v.f64()
            )))
        }
    }

    #[inline]
    fn footprint(&self, u: T, v: T, level: usize) -> Footprint<T> {
        let n = self.resolutions[level];
        let nt = T::c(n as f64);
        let (x, y) = (u * nt, v * nt);
        // Coordinates exactly at 1.0 fall into the last cell.
        let ix = x.floor().to_usize().unwrap_or(0).min(n - 1);
        let iy = y.floor().to_usize().unwrap_or(0).min(n - 1);
        let fx = x - T::c(ix as f64);
        let fy = y - T::c(iy as f64);
        let (ix, iy) = (ix as u32, iy as u32);
        let one = T::one();
        Footprint {
            index: [
                self.cell_index(ix, iy, level) as u32,
                self.cell_index(ix + 1, iy, level) as u32,
                self.cell_index(ix, iy + 1, level) as u32,
                self.cell_index(ix + 1, iy + 1, level) as u32,
            ],
            weight: [
                (one - fx) * (one - fy),
                fx * (one - fy),
                (one - fx) * fy,
                fx * fy,
            ],
            fx,
            fy,
        }
    }

    #[inline]
    fn entry(&self, level: usize, index: u32) -> &[T] {
        let f = self.config.feature_dim;
        let base = (level * self.config.table_size + index as usize) * f;
        &self.tables[base..base + f]
    }

    /// Feature vector of length `levels · feature_dim` for one point.
    pub fn encode(&self, u: T, v: T) -> Result<Vec<T>> {
        Self::check_domain(u, v)?;
        let mut out = vec![T::zero(); self.output_dim()];
        self.encode_point(u, v, &mut out, None);
        Ok(out)
    }

    fn encode_point(&self, u: T, v: T, out: &mut [T], mut keep: Option<&mut [Footprint<T>]>) {
        let f = self.config.feature_dim;
        for level in 0..self.config.levels {
            let fp = self.footprint(u, v, level);
            let dst = &mut out[level * f..(level + 1) * f];
            dst.iter_mut().for_each(|d| *d = T::zero());
            for c in 0..4 {
                let e = self.entry(level, fp.index[c]);
                for (d, &x) in dst.iter_mut().zip(e) {
                    *d += fp.weight[c] * x;
                }
            }
            if let Some(k) = keep.as_deref_mut() {
                k[level] = fp;
            }
        }
    }

    /// Encodes `rows` points given as interleaved `(u, v)` pairs. Returns the
    /// features (`rows × output_dim`) and the footprints for `backward`.
    pub fn encode_batch(&self, uv: &[T]) -> Result<(Vec<T>, Vec<Footprint<T>>)> {
        let rows = uv.len() / 2;
        let d = self.output_dim();
        let levels = self.config.levels;
        let mut feats = vec![T::zero(); rows * d];
        let mut fps = vec![Footprint::default(); rows * levels];
        for r in 0..rows {
            let (u, v) = (uv[2 * r], uv[2 * r + 1]);
            Self::check_domain(u, v)?;
            self.encode_point(
                u,
                v,
                &mut feats[r * d..(r + 1) * d],
                Some(&mut fps[r * levels..(r + 1) * levels]),
            );
        }
        Ok((feats, fps))
    }

    /// Scatters `d_feat` (`rows × output_dim`) into `grad` (a table-shaped
    /// buffer) and, when `d_uv` is given, accumulates the gradient with
    /// respect to the input coordinates.
    pub fn backward_batch(
        &self,
        footprints: &[Footprint<T>],
        d_feat: &[T],
        grad: &mut HashGrid<T>,
        mut d_uv: Option<&mut [T]>,
    ) {
        let f = self.config.feature_dim;
        let levels = self.config.levels;
        let d = self.output_dim();
        let ts = self.config.table_size;
        let rows = footprints.len() / levels;
        let one = T::one();
        for r in 0..rows {
            let g_row = &d_feat[r * d..(r + 1) * d];
            let (mut du, mut dv) = (T::zero(), T::zero());
            for level in 0..levels {
                let fp = &footprints[r * levels + level];
                let g = &g_row[level * f..(level + 1) * f];
                for c in 0..4 {
                    let base = (level * ts + fp.index[c] as usize) * f;
                    for (k, &gk) in g.iter().enumerate() {
                        grad.tables[base + k] += fp.weight[c] * gk;
                    }
                }
                if d_uv.is_some() {
                    let n = T::c(self.resolutions[level] as f64);
                    let e: [&[T]; 4] = [
                        self.entry(level, fp.index[0]),
                        self.entry(level, fp.index[1]),
                        self.entry(level, fp.index[2]),
                        self.entry(level, fp.index[3]),
                    ];
                    for (k, &gk) in g.iter().enumerate() {
                        let dfx = (one - fp.fy) * (e[1][k] - e[0][k]) + fp.fy * (e[3][k] - e[2][k]);
                        let dfy = (one - fp.fx) * (e[2][k] - e[0][k]) + fp.fx * (e[3][k] - e[1][k]);
                        du += gk * dfx * n;
                        dv += gk * dfy * n;
                    }
                }
            }
            if let Some(out) = d_uv.as_deref_mut() {
                out[2 * r] += du;
                out[2 * r + 1] += dv;
            }
        }
    }

    /// Table gradients of one lookup: each touched entry receives its
    /// bilinear weight times the upstream gradient; colliding corners
    /// accumulate.
    pub fn encode_backward(&self, u: T, v: T, upstream: &[T], grad: &mut HashGrid<T>) -> Result<()> {
        Self::check_domain(u, v)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient has {} entries, encoding has {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let levels = self.config.levels;
        let fps: Vec<_> = (0..levels).map(|l| self.footprint(u, v, l)).collect();
        self.backward_batch(&fps, upstream, grad, None);
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> HashGrid<U> {
        HashGrid {
            config: self.config,
            resolutions: self.resolutions.clone(),
            tables: self.tables.iter().map(|&v| U::c(v.f64())).collect(),
        }
    }
}

/// `(ix · 1 XOR iy · π₂) mod table_size` in 32-bit wrapping arithmetic.
#[inline]
pub fn hash_index(ix: u32, iy: u32, table_size: usize) -> usize {
    (ix ^ iy.wrapping_mul(HASH_PRIME_Y)) as usize & (table_size - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> HashGrid<f64> {
        HashGrid::init(HashGridConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn level_resolutions() {
        let g = grid();
        assert_eq!(g.level_resolution(0).unwrap(), 16);
        assert_eq!(g.level_resolution(1).unwrap(), 24);
        // 16 · (3/2)^15 = 3^15 / 2^11 = 14348907 / 2048 = 7006.3…
        assert_eq!(14_348_907u64 / 2048, 7006);
        assert_eq!(g.level_resolution(15).unwrap(), 7006);
        assert!(matches!(g.level_resolution(16), Err(Error::Index { index: 16, len: 16 })));
    }

    #[test]
    fn cell_indexing() {
        let g = grid();
        assert!(g.is_dense(0));
        assert_eq!(g.cell_index(3, 2, 0), 37);
        for l in 0..16 {
            assert_eq!(g.cell_index(0, 0, l), 0);
        }
        assert!(!g.is_dense(15));
        assert_eq!(g.cell_index(1, 1, 15), (1u64 ^ 2_654_435_761u64) as usize % (1 << 15));
        // (N+1)² <= 2^15 holds up to N = 180: levels 0..=5 are dense.
        let dense: Vec<bool> = (0..16).map(|l| g.is_dense(l)).collect();
        assert_eq!(dense.iter().filter(|d| **d).count(), 6);
    }

    #[test]
    fn config_validation() {
        let bad = [
            HashGridConfig { levels: 0, ..Default::default() },
            HashGridConfig { base_resolution: 1, ..Default::default() },
            HashGridConfig { per_level_scale: 1.0, ..Default::default() },
            HashGridConfig { table_size: 1000, ..Default::default() },
            HashGridConfig { feature_dim: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(HashGrid::<f32>::zeros(c), Err(Error::Config(_))));
        }
    }

    #[test]
    fn corner_and_centre_lookups() {
        let g = grid();
        let f = g.encode(3.0 / 16.0, 5.0 / 16.0).unwrap();
        let e = g.entry(0, g.cell_index(3, 5, 0) as u32);
        assert_eq!(&f[0..2], e);

        let f = g.encode(3.5 / 16.0, 5.5 / 16.0).unwrap();
        for k in 0..2 {
            let mean = (g.entry(0, g.cell_index(3, 5, 0) as u32)[k]
                + g.entry(0, g.cell_index(4, 5, 0) as u32)[k]
                + g.entry(0, g.cell_index(3, 6, 0) as u32)[k]
                + g.entry(0, g.cell_index(4, 6, 0) as u32)[k])
                * 0.25;
            assert!((f[k] - mean).abs() < 1e-18);
        }
    }

    #[test]
    fn domain_errors() {
        let g = grid();
        assert!(matches!(g.encode(-0.01, 0.5), Err(Error::Domain(_))));
        assert!(matches!(g.encode(0.5, 1.0001), Err(Error::Domain(_))));
        assert!(matches!(g.encode(f64::NAN, 0.5), Err(Error::Domain(_))));
        assert!(g.encode(1.0, 1.0).is_ok());
    }

    #[test]
    fn backward_weights() {
        let g = grid();
        let up: Vec<f64> = (0..32).map(|i| i as f64 + 1.0).collect();
        // Corner-aligned: one entry per level carries the full gradient.
        let mut acc = g.zeros_like();
        g.encode_backward(0.25, 0.5, &up, &mut acc).unwrap();
        for l in 0..16 {
            let slice = &acc.tables[l * (1 << 15) * 2..(l + 1) * (1 << 15) * 2];
            let nz: Vec<_> = slice.iter().filter(|v| **v != 0.0).collect();
            if g.resolutions[l] % 4 == 0 {
                assert_eq!(nz.len(), 2, "level {l}");
            }
        }
        let idx = g.cell_index(4, 8, 0);
        assert_eq!(&acc.tables[idx * 2..idx * 2 + 2], &up[0..2]);

        // Cell centre: 0.25 of the upstream on each of the four corners.
        let mut acc = g.zeros_like();
        g.encode_backward(3.5 / 16.0, 5.5 / 16.0, &up, &mut acc).unwrap();
        for (ix, iy) in [(3, 5), (4, 5), (3, 6), (4, 6)] {
            let i = g.cell_index(ix, iy, 0);
            assert_eq!(acc.tables[i * 2], 0.25);
            assert_eq!(acc.tables[i * 2 + 1], 0.5);
        }
    }
}
