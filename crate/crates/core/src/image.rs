//! Float image buffers and 8-bit PNG I/O.
//!
//! All assets on disk are 8-bit PNG; in memory every channel is an `f32`
//! in `[0, 1]`, stored row-major with interleaved channels.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let o = self.offset(x, y);
        self.data[o + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let o = self.offset(x, y);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Bilinear lookup with corner-aligned texels: `s = 0` hits the centre of
    /// texel 0 and `s = 1` the centre of texel `width - 1`. Coordinates are
    /// clamped to `[0, 1]`.
    pub fn sample_bilinear(&self, s: f32, t: f32, out: &mut [f32]) {
        let fx = s.clamp(0.0, 1.0) * (self.width.saturating_sub(1)) as f32;
        let fy = t.clamp(0.0, 1.0) * (self.height.saturating_sub(1)) as f32;
        let x0 = (fx.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (fy.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = fx - x0 as f32;
        let ay = fy - y0 as f32;
        let w00 = (1.0 - ax) * (1.0 - ay);
        let w10 = ax * (1.0 - ay);
        let w01 = (1.0 - ax) * ay;
        let w11 = ax * ay;
        let (p00, p10, p01, p11) = (
            self.offset(x0, y0),
            self.offset(x1, y0),
            self.offset(x0, y1),
            self.offset(x1, y1),
        );
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = w00 * self.data[p00 + c]
                + w10 * self.data[p10 + c]
                + w01 * self.data[p01 + c]
                + w11 * self.data[p11 + c];
        }
    }

    /// Rounds every channel onto the 8-bit grid, which is what a PNG
    /// round trip does.
    pub fn quantized(&self) -> Image {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = quantize(*v) as f32 / 255.0;
        }
        out
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            channels,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    /// Drops or synthesizes channels. RGB → RGBA adds an opaque alpha.
    pub fn with_channels(&self, channels: usize) -> Image {
        if channels == self.channels {
            return self.clone();
        }
        Image::from_fn(self.width, self.height, channels, |x, y, c| {
            let px = self.pixel(x, y);
            match (self.channels, c) {
                (1, c) if c < 3 => px[0],
                (_, 3) if self.channels < 4 => 1.0,
                (sc, c) if c < sc => px[c],
                _ => px[0],
            }
        })
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|e| Error::decode(path.display(), e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let out = match img.color().channel_count() {
            1 | 2 => {
                let g = img.to_luma8();
                Image::from_u8(w, h, 1, g.as_raw())
            }
            3 => Image::from_u8(w, h, 3, img.to_rgb8().as_raw()),
            _ => Image::from_u8(w, h, 4, img.to_rgba8().as_raw()),
        };
        Ok(out)
    }

    /// Writes through a temporary file and renames, so readers never see a
    /// partially written image.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            n => return Err(Error::Dimension(format!("cannot encode {n}-channel image"))),
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("png.tmp");
        image::save_buffer_with_format(
            &tmp,
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::decode(tmp.display(), e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            n => return Err(Error::Dimension(format!("cannot encode {n}-channel image"))),
        };
        let mut buf = std::io::Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut buf,
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::decode("<memory>", e.to_string()))?;
        Ok(buf.into_inner())
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Peak signal-to-noise ratio in dB for signals in `[0, 1]`.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let mse = mse(a, b);
    if mse == 0.0 {
        return f64::INFINITY;
    }
    -10.0 * mse.log10()
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    assert!(a.same_shape(b), "mse: shape mismatch");
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = (x - y) as f64;
            d * d
        })
        .sum();
    sum / a.data.len() as f64
}

pub fn mean_abs_diff(a: &Image, b: &Image) -> f64 {
    assert!(a.same_shape(b), "mean_abs_diff: shape mismatch");
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x - y).abs() as f64)
        .sum();
    sum / a.data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(7, 5, 3, |x, y, c| ((x * 13 + y * 7 + c * 3) % 17) as f32 / 16.3);
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!((back.width, back.height, back.channels), (7, 5, 3));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        // quantized values survive exactly
        let q = img.quantized();
        q.save_png(&path).unwrap();
        assert_eq!(Image::load_png(&path).unwrap(), q);
    }

    #[test]
    fn bilinear_hits_texel_centres() {
        let img = Image::from_fn(4, 4, 1, |x, y, _| (x + 4 * y) as f32);
        let mut out = [0.0];
        img.sample_bilinear(1.0 / 3.0, 2.0 / 3.0, &mut out);
        assert!((out[0] - 9.0).abs() < 1e-5);
        img.sample_bilinear(1.0, 1.0, &mut out);
        assert_eq!(out[0], 15.0);
        img.sample_bilinear(0.5, 0.0, &mut out);
        assert!((out[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn psnr_of_identical_is_infinite() {
        let a = Image::filled(3, 3, 3, 0.25);
        assert!(psnr(&a, &a).is_infinite());
        let mut b = a.clone();
        b.data[0] = 0.35;
        let expected = -10.0 * (0.01f64 / 27.0).log10();
        assert!((psnr(&a, &b) - expected).abs() < 1e-4);
    }
}
