use crate::error::{Error, Result};
use crate::image::Image;

/// Dense correspondence from view `from` to view `to`: per pixel a
/// displacement in pixels and a confidence in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub from: usize,
    pub to: usize,
    pub width: usize,
    pub height: usize,
    /// `height × width × (dx, dy, confidence)`.
    pub data: Vec<f32>,
}

impl Flow {
    pub fn zeros(from: usize, to: usize, width: usize, height: usize) -> Self {
        Self {
            from,
            to,
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32, f32) {
        let o = (y * self.width + x) * 3;
        (self.data[o], self.data[o + 1], self.data[o + 2])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, dx: f32, dy: f32, conf: f32) {
        let o = (y * self.width + x) * 3;
        self.data[o] = dx;
        self.data[o + 1] = dy;
        self.data[o + 2] = conf;
    }
}

/// The training inputs of one scene. Immutable once validated.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    width: usize,
    height: usize,
    views: Vec<Image>,
    fg_masks: Option<Vec<Image>>,
    inpainted: Option<Vec<Image>>,
    flows: Vec<Flow>,
}

impl ViewSet {
    pub fn new(
        views: Vec<Image>,
        fg_masks: Option<Vec<Image>>,
        inpainted: Option<Vec<Image>>,
        flows: Vec<Flow>,
    ) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::decode("views", "no views found"))?;
        let (width, height) = (first.width, first.height);
        let t = views.len();
        let check_set = |name: &str, set: &[Image], channels: usize| -> Result<()> {
            if set.len() != t {
                return Err(Error::Dimension(format!(
                    "{} {name} for {t} views",
                    set.len()
                )));
            }
            for (i, img) in set.iter().enumerate() {
                if img.width != width || img.height != height {
                    return Err(Error::Dimension(format!(
                        "{name} {i} is {}x{}, views are {width}x{height}",
                        img.width, img.height
                    )));
                }
                if img.channels != channels {
                    return Err(Error::Dimension(format!(
                        "{name} {i} has {} channels, expected {channels}",
                        img.channels
                    )));
                }
            }
            Ok(())
        };
        check_set("views", &views, 3)?;
        if let Some(m) = &fg_masks {
            check_set("masks", m, 1)?;
        }
        if let Some(p) = &inpainted {
            check_set("inpainted views", p, 3)?;
        }
        for f in &flows {
            if f.width != width || f.height != height {
                return Err(Error::Dimension(format!(
                    "flow {}->{} is {}x{}, views are {width}x{height}",
                    f.from, f.to, f.width, f.height
                )));
            }
            if f.from >= t || f.to >= t || f.from == f.to {
                return Err(Error::Dimension(format!(
                    "flow {}->{} does not connect two distinct views of {t}",
                    f.from, f.to
                )));
            }
        }
        Ok(Self {
            width,
            height,
            views,
            fg_masks,
            inpainted,
            flows,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn views(&self) -> &[Image] {
        &self.views
    }

    pub fn fg_masks(&self) -> Option<&[Image]> {
        self.fg_masks.as_deref()
    }

    pub fn inpainted(&self) -> Option<&[Image]> {
        self.inpainted.as_deref()
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    #[inline]
    pub fn mask_at(&self, view: usize, x: usize, y: usize) -> Option<bool> {
        self.fg_masks
            .as_ref()
            .map(|m| m[view].data[y * self.width + x] > 0.5)
    }
}
