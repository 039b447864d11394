use crate::error::{Error, Result};

/// Lowest representable attenuation, air in most scanner calibrations.
pub const HU_MIN: f32 = -1024.0;
/// Upper clamp; dense bone and contrast stay well below this.
pub const HU_MAX: f32 = 4000.0;

/// A single-channel slice in Hounsfield units, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CtImage {
    id: String,
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl CtImage {
    pub fn new(id: impl Into<String>, width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::Invalid(format!("image `{id}` has an empty grid")));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "image `{id}`: {} pixels for a {width}x{height} grid",
                pixels.len()
            )));
        }
        if let Some(pos) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("image `{id}` at pixel {pos}"),
            });
        }
        if let Some(v) = pixels.iter().find(|v| **v < HU_MIN || **v > HU_MAX) {
            return Err(Error::Invalid(format!(
                "image `{id}`: value {v} HU outside [{HU_MIN}, {HU_MAX}]"
            )));
        }
        Ok(Self {
            id,
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from HU values, clamping them into the valid range first.
    pub fn from_hu_clamped(id: impl Into<String>, width: usize, height: usize, mut pixels: Vec<f32>) -> Result<Self> {
        for v in pixels.iter_mut() {
            if v.is_finite() {
                *v = v.clamp(HU_MIN, HU_MAX);
            }
        }
        Self::new(id, width, height, pixels)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// An HU interval mapped affinely onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    lo: f32,
    hi: f32,
}

impl WindowSpec {
    /// Window used for all network inputs and losses.
    pub const TRAINING: WindowSpec = WindowSpec { lo: -1000.0, hi: 2000.0 };
    /// Abdominal display window used for reported metrics.
    pub const ABDOMINAL: WindowSpec = WindowSpec { lo: -160.0, hi: 240.0 };

    pub fn new(lo: f32, hi: f32) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Invalid(format!("window [{lo}, {hi}] must satisfy lo < hi")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f32 {
        self.lo
    }

    pub fn hi(&self) -> f32 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi as f64 - self.lo as f64
    }

    pub fn normalize(&self, hu: f32) -> f32 {
        ((hu as f64 - self.lo as f64) / self.width()).clamp(0.0, 1.0) as f32
    }

    pub fn denormalize(&self, v: f32) -> f32 {
        (self.lo as f64 + v as f64 * self.width()) as f32
    }
}

/// A windowed image: values in [0, 1], same layout as the source slice.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

pub fn apply_window(img: &CtImage, w: WindowSpec) -> Result<WindowedImage> {
    if let Some(pos) = img.pixels.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("image `{}` at pixel {pos}", img.id),
        });
    }
    Ok(WindowedImage {
        id: img.id.clone(),
        width: img.width,
        height: img.height,
        values: img.pixels.iter().map(|&hu| w.normalize(hu)).collect(),
    })
}

const INVERT_TOLERANCE: f32 = 1e-6;

pub fn invert_window(grid: &WindowedImage, w: WindowSpec) -> Result<CtImage> {
    let mut pixels = Vec::with_capacity(grid.values.len());
    for (i, &v) in grid.values.iter().enumerate() {
        if !v.is_finite() || !(-INVERT_TOLERANCE..=1.0 + INVERT_TOLERANCE).contains(&v) {
            return Err(Error::Invalid(format!(
                "windowed value {v} at index {i} of `{}` outside [0, 1]",
                grid.id
            )));
        }
        pixels.push(w.denormalize(v.clamp(0.0, 1.0)));
    }
    CtImage::from_hu_clamped(grid.id.clone(), grid.width, grid.height, pixels)
}
