use crate::error::{Error, Result};

/// A `C x H x W` grid of continuous features, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{height}x{width} grid",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "latent feature grid".into(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The feature vector at one spatial position.
    pub fn vector_at(&self, y: usize, x: usize) -> Vec<f32> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }

    /// All position vectors in row-major order, flattened `(H*W) x C`.
    pub fn position_major(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for p in 0..plane {
                out[p * self.channels + c] = self.data[c * plane + p];
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Average-pools `latent` onto a coarser `height x width` grid with
/// non-overlapping blocks. Pooling onto the latent's own size is the identity.
pub fn pool_to_layer(latent: &FeatureGrid, height: usize, width: usize) -> Result<FeatureGrid> {
    if height == 0 || width == 0 || !latent.height.is_multiple_of(height) || !latent.width.is_multiple_of(width) {
        return Err(Error::Shape(format!(
            "cannot pool a {}x{} grid onto {height}x{width}",
            latent.height, latent.width
        )));
    }
    if (height, width) == (latent.height, latent.width) {
        return Ok(latent.clone());
    }
    let (by, bx) = (latent.height / height, latent.width / width);
    let inv = 1.0 / (by * bx) as f64;
    let mut data = Vec::with_capacity(latent.channels * height * width);
    for c in 0..latent.channels {
        for oy in 0..height {
            for ox in 0..width {
                let mut acc = 0.0f64;
                for y in oy * by..(oy + 1) * by {
                    for x in ox * bx..(ox + 1) * bx {
                        acc += latent.get(c, y, x) as f64;
                    }
                }
                data.push((acc * inv) as f32);
            }
        }
    }
    FeatureGrid::new(latent.channels, height, width, data)
}
