use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{CtImage, HU_MAX, HU_MIN};
use crate::error::{Error, Result};

/// Parameters of the synthetic ellipse phantom.
///
/// The first ellipse is a large "body" outline; the remaining ones are
/// smaller inclusions placed inside it. Every ellipse is alpha-blended over
/// what is already painted, so pixel values stay inside the convex hull of
/// the background and the per-ellipse HU range.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    pub min_ellipses: usize,
    pub max_ellipses: usize,
    pub hu_lo: f32,
    pub hu_hi: f32,
    pub background_hu: f32,
    /// Edge softness in pixels.
    pub edge_px: f32,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            min_ellipses: 3,
            max_ellipses: 8,
            hu_lo: -100.0,
            hu_hi: 300.0,
            background_hu: -1000.0,
            edge_px: 1.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::Invalid(format!("phantom size {} < 32", self.size)));
        }
        if self.min_ellipses > self.max_ellipses {
            return Err(Error::Invalid(format!(
                "ellipse count range {}..={} is empty",
                self.min_ellipses, self.max_ellipses
            )));
        }
        if self.hu_lo > self.hu_hi {
            return Err(Error::Invalid(format!(
                "phantom HU range [{}, {}] is reversed",
                self.hu_lo, self.hu_hi
            )));
        }
        for v in [self.hu_lo, self.hu_hi, self.background_hu] {
            if !(HU_MIN..=HU_MAX).contains(&v) {
                return Err(Error::Invalid(format!(
                    "phantom HU value {v} outside [{HU_MIN}, {HU_MAX}]"
                )));
            }
        }
        if !(self.edge_px > 0.0 && self.edge_px.is_finite()) {
            return Err(Error::Invalid("phantom edge softness must be positive".into()));
        }
        Ok(())
    }

    /// Inclusive bounds every generated pixel respects.
    pub fn value_range(&self) -> (f32, f32) {
        (
            self.hu_lo.min(self.background_hu),
            self.hu_hi.max(self.background_hu),
        )
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    hu: f64,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<CtImage> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size;
    let size = n as f64;
    let count = rng.random_range(spec.min_ellipses..=spec.max_ellipses);

    let mut ellipses = Vec::with_capacity(count);
    for i in 0..count {
        let (axis_range, offset) = if i == 0 { (0.30..0.44, 0.05) } else { (0.04..0.16, 0.22) };
        let a = rng.random_range(axis_range.clone()) * size;
        let b = rng.random_range(axis_range) * size;
        let cx = size / 2.0 + rng.random_range(-offset..offset) * size;
        let cy = size / 2.0 + rng.random_range(-offset..offset) * size;
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let hu = rng.random_range(spec.hu_lo as f64..=spec.hu_hi as f64);
        ellipses.push(Ellipse {
            cx,
            cy,
            a,
            b,
            cos: angle.cos(),
            sin: angle.sin(),
            hu,
        });
    }

    let edge = spec.edge_px as f64;
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let mut v = spec.background_hu as f64;
            for e in &ellipses {
                let dx = px - e.cx;
                let dy = py - e.cy;
                let u = (dx * e.cos + dy * e.sin) / e.a;
                let w = (-dx * e.sin + dy * e.cos) / e.b;
                let r = (u * u + w * w).sqrt();
                // approximate signed distance to the boundary, in pixels
                let dist = (1.0 - r) * e.a.min(e.b);
                let alpha = 1.0 / (1.0 + (-dist / edge).exp());
                v = v * (1.0 - alpha) + e.hu * alpha;
            }
            pixels.push(v as f32);
        }
    }
    let (lo, hi) = spec.value_range();
    for p in pixels.iter_mut() {
        *p = p.clamp(lo, hi);
    }
    CtImage::new(format!("phantom-{:08}", spec.seed), n, n, pixels)
}
