use super::image::{same_shape, GrayImage};
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filtering over valid positions only.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged
/// over positions where the window fits.
pub fn ssim(a: &GrayImage, b: &GrayImage, data_range: f64) -> Result<f64> {
    same_shape(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    if !(data_range > 0.0) {
        return Err(Error::Invalid(format!("data range {data_range} must be positive")));
    }
    let (w, h) = (a.width, a.height);
    let k = gaussian_kernel();
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.pixels.iter().zip(&b.pixels).map(|(&x, &y)| f(x, y)).collect() };
    let mu1 = filter_valid(&a.pixels, w, h, &k);
    let mu2 = filter_valid(&b.pixels, w, h, &k);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &k);
    let n = mu1.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (m1, m2) = (mu1[i], mu2[i]);
        let s1 = aa[i] - m1 * m1;
        let s2 = bb[i] - m2 * m2;
        let s12 = ab[i] - m1 * m2;
        sum += ((2.0 * m1 * m2 + c1) * (2.0 * s12 + c2)) / ((m1 * m1 + m2 * m2 + c1) * (s1 + s2 + c2));
    }
    Ok(sum / n as f64)
}
