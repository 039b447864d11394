use super::image::{same_shape, GrayImage};
use crate::error::{Error, Result};

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.pixels.len() as f64)
}

/// `10 log10(range^2 / mse)` in dB; `+inf` for identical images.
pub fn psnr(a: &GrayImage, b: &GrayImage, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::Invalid(format!("data range {data_range} must be positive")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}
