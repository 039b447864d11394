use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::image::{same_shape, GrayImage};
use crate::error::{Error, Result};

pub const FSIM_MIN_SIDE: usize = 32;

const N_SCALES: usize = 4;
const N_ORIENTS: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ONF: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
const NOISE_K: f64 = 2.0;
const PC_EPS: f64 = 1e-4;
const LOWPASS_CUTOFF: f64 = 0.45;
const LOWPASS_ORDER: i32 = 15;
const T1: f64 = 0.85;
const T2: f64 = 160.0;

/// In-place 2-D FFT of a row-major `h x w` buffer.
fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for r in data.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    if inverse {
        let s = 1.0 / (w * h) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Normalized frequency coordinate of FFT bin `i` out of `n` (already
/// shifted so bin 0 is the zero frequency).
fn freq(i: usize, n: usize) -> f64 {
    let shifted = (i + n / 2) % n;
    if n % 2 == 1 {
        (shifted as f64 - (n - 1) as f64 / 2.0) / (n - 1) as f64
    } else {
        (shifted as f64 - (n / 2) as f64) / n as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Phase congruency map (log-Gabor bank, summed over orientations).
pub fn phase_congruency(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let n = w * h;
    let mut spectrum: Vec<Complex64> = img.pixels.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spectrum, w, h, false);

    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for y in 0..h {
        let fy = freq(y, h);
        for x in 0..w {
            let fx = freq(x, w);
            let i = y * w + x;
            let r = (fx * fx + fy * fy).sqrt();
            lowpass[i] = 1.0 / (1.0 + (r / LOWPASS_CUTOFF).powi(2 * LOWPASS_ORDER));
            radius[i] = if i == 0 { 1.0 } else { r };
            let t = (-fy).atan2(fx);
            sin_t[i] = t.sin();
            cos_t[i] = t.cos();
        }
    }
    let log_gabor: Vec<Vec<f64>> = (0..N_SCALES)
        .map(|s| {
            let fo = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let denom = 2.0 * SIGMA_ONF.ln().powi(2);
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / denom).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();
    let theta_sigma = PI / N_ORIENTS as f64 / D_THETA_ON_SIGMA;

    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];
    for o in 0..N_ORIENTS {
        let angle = o as f64 * PI / N_ORIENTS as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut responses: Vec<Vec<Complex64>> = Vec::with_capacity(N_SCALES);
        let mut spatial_filters: Vec<Vec<f64>> = Vec::with_capacity(N_SCALES);
        let mut em_n = 0.0;
        for (s, lg) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = lg.iter().zip(&spread).map(|(a, b)| a * b).collect();
            if s == 0 {
                em_n = filter.iter().map(|v| v * v).sum();
            }
            let mut sf: Vec<Complex64> = filter.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft2(&mut sf, w, h, true);
            let scale = (n as f64).sqrt();
            spatial_filters.push(sf.iter().map(|c| c.re * scale).collect());
            let mut eo: Vec<Complex64> = spectrum.iter().zip(&filter).map(|(c, f)| c * f).collect();
            fft2(&mut eo, w, h, true);
            responses.push(eo);
        }

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        for eo in &responses {
            for i in 0..n {
                sum_e[i] += eo[i].re;
                sum_o[i] += eo[i].im;
                sum_an[i] += eo[i].norm();
            }
        }
        let mut energy = vec![0.0; n];
        for i in 0..n {
            let xe = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + PC_EPS;
            let (me, mo) = (sum_e[i] / xe, sum_o[i] / xe);
            for eo in &responses {
                let (e, od) = (eo[i].re, eo[i].im);
                energy[i] += e * me + od * mo - (e * mo - od * me).abs();
            }
        }

        // Noise threshold from the smallest-scale response statistics.
        let median_e2n = median(responses[0].iter().map(|c| c.norm_sqr()).collect());
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = if em_n > 0.0 { mean_e2n / em_n } else { 0.0 };
        let mut sum_an2 = 0.0;
        let mut sum_aiaj = 0.0;
        for i in 0..n {
            for si in 0..N_SCALES {
                sum_an2 += spatial_filters[si][i].powi(2);
                for sj in si + 1..N_SCALES {
                    sum_aiaj += spatial_filters[si][i] * spatial_filters[sj][i];
                }
            }
        }
        let noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        let tau = (noise_energy2 / 2.0).max(0.0).sqrt();
        let noise_mean = tau * (PI / 2.0).sqrt();
        let noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let t = (noise_mean + NOISE_K * noise_sigma) / 1.7;

        for i in 0..n {
            energy_all[i] += (energy[i] - t).max(0.0);
            an_all[i] += sum_an[i];
        }
    }
    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
        .collect()
}

/// Scharr gradient magnitude with replicated borders.
pub fn gradient_magnitude(img: &GrayImage) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let p = |dx: isize, dy: isize| img.at_clamped(x + dx, y + dy);
            let gx = (3.0 * (p(-1, -1) - p(1, -1)) + 10.0 * (p(-1, 0) - p(1, 0)) + 3.0 * (p(-1, 1) - p(1, 1))) / 16.0;
            let gy = (3.0 * (p(-1, -1) - p(-1, 1)) + 10.0 * (p(0, -1) - p(0, 1)) + 3.0 * (p(1, -1) - p(1, 1))) / 16.0;
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Box-filters with an `f x f` window (replicated borders) and keeps every
/// `f`-th pixel.
fn downsample(img: &GrayImage, f: usize) -> GrayImage {
    if f == 1 {
        return img.clone();
    }
    let lo = (f as isize - 1) / 2;
    let (w, h) = (img.width.div_ceil(f), img.height.div_ceil(f));
    let mut pixels = Vec::with_capacity(w * h);
    let norm = 1.0 / (f * f) as f64;
    for y in (0..img.height).step_by(f) {
        for x in (0..img.width).step_by(f) {
            let mut s = 0.0;
            for dy in 0..f as isize {
                for dx in 0..f as isize {
                    s += img.at_clamped(x as isize + dx - lo, y as isize + dy - lo);
                }
            }
            pixels.push(s * norm);
        }
    }
    GrayImage { width: w, height: h, pixels }
}

/// Feature similarity index for grayscale images in `[0, data_range]`.
/// Values are rescaled to the 8-bit range the constants are tuned for, and
/// images are first reduced by `max(1, round(min_side / 256))`.
pub fn fsim(a: &GrayImage, b: &GrayImage, data_range: f64) -> Result<f64> {
    same_shape(a, b)?;
    if a.width < FSIM_MIN_SIDE || a.height < FSIM_MIN_SIDE {
        return Err(Error::Invalid(format!(
            "FSIM needs at least {FSIM_MIN_SIDE}x{FSIM_MIN_SIDE} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    if !(data_range > 0.0) {
        return Err(Error::Invalid(format!("data range {data_range} must be positive")));
    }
    let scale = 255.0 / data_range;
    let f = ((a.width.min(a.height) as f64 / 256.0).round() as usize).max(1);
    let a = downsample(&a.map(|v| v * scale), f);
    let b = downsample(&b.map(|v| v * scale), f);
    let (pc1, pc2) = rayon::join(|| phase_congruency(&a), || phase_congruency(&b));
    let g1 = gradient_magnitude(&a);
    let g2 = gradient_magnitude(&b);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut unweighted = 0.0;
    for i in 0..pc1.len() {
        let pc_sim = (2.0 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        let g_sim = (2.0 * g1[i] * g2[i] + T2) / (g1[i] * g1[i] + g2[i] * g2[i] + T2);
        let pcm = pc1[i].max(pc2[i]);
        num += g_sim * pc_sim * pcm;
        den += pcm;
        unweighted += g_sim * pc_sim;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        // Neither image has any phase-congruent structure (e.g. both flat).
        Ok(unweighted / pc1.len() as f64)
    }
}
