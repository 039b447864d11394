use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::fsim::fsim;
use super::image::GrayImage;
use super::psnr::psnr;
use super::ssim::ssim;
use crate::ctdata::{id_stem, CtImage, WindowSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    Ssim,
    Fsim,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Psnr, Metric::Ssim, Metric::Fsim];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "PSNR",
            Metric::Ssim => "SSIM",
            Metric::Fsim => "FSIM",
        }
    }

    pub fn decimals(self) -> usize {
        match self {
            Metric::Psnr => 2,
            Metric::Ssim | Metric::Fsim => 4,
        }
    }
}

/// Per-image values of one metric plus their mean and population std.
/// Infinite values (identical images under PSNR) are kept in `values` but
/// left out of the aggregates and counted in `excluded`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub excluded: usize,
}

impl MetricReport {
    pub fn new(metric: Metric, values: Vec<f64>) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let excluded = values.len() - finite.len();
        let (mean, std) = if finite.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let n = finite.len() as f64;
            let mean = finite.iter().sum::<f64>() / n;
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        Self {
            metric,
            values,
            mean,
            std,
            excluded,
        }
    }

    /// `mean ± std` at the metric's precision; `inf` when every value was
    /// infinite.
    pub fn cell(&self) -> String {
        if self.mean.is_nan() && self.excluded == self.values.len() && !self.values.is_empty() {
            return "inf".into();
        }
        let d = self.metric.decimals();
        format!("{:.d$} ± {:.d$}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMetrics {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub fsim: f64,
}

/// Metrics for one set of outputs against its references.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub window: WindowSpec,
    pub pairs: Vec<PairMetrics>,
    pub psnr: MetricReport,
    pub ssim: MetricReport,
    pub fsim: MetricReport,
}

impl EvaluationReport {
    pub fn metric(&self, m: Metric) -> &MetricReport {
        match m {
            Metric::Psnr => &self.psnr,
            Metric::Ssim => &self.ssim,
            Metric::Fsim => &self.fsim,
        }
    }

    /// `id,psnr,ssim,fsim`, one row per pair; infinite values as `inf`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["id", "psnr", "ssim", "fsim"]).map_err(|e| csv_error(path, e))?;
        for p in &self.pairs {
            w.write_record([p.id.clone(), p.psnr.to_string(), p.ssim.to_string(), p.fsim.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format("csv", format!("{other:?}")),
    }
}

pub fn evaluate_pair(output: &GrayImage, reference: &GrayImage) -> Result<(f64, f64, f64)> {
    Ok((
        psnr(output, reference, 1.0)?,
        ssim(output, reference, 1.0)?,
        fsim(output, reference, 1.0)?,
    ))
}

/// Pairs `outputs` with `references` by id stem, maps both through
/// `window` to [0, 1] and scores each pair with data range 1. Rows come
/// back sorted by id.
pub fn evaluate_pairs(outputs: &[CtImage], references: &[CtImage], window: WindowSpec) -> Result<EvaluationReport> {
    if outputs.is_empty() {
        return Err(Error::Invalid("nothing to evaluate".into()));
    }
    let mut refs: BTreeMap<&str, &CtImage> = BTreeMap::new();
    for r in references {
        if refs.insert(id_stem(r.id()), r).is_some() {
            return Err(Error::Invalid(format!("duplicate reference id `{}`", r.id())));
        }
    }
    let mut matched: BTreeMap<&str, (&CtImage, &CtImage)> = BTreeMap::new();
    for o in outputs {
        let stem = id_stem(o.id());
        let r = refs
            .get(stem)
            .ok_or_else(|| Error::Invalid(format!("output `{}` has no reference image", o.id())))?;
        if matched.insert(stem, (o, r)).is_some() {
            return Err(Error::Invalid(format!("duplicate output id `{}`", o.id())));
        }
    }
    if matched.len() != refs.len() {
        let missing: Vec<&str> = refs.keys().filter(|k| !matched.contains_key(*k)).copied().collect();
        return Err(Error::Invalid(format!("references without outputs: {}", missing.join(", "))));
    }
    let pairs = matched
        .par_iter()
        .map(|(stem, (o, r))| {
            let (p, s, f) = evaluate_pair(&GrayImage::windowed(o, window), &GrayImage::windowed(r, window))?;
            Ok(PairMetrics {
                id: stem.to_string(),
                psnr: p,
                ssim: s,
                fsim: f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        window,
        psnr: MetricReport::new(Metric::Psnr, pairs.iter().map(|p| p.psnr).collect()),
        ssim: MetricReport::new(Metric::Ssim, pairs.iter().map(|p| p.ssim).collect()),
        fsim: MetricReport::new(Metric::Fsim, pairs.iter().map(|p| p.fsim).collect()),
        pairs,
    })
}

/// A Markdown table with one row per labelled report and a header noting
/// the window and the std convention.
pub fn render_table(rows: &[(String, &EvaluationReport)]) -> String {
    let mut out = String::new();
    if let Some((_, first)) = rows.first() {
        let _ = writeln!(
            out,
            "Metrics on the [{}, {}] HU window, mean ± population std over {} images.",
            first.window.lo(),
            first.window.hi(),
            first.pairs.len()
        );
        let excluded: usize = rows.iter().map(|(_, r)| r.psnr.excluded).sum();
        if excluded > 0 {
            let _ = writeln!(out, "{excluded} infinite PSNR value(s) excluded from the means.");
        }
        out.push('\n');
    }
    let width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(6);
    let _ = writeln!(out, "| {:<width$} | {:^16} | {:^17} | {:^17} |", "Method", "PSNR", "SSIM", "FSIM");
    let _ = writeln!(out, "|{}|{}|{}|{}|", "-".repeat(width + 2), "-".repeat(18), "-".repeat(19), "-".repeat(19));
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "| {:<width$} | {:^16} | {:^17} | {:^17} |",
            label,
            r.psnr.cell(),
            r.ssim.cell(),
            r.fsim.cell()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_population_std() {
        let r = MetricReport::new(Metric::Psnr, vec![20.0, 30.0]);
        assert_eq!((r.mean, r.std), (25.0, 5.0));
        assert_eq!(r.cell(), "25.00 ± 5.00");
        let s = MetricReport::new(Metric::Ssim, vec![0.8636, 0.8636]);
        assert_eq!(s.cell(), "0.8636 ± 0.0000");
    }

    #[test]
    fn infinite_values_are_excluded_and_counted() {
        let r = MetricReport::new(Metric::Psnr, vec![f64::INFINITY, 30.0]);
        assert_eq!((r.mean, r.std, r.excluded), (30.0, 0.0, 1));
        let all = MetricReport::new(Metric::Psnr, vec![f64::INFINITY; 2]);
        assert_eq!(all.cell(), "inf");
    }
}
