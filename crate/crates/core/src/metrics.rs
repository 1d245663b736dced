//! Inequality and rank-correlation metrics, curve aggregation and export.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{GridResult, RunTrace};
use crate::io::write_atomic;

/// Gini coefficient, `sum_i sum_j |x_i - x_j| / (2 n^2 mean)`.
///
/// Evaluated through the sorted closed form, which is exact in the same
/// sense as the pairwise definition and runs in `O(n log n)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("gini of an empty vector"));
    }
    if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("gini needs finite non-negative values"));
    }
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric("gini of an all-zero vector"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // sum_{i<j} (x_j - x_i) = sum_i (2i - n + 1) x_(i), zero-based.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - n + 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

/// Fractional ranks starting at 1; ties share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedMetric("correlation with a constant vector"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(invalid("spearman needs at least two observations"));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Mean and population standard deviation of a quantity across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub x: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
    pub label: String,
}

impl CurveSeries {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Builds a series from per-run curves, truncated to the shortest one.
    /// `x` is the position in the curve.
    pub fn from_runs(runs: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let len = runs
            .iter()
            .map(Vec::len)
            .min()
            .ok_or_else(|| invalid("no curves to aggregate"))?;
        let m = runs.len() as f64;
        let mut y_mean = Vec::with_capacity(len);
        let mut y_std = Vec::with_capacity(len);
        for i in 0..len {
            let mu = runs.iter().map(|r| r[i]).sum::<f64>() / m;
            let var = runs.iter().map(|r| (r[i] - mu).powi(2)).sum::<f64>() / m;
            y_mean.push(mu);
            y_std.push(var.sqrt());
        }
        Ok(Self {
            x: (0..len).map(|i| i as f64).collect(),
            y_mean,
            y_std,
            label: label.into(),
        })
    }
}

/// Utility against iteration, averaged over traces and truncated at the
/// shortest trace.
pub fn aggregate_curves(traces: &[RunTrace], label: impl Into<String>) -> Result<CurveSeries> {
    let runs: Vec<Vec<f64>> = traces.iter().map(RunTrace::utilities).collect();
    let mut series = CurveSeries::from_runs(&runs, label)?;
    if let Some(first) = traces.first() {
        series.x = first.iterations[..series.len()]
            .iter()
            .map(|r| f64::from(r.t))
            .collect();
    }
    Ok(series)
}

pub fn write_curves_csv<W: Write>(curves: &[CurveSeries], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y_mean", "y_std", "label"])?;
    for c in curves {
        for i in 0..c.len() {
            out.write_record([
                c.x[i].to_string(),
                c.y_mean[i].to_string(),
                c.y_std[i].to_string(),
                c.label.clone(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_curves_csv<R: Read>(r: R) -> Result<Vec<CurveSeries>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut curves: Vec<CurveSeries> = Vec::new();
    for rec in rdr.deserialize() {
        let (x, y_mean, y_std, label): (f64, f64, f64, String) = rec?;
        if curves.last().is_none_or(|c| c.label != label) {
            curves.push(CurveSeries {
                x: Vec::new(),
                y_mean: Vec::new(),
                y_std: Vec::new(),
                label,
            });
        }
        let c = curves.last_mut().unwrap();
        c.x.push(x);
        c.y_mean.push(y_mean);
        c.y_std.push(y_std);
    }
    Ok(curves)
}

pub fn export_grid_results(results: &[GridResult], path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(results)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_grid_results(path: &Path) -> Result<Vec<GridResult>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn export_curves(curves: &[CurveSeries], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_curves_csv(curves, &mut buf)?;
    write_atomic(path, &buf)
}
