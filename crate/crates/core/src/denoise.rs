//! The consumer's denoising: every point's center is the running mean of
//! the noisy releases received so far.

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::release::NoisyVector;

/// Running means of received releases, indexed by point row. Rows that were
/// never released hold zeros and a count of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterTable {
    d: usize,
    centers: Vec<f64>,
    counts: Vec<u32>,
}

impl CenterTable {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            d,
            centers: vec![0.0; n * d],
            counts: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Full `n x d` buffer, zeros for points never released.
    pub fn buffer(&self) -> &[f64] {
        &self.centers
    }

    pub fn count(&self, point: usize) -> u32 {
        self.counts[point]
    }

    pub fn center(&self, point: usize) -> Option<&[f64]> {
        (self.counts[point] > 0).then(|| &self.centers[point * self.d..(point + 1) * self.d])
    }

    pub fn has_center(&self, point: usize) -> bool {
        self.counts[point] > 0
    }

    pub fn queried(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.counts[i] > 0).collect()
    }

    pub fn all_queried(&self) -> bool {
        self.counts.iter().all(|&c| c > 0)
    }

    pub fn update(&mut self, point: usize, values: &[f64]) -> Result<()> {
        if point >= self.len() {
            return Err(invalid(format!("point {point} outside center table")));
        }
        if values.len() != self.d {
            return Err(invalid(format!(
                "release has {} values, centers have {}",
                values.len(),
                self.d
            )));
        }
        let t = f64::from(self.counts[point]);
        let row = &mut self.centers[point * self.d..(point + 1) * self.d];
        for (c, &x) in row.iter_mut().zip(values) {
            *c = (*c * t + x) / (t + 1.0);
        }
        self.counts[point] += 1;
        Ok(())
    }

    pub fn update_center(&mut self, noisy: &NoisyVector) -> Result<()> {
        self.update(noisy.point, &noisy.values)
    }

    fn per_point_error(&self, originals: &Dataset, f: impl Fn(f64) -> f64) -> Result<f64> {
        if originals.len() != self.len() || originals.dim() != self.d {
            return Err(invalid("originals do not match the center table"));
        }
        let queried = self.queried();
        if queried.is_empty() {
            return Ok(0.0);
        }
        let total: f64 = queried
            .iter()
            .map(|&i| {
                let sq: f64 = self
                    .center(i)
                    .unwrap()
                    .iter()
                    .zip(originals.row(i))
                    .map(|(c, x)| (c - x).powi(2))
                    .sum();
                f(sq)
            })
            .sum();
        Ok(total / queried.len() as f64)
    }

    /// Mean L2 distance between each center and its original point.
    pub fn center_fidelity(&self, originals: &Dataset) -> Result<f64> {
        self.per_point_error(originals, f64::sqrt)
    }

    /// Mean squared L2 distance between centers and originals.
    pub fn mean_squared_error(&self, originals: &Dataset) -> Result<f64> {
        self.per_point_error(originals, |sq| sq)
    }

    /// Released points as a dataset: centers for features, the originals'
    /// labels and ids.
    pub fn snapshot(&self, originals: &Dataset) -> Result<Dataset> {
        if originals.len() != self.len() {
            return Err(invalid("originals do not match the center table"));
        }
        let queried = self.queried();
        let mut features = Vec::with_capacity(queried.len() * self.d);
        for &i in &queried {
            features.extend_from_slice(self.center(i).unwrap());
        }
        Dataset::new(
            features,
            self.d,
            queried.iter().map(|&i| originals.label(i)).collect(),
            queried.iter().map(|&i| originals.id(i)).collect(),
        )
    }
}

/// Free-function form of [`CenterTable::center_fidelity`].
pub fn center_fidelity(table: &CenterTable, originals: &Dataset) -> Result<f64> {
    table.center_fidelity(originals)
}
