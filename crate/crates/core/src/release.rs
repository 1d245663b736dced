//! The data union's release mechanism: clamp each feature to its bound,
//! add Laplace noise scaled by sensitivity over per-feature epsilon, and
//! charge the point's privacy budget before anything leaves the union.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureBounds, PointId};
use crate::error::{invalid, Error, Result};
use crate::rng::{stream_rng, STREAM_RELEASE};

/// Slack used when comparing accumulated spend against the cap, so that
/// e.g. ten charges of 0.1 still fit under a cap of 1.0.
const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseConfig {
    pub eps_per_feature: f64,
    pub bounds: FeatureBounds,
}

impl ReleaseConfig {
    pub fn new(eps_per_feature: f64, bounds: FeatureBounds) -> Result<Self> {
        if !(eps_per_feature > 0.0) {
            return Err(invalid(format!(
                "eps_per_feature must be positive, got {eps_per_feature}"
            )));
        }
        Ok(Self {
            eps_per_feature,
            bounds,
        })
    }

    /// Laplace scale of feature `j`.
    pub fn noise_scale(&self, j: usize) -> f64 {
        self.bounds.sensitivity(j) / self.eps_per_feature
    }
}

/// One Laplace(0, `scale`) draw by inverse CDF.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    loop {
        let u = rng.random::<f64>() - 0.5;
        let a = u.abs();
        if a < 0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * a).ln();
        }
    }
}

/// Clamp-then-noise release of a single feature vector.
pub fn noisy_release<R: Rng + ?Sized>(
    point: &[f64],
    config: &ReleaseConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if point.len() != config.bounds.dim() {
        return Err(invalid(format!(
            "point has {} features, bounds have {}",
            point.len(),
            config.bounds.dim()
        )));
    }
    Ok(point
        .iter()
        .enumerate()
        .map(|(j, &x)| config.bounds.clamp_value(j, x) + sample_laplace(rng, config.noise_scale(j)))
        .collect())
}

/// A released vector. `point` is the row index in the union's dataset and
/// `query_index` counts releases of that point, starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyVector {
    pub point: usize,
    pub values: Vec<f64>,
    pub query_index: u32,
}

/// Per-point spend accounting. Spend is tracked as a query count so that
/// `remaining + spent == max_per_point` holds without drift.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    charge_per_query: f64,
    max_per_point: f64,
    ids: Vec<PointId>,
    queries: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub id: PointId,
    pub spent: f64,
    pub remaining: f64,
}

impl BudgetLedger {
    pub fn new(ids: Vec<PointId>, charge_per_query: f64, max_per_point: f64) -> Result<Self> {
        if !(charge_per_query > 0.0) || !charge_per_query.is_finite() {
            return Err(invalid("charge_per_query must be positive and finite"));
        }
        if !(max_per_point > 0.0) || !max_per_point.is_finite() {
            return Err(invalid("max_per_point must be positive and finite"));
        }
        let queries = vec![0; ids.len()];
        Ok(Self {
            charge_per_query,
            max_per_point,
            ids,
            queries,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn charge_per_query(&self) -> f64 {
        self.charge_per_query
    }

    pub fn max_per_point(&self) -> f64 {
        self.max_per_point
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    fn check(&self, point: usize) -> Result<()> {
        if point >= self.ids.len() {
            return Err(invalid(format!("point {point} is not in the ledger")));
        }
        Ok(())
    }

    pub fn queries(&self, point: usize) -> u32 {
        self.queries[point]
    }

    pub fn spent(&self, point: usize) -> f64 {
        f64::from(self.queries[point]) * self.charge_per_query
    }

    pub fn remaining(&self, point: usize) -> f64 {
        (self.max_per_point - self.spent(point)).max(0.0)
    }

    pub fn can_charge(&self, point: usize) -> bool {
        let next = f64::from(self.queries[point] + 1) * self.charge_per_query;
        next <= self.max_per_point * (1.0 + BUDGET_SLACK)
    }

    pub fn is_exhausted(&self, point: usize) -> bool {
        !self.can_charge(point)
    }

    /// Debits one query from `point`.
    pub fn charge_query(&mut self, point: usize) -> Result<()> {
        self.check(point)?;
        if !self.can_charge(point) {
            return Err(Error::BudgetExhausted(point));
        }
        self.queries[point] += 1;
        Ok(())
    }

    pub fn remaining_fraction(&self, point: usize) -> Result<f64> {
        self.check(point)?;
        // A point that cannot afford another query counts as empty.
        if self.is_exhausted(point) {
            return Ok(0.0);
        }
        Ok(self.remaining(point) / self.max_per_point)
    }

    pub fn spent_vector(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.spent(i)).collect()
    }

    pub fn total_queries(&self) -> u64 {
        self.queries.iter().map(|&q| u64::from(q)).sum()
    }

    /// Total spend, `charge_per_query` times the number of queries served.
    pub fn total_spent(&self) -> f64 {
        self.total_queries() as f64 * self.charge_per_query
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        (0..self.len())
            .map(|i| LedgerEntry {
                id: self.ids[i],
                spent: self.spent(i),
                remaining: self.remaining(i),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries())?)
    }
}

/// The union side of a run: private data, release mechanism and ledger.
///
/// Noise for the `q`-th release of point `id` is drawn from a stream keyed by
/// `(seed, id, q)`, so it does not depend on the order of queries.
#[derive(Debug, Clone)]
pub struct DataUnion<'a> {
    data: &'a Dataset,
    config: ReleaseConfig,
    ledger: BudgetLedger,
    seed: u64,
}

impl<'a> DataUnion<'a> {
    pub fn new(
        data: &'a Dataset,
        config: ReleaseConfig,
        charge_per_query: f64,
        max_per_point: f64,
        seed: u64,
    ) -> Result<Self> {
        if data.dim() != config.bounds.dim() {
            return Err(invalid("dataset and bounds disagree on dimension"));
        }
        let ledger = BudgetLedger::new(data.ids().to_vec(), charge_per_query, max_per_point)?;
        Ok(Self {
            data,
            config,
            ledger,
            seed,
        })
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> BudgetLedger {
        self.ledger
    }

    /// Charges the ledger, then releases a noisy copy of `point`.
    pub fn release(&mut self, point: usize) -> Result<NoisyVector> {
        self.ledger.charge_query(point)?;
        let query_index = self.ledger.queries(point);
        let mut rng = stream_rng(
            self.seed,
            &[STREAM_RELEASE, self.data.id(point), u64::from(query_index)],
        );
        let values = noisy_release(self.data.row(point), &self.config, &mut rng)?;
        Ok(NoisyVector {
            point,
            values,
            query_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn bounds(lo: &[f64], hi: &[f64]) -> FeatureBounds {
        FeatureBounds::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn zero_sensitivity_releases_clamped_input() {
        let cfg = ReleaseConfig::new(1.0, bounds(&[2.0, -1.0], &[2.0, -1.0])).unwrap();
        let mut rng = stream_rng(3, &[]);
        let out = noisy_release(&[5.0, -1.0], &cfg, &mut rng).unwrap();
        assert_eq!(out, vec![2.0, -1.0]);
    }

    #[test]
    fn huge_epsilon_returns_clamped_value() {
        let cfg = ReleaseConfig::new(1e9, bounds(&[0.0], &[1.0])).unwrap();
        let mut rng = stream_rng(4, &[]);
        for _ in 0..100 {
            let out = noisy_release(&[5.0], &cfg, &mut rng).unwrap();
            assert!((out[0] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cfg = ReleaseConfig::new(1.0, bounds(&[0.0], &[1.0])).unwrap();
        let mut rng = stream_rng(0, &[]);
        assert!(noisy_release(&[0.0, 0.0], &cfg, &mut rng).is_err());
        assert!(ReleaseConfig::new(0.0, bounds(&[0.0], &[1.0])).is_err());
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream_rng(10, &[]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng, 1.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let mad = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 2.0).abs() < 0.1, "var {var}");
        assert!((mad - 1.0).abs() < 0.05, "mad {mad}");
    }

    #[test]
    fn ledger_charges_and_caps() {
        let mut ledger = BudgetLedger::new(vec![0, 1], 1.0, 50.0).unwrap();
        ledger.charge_query(0).unwrap();
        assert_eq!(ledger.remaining(0), 49.0);
        assert_eq!(ledger.spent(0), 1.0);
        for _ in 1..50 {
            ledger.charge_query(0).unwrap();
        }
        assert!(matches!(
            ledger.charge_query(0),
            Err(Error::BudgetExhausted(0))
        ));
        assert_eq!(ledger.remaining_fraction(0).unwrap(), 0.0);
        assert_eq!(ledger.remaining_fraction(1).unwrap(), 1.0);
        assert!(ledger.remaining_fraction(2).is_err());
    }

    #[test]
    fn remaining_fraction_arithmetic() {
        let mut ledger = BudgetLedger::new(vec![7], 1.0, 20.0).unwrap();
        for _ in 0..5 {
            ledger.charge_query(0).unwrap();
        }
        assert_eq!(ledger.remaining_fraction(0).unwrap(), 0.75);
    }

    #[test]
    fn fractional_charges_fill_the_cap() {
        let mut ledger = BudgetLedger::new(vec![0], 0.1, 1.0).unwrap();
        for _ in 0..10 {
            ledger.charge_query(0).unwrap();
        }
        assert!(ledger.is_exhausted(0));
    }

    #[test]
    fn ledger_json_lists_every_point() {
        let mut ledger = BudgetLedger::new(vec![4, 9], 2.0, 10.0).unwrap();
        ledger.charge_query(1).unwrap();
        let parsed: Vec<LedgerEntry> = serde_json::from_str(&ledger.to_json().unwrap()).unwrap();
        assert_eq!(
            parsed,
            vec![
                LedgerEntry {
                    id: 4,
                    spent: 0.0,
                    remaining: 10.0
                },
                LedgerEntry {
                    id: 9,
                    spent: 2.0,
                    remaining: 8.0
                },
            ]
        );
    }

    #[test]
    fn union_refuses_release_after_exhaustion() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
        let cfg = ReleaseConfig::new(1.0, bounds(&[0.0], &[1.0])).unwrap();
        let mut du = DataUnion::new(&ds, cfg, 1.0, 2.0, 1).unwrap();
        let a = du.release(0).unwrap();
        let b = du.release(0).unwrap();
        assert_eq!((a.query_index, b.query_index), (1, 2));
        assert_ne!(a.values, b.values);
        assert!(matches!(du.release(0), Err(Error::BudgetExhausted(0))));
        assert_eq!(du.ledger().spent(0), 2.0);
    }

    #[test]
    fn release_noise_is_order_free() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
        let cfg = ReleaseConfig::new(1.0, bounds(&[0.0], &[1.0])).unwrap();
        let mut first = DataUnion::new(&ds, cfg.clone(), 1.0, 5.0, 42).unwrap();
        let mut second = DataUnion::new(&ds, cfg, 1.0, 5.0, 42).unwrap();
        let a1 = first.release(1).unwrap();
        second.release(0).unwrap();
        let b1 = second.release(1).unwrap();
        assert_eq!(a1, b1);
    }

    proptest! {
        #[test]
        fn ledger_conservation(charges in proptest::collection::vec(0usize..4, 0..80)) {
            let mut ledger = BudgetLedger::new(vec![0, 1, 2, 3], 1.0, 12.0).unwrap();
            let mut served = 0u64;
            for p in charges {
                if ledger.charge_query(p).is_ok() {
                    served += 1;
                }
            }
            for p in 0..4 {
                prop_assert_eq!(ledger.remaining(p) + ledger.spent(p), 12.0);
                prop_assert!(ledger.remaining(p) >= 0.0);
            }
            prop_assert_eq!(ledger.total_spent(), served as f64);
            prop_assert_eq!(ledger.spent_vector().iter().sum::<f64>(), ledger.total_spent());
        }
    }
}
