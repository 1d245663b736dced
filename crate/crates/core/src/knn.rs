//! k-nearest-neighbor classification over a view of the training points.
//!
//! Neighbors are ordered by distance and then by point id, never by storage
//! position, so results do not depend on row order.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointId};
use crate::denoise::CenterTable;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    L2,
    Cosine,
}

impl Distance {
    /// A monotone surrogate of the distance, enough for ranking. For L2 this
    /// is the squared distance.
    pub fn rank_key(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Distance::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }

    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::L2 => self.rank_key(a, b).sqrt(),
            Distance::Cosine => self.rank_key(a, b),
        }
    }
}

/// Training rows (original features or centers) restricted to the points
/// currently usable as neighbors.
#[derive(Debug, Clone)]
pub struct TrainView<'a> {
    features: &'a [f64],
    labels: &'a [i32],
    ids: &'a [PointId],
    d: usize,
    active: Vec<usize>,
    metric: Distance,
}

impl<'a> TrainView<'a> {
    /// Every row of `data` is active.
    pub fn full(data: &'a Dataset) -> Self {
        Self {
            features: data.features(),
            labels: data.labels(),
            ids: data.ids(),
            d: data.dim(),
            active: (0..data.len()).collect(),
            metric: Distance::L2,
        }
    }

    pub fn new(
        features: &'a [f64],
        d: usize,
        labels: &'a [i32],
        ids: &'a [PointId],
        active: Vec<usize>,
    ) -> Result<Self> {
        if labels.len() != ids.len() || features.len() != labels.len() * d {
            return Err(invalid("view buffers disagree in size"));
        }
        let view = Self {
            features,
            labels,
            ids,
            d,
            active: Vec::new(),
            metric: Distance::L2,
        };
        view.with_active(active)
    }

    /// Centers as features with the training labels and ids.
    pub fn from_centers(
        centers: &'a CenterTable,
        train: &'a Dataset,
        active: Vec<usize>,
    ) -> Result<Self> {
        if centers.len() != train.len() || centers.dim() != train.dim() {
            return Err(invalid("center table does not match the training set"));
        }
        Self::new(
            centers.buffer(),
            train.dim(),
            train.labels(),
            train.ids(),
            active,
        )
    }

    pub fn with_active(mut self, mut active: Vec<usize>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if let Some(&bad) = active.iter().find(|&&i| i >= self.labels.len()) {
            return Err(invalid(format!(
                "active point {bad} outside view of {}",
                self.labels.len()
            )));
        }
        self.active = active;
        Ok(self)
    }

    pub fn with_metric(mut self, metric: Distance) -> Self {
        self.metric = metric;
        self
    }

    pub fn metric(&self) -> Distance {
        self.metric
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Total number of rows, active or not.
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> i32 {
        self.labels[i]
    }

    pub fn id(&self, i: usize) -> PointId {
        self.ids[i]
    }

    fn order(&self, a: &(f64, usize), b: &(f64, usize)) -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
    }

    /// The `k` nearest active rows to `query` as `(rank_key, row)`, closest
    /// first. `skip` excludes one row (the query point itself).
    pub fn nearest(&self, query: &[f64], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
        let mut cand: Vec<(f64, usize)> = self
            .active
            .iter()
            .filter(|&&i| Some(i) != skip)
            .map(|&i| (self.metric.rank_key(query, self.row(i)), i))
            .collect();
        if k == 0 {
            return Vec::new();
        }
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, |a, b| self.order(a, b));
            cand.truncate(k);
        }
        cand.sort_unstable_by(|a, b| self.order(a, b));
        cand
    }

    /// All active rows sorted by distance to `query`, ties by id.
    pub fn sorted_by_distance(&self, query: &[f64]) -> Vec<usize> {
        self.nearest(query, self.active.len(), None)
            .into_iter()
            .map(|(_, i)| i)
            .collect()
    }

    fn vote(&self, neighbors: &[(f64, usize)]) -> i32 {
        vote(self.labels, neighbors)
    }
}

fn vote(labels: &[i32], neighbors: &[(f64, usize)]) -> i32 {
    // (label, votes, rank of its nearest member)
    let mut tally: Vec<(i32, usize, usize)> = Vec::new();
    for (rank, &(_, i)) in neighbors.iter().enumerate() {
        let l = labels[i];
        match tally.iter_mut().find(|t| t.0 == l) {
            Some(t) => t.1 += 1,
            None => tally.push((l, 1, rank)),
        }
    }
    tally
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.2.cmp(&a.2)))
        .map(|t| t.0)
        .expect("vote over at least one neighbor")
}

/// Majority label among the `k` nearest active points. Majority ties go to
/// the class of the nearest point among the tied classes.
pub fn knn_predict(view: &TrainView<'_>, query: &[f64], k: usize) -> Result<i32> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if query.len() != view.dim() {
        return Err(invalid("query dimension does not match the view"));
    }
    if view.active.is_empty() {
        return Err(Error::NoNeighbors);
    }
    Ok(view.vote(&view.nearest(query, k, None)))
}

pub fn predict_all(view: &TrainView<'_>, eval: &Dataset, k: usize) -> Result<Vec<i32>> {
    eval.rows().map(|q| knn_predict(view, q, k)).collect()
}

/// Accuracy of kNN predictions on `eval`.
pub fn evaluate_utility(view: &TrainView<'_>, eval: &Dataset, k: usize) -> Result<f64> {
    if eval.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let preds = predict_all(view, eval, k)?;
    let correct = preds
        .iter()
        .zip(eval.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / eval.len() as f64)
}

/// Accuracy of kNN on a fixed evaluation set while training rows are added
/// or moved one at a time.
///
/// Keeps every evaluation point's current `k` nearest rows and rescans only
/// when a departing neighbor may have been replaced by an outsider. Results
/// equal [`evaluate_utility`] on the same rows exactly.
#[derive(Debug, Clone)]
pub struct IncrementalKnn<'a> {
    eval: &'a Dataset,
    labels: &'a [i32],
    ids: &'a [PointId],
    k: usize,
    metric: Distance,
    /// `eval.len() x n` rank keys; meaningful for active rows only.
    keys: Vec<f64>,
    active: Vec<bool>,
    active_rows: usize,
    neighbors: Vec<Vec<(f64, usize)>>,
    correct: Vec<bool>,
    n_correct: usize,
}

impl<'a> IncrementalKnn<'a> {
    pub fn new(
        eval: &'a Dataset,
        labels: &'a [i32],
        ids: &'a [PointId],
        k: usize,
        metric: Distance,
    ) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if eval.is_empty() {
            return Err(invalid("evaluation set is empty"));
        }
        if labels.len() != ids.len() {
            return Err(invalid("labels and ids disagree in size"));
        }
        let n = labels.len();
        Ok(Self {
            eval,
            labels,
            ids,
            k,
            metric,
            keys: vec![0.0; eval.len() * n],
            active: vec![false; n],
            active_rows: 0,
            neighbors: vec![Vec::with_capacity(k + 1); eval.len()],
            correct: vec![false; eval.len()],
            n_correct: 0,
        })
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn before(&self, a: (f64, usize), b: (f64, usize)) -> bool {
        a.0.total_cmp(&b.0)
            .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
            == Ordering::Less
    }

    fn rescan(&mut self, e: usize) {
        let n = self.n();
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&i| self.active[i])
            .map(|i| (self.keys[e * n + i], i))
            .collect();
        let ids = self.ids;
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0).then_with(|| ids[a.1].cmp(&ids[b.1]))
        };
        if self.k < cand.len() {
            cand.select_nth_unstable_by(self.k - 1, order);
            cand.truncate(self.k);
        }
        cand.sort_unstable_by(order);
        self.neighbors[e] = cand;
    }

    fn insert(&mut self, e: usize, item: (f64, usize)) {
        let pos = self.neighbors[e]
            .iter()
            .position(|&x| self.before(item, x))
            .unwrap_or(self.neighbors[e].len());
        self.neighbors[e].insert(pos, item);
    }

    /// Makes `row` active with the given features, or moves it if it already is.
    pub fn set_row(&mut self, row: usize, features: &[f64]) -> Result<()> {
        let n = self.n();
        if row >= n {
            return Err(invalid(format!("row {row} outside the tracked set")));
        }
        if features.len() != self.eval.dim() {
            return Err(invalid("row dimension does not match the evaluation set"));
        }
        if !self.active[row] {
            self.active[row] = true;
            self.active_rows += 1;
        }
        for e in 0..self.eval.len() {
            let key = self.metric.rank_key(self.eval.row(e), features);
            self.keys[e * n + row] = key;
            let item = (key, row);
            let list = &self.neighbors[e];
            let full = list.len() == self.k;
            let boundary = list.last().copied();
            let changed = match list.iter().position(|x| x.1 == row) {
                Some(p) => {
                    self.neighbors[e].remove(p);
                    // Outsiders all rank after the old boundary, so the moved
                    // row keeps its slot only if it still precedes it.
                    if !full || boundary.is_some_and(|b| !self.before(b, item)) {
                        self.insert(e, item);
                    } else {
                        self.rescan(e);
                    }
                    true
                }
                None if !full => {
                    self.insert(e, item);
                    true
                }
                None if self.before(item, boundary.unwrap()) => {
                    self.neighbors[e].pop();
                    self.insert(e, item);
                    true
                }
                None => false,
            };
            if changed {
                let hit = vote(self.labels, &self.neighbors[e]) == self.eval.label(e);
                if hit != self.correct[e] {
                    self.correct[e] = hit;
                    if hit {
                        self.n_correct += 1;
                    } else {
                        self.n_correct -= 1;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn active_rows(&self) -> usize {
        self.active_rows
    }

    /// Current accuracy; 0 while no row is active.
    pub fn utility(&self) -> f64 {
        if self.active_rows == 0 {
            return 0.0;
        }
        self.n_correct as f64 / self.eval.len() as f64
    }
}

/// Unweighted mean of per-class F1 over classes seen in predictions or
/// truth. A class with no true positives scores 0.
pub fn macro_f1(view: &TrainView<'_>, eval: &Dataset, k: usize) -> Result<f64> {
    if eval.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let preds = predict_all(view, eval, k)?;
    Ok(macro_f1_from_predictions(&preds, eval.labels()))
}

pub fn macro_f1_from_predictions(preds: &[i32], truth: &[i32]) -> f64 {
    let classes: BTreeSet<i32> = preds.iter().chain(truth).copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&p, &y) in preds.iter().zip(truth) {
                match (p == c, y == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            if tp == 0 {
                return 0.0;
            }
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = tp as f64 / (tp + fn_) as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .sum();
    total / classes.len() as f64
}

/// Fraction of the point's `k` nearest other active points that share its
/// label.
pub fn label_agreement(view: &TrainView<'_>, point: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if view.active.binary_search(&point).is_err() {
        return Err(invalid(format!("point {point} is not active")));
    }
    if view.active.len() < 2 {
        return Err(Error::NoNeighbors);
    }
    let neighbors = view.nearest(view.row(point), k, Some(point));
    let label = view.label(point);
    let same = neighbors
        .iter()
        .filter(|(_, i)| view.label(*i) == label)
        .count();
    Ok(same as f64 / neighbors.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use proptest::prelude::*;

    fn toy() -> Dataset {
        // Six points in the plane, hand placed.
        Dataset::from_rows(
            &[
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 2.0],
                vec![3.0, 3.0],
                vec![-1.0, -1.0],
                vec![2.0, 0.5],
            ],
            vec![0, 1, 0, 1, 1, 1],
        )
        .unwrap()
    }

    #[test]
    fn exact_match_with_k1() {
        let ds = toy();
        let view = TrainView::full(&ds);
        for i in 0..ds.len() {
            assert_eq!(knn_predict(&view, ds.row(i), 1).unwrap(), ds.label(i));
        }
    }

    #[test]
    fn six_point_neighbor_list_matches_brute_force() {
        let ds = toy();
        let view = TrainView::full(&ds);
        let q = [0.5, 0.0];
        let got: Vec<usize> = view.nearest(&q, 3, None).iter().map(|n| n.1).collect();
        // Squared distances 0.25, 0.25, 4.25, 15.25, 3.25, 2.5: rows 0 and 1
        // tie and row 0 wins on id.
        assert_eq!(got, vec![0, 1, 5]);
        let mut brute: Vec<(f64, usize)> = (0..6)
            .map(|i| {
                let r = ds.row(i);
                (((r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2)).sqrt(), i)
            })
            .collect();
        brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        assert_eq!(got, brute.iter().take(3).map(|b| b.1).collect::<Vec<_>>());
        // labels of 0,1,5 = 0,1,1
        assert_eq!(knn_predict(&view, &q, 3).unwrap(), 1);
        let five: Vec<usize> = view.nearest(&q, 5, None).iter().map(|n| n.1).collect();
        assert_eq!(five, vec![0, 1, 5, 4, 2]);
    }

    #[test]
    fn majority_of_three() {
        let ds = Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0], vec![10.0]],
            vec![1, 1, 0, 0],
        )
        .unwrap();
        assert_eq!(knn_predict(&TrainView::full(&ds), &[0.5], 3).unwrap(), 1);
    }

    #[test]
    fn majority_tie_goes_to_nearest_class() {
        let ds = Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![7, 3, 3, 7],
        )
        .unwrap();
        assert_eq!(knn_predict(&TrainView::full(&ds), &[0.1], 4).unwrap(), 7);
        assert_eq!(knn_predict(&TrainView::full(&ds), &[2.9], 4).unwrap(), 7);
        assert_eq!(knn_predict(&TrainView::full(&ds), &[1.1], 2).unwrap(), 3);
    }

    #[test]
    fn distance_ties_use_ids_not_positions() {
        let ds = Dataset::new(vec![1.0, -1.0], 1, vec![0, 1], vec![9, 2]).unwrap();
        // Both at distance 1; id 2 (label 1) wins.
        assert_eq!(knn_predict(&TrainView::full(&ds), &[0.0], 1).unwrap(), 1);
    }

    #[test]
    fn empty_view_has_no_neighbors() {
        let ds = toy();
        let view = TrainView::full(&ds).with_active(vec![]).unwrap();
        assert!(matches!(
            knn_predict(&view, &[0.0, 0.0], 1),
            Err(Error::NoNeighbors)
        ));
        assert!(matches!(
            evaluate_utility(&view, &ds, 1),
            Err(Error::NoNeighbors)
        ));
    }

    #[test]
    fn swapped_labels_score_zero() {
        let train = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
        let eval = Dataset::from_rows(&[vec![0.6], vec![0.4]], vec![0, 1]).unwrap();
        assert_eq!(
            evaluate_utility(&TrainView::full(&train), &eval, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn utility_matches_naive_reimplementation() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 200,
            d: 4,
            num_classes: 2,
            cluster_spread: 0.6,
            label_noise: 0.1,
            seed: 17,
        })
        .unwrap();
        let train = ds.select(&(0..150).collect::<Vec<_>>());
        let eval = ds.select(&(150..200).collect::<Vec<_>>());
        let k = 5;
        let got = evaluate_utility(&TrainView::full(&train), &eval, k).unwrap();
        let mut correct = 0;
        for (q, &y) in eval.rows().zip(eval.labels()) {
            let mut all: Vec<(f64, u64, i32)> = train
                .rows()
                .enumerate()
                .map(|(i, r)| {
                    let d: f64 = r
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    (d, train.id(i), train.label(i))
                })
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let top = &all[..k];
            let ones = top.iter().filter(|t| t.2 == 1).count();
            let pred = if ones * 2 > k { 1 } else { 0 };
            if pred == y {
                correct += 1;
            }
        }
        assert_eq!(got, correct as f64 / eval.len() as f64);
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1_from_predictions(&[0, 1, 2], &[0, 1, 2]), 1.0);
        let f = macro_f1_from_predictions(&[0, 0, 0, 0], &[0, 0, 1, 1]);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
        let preds = [0, 1, 1, 2, 0, 2, 1];
        let truth = [0, 1, 0, 2, 2, 2, 1];
        let relabel = |v: &[i32]| v.iter().map(|&x| (x + 1) % 3).collect::<Vec<_>>();
        let a = macro_f1_from_predictions(&preds, &truth);
        let b = macro_f1_from_predictions(&relabel(&preds), &relabel(&truth));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn label_agreement_examples() {
        let ds = Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![2.5], vec![9.0]],
            vec![1, 1, 0, 1],
        )
        .unwrap();
        let view = TrainView::full(&ds);
        assert_eq!(label_agreement(&view, 0, 2).unwrap(), 0.5);
        assert_eq!(label_agreement(&view, 0, 1).unwrap(), 1.0);
        let lone = view.clone().with_active(vec![0]).unwrap();
        assert!(matches!(
            label_agreement(&lone, 0, 1),
            Err(Error::NoNeighbors)
        ));
    }

    #[test]
    fn label_agreement_matches_naive_enumeration() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 50,
            d: 3,
            num_classes: 3,
            cluster_spread: 0.5,
            label_noise: 0.2,
            seed: 23,
        })
        .unwrap();
        let view = TrainView::full(&ds);
        let k = 4;
        for p in 0..ds.len() {
            let mut others: Vec<(f64, usize)> = (0..ds.len())
                .filter(|&i| i != p)
                .map(|i| {
                    let d = ds
                        .row(i)
                        .iter()
                        .zip(ds.row(p))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
                    (d, i)
                })
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let same = others[..k]
                .iter()
                .filter(|o| ds.label(o.1) == ds.label(p))
                .count();
            assert_eq!(
                label_agreement(&view, p, k).unwrap(),
                same as f64 / k as f64
            );
        }
    }

    #[test]
    fn cosine_distance_basics() {
        assert!(Distance::Cosine.between(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-15);
        assert!((Distance::Cosine.between(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(Distance::Cosine.between(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
    }

    proptest! {
        #[test]
        fn incremental_utility_matches_full_evaluation(
            seed in any::<u64>(),
            k in 1usize..6,
            moves in proptest::collection::vec((0usize..12, -2i32..3, -2i32..3), 1..60),
            cosine in any::<bool>(),
        ) {
            let eval = generate_synthetic(&SyntheticSpec {
                n: 15, d: 2, num_classes: 3, cluster_spread: 1.0, label_noise: 0.0, seed,
            }).unwrap();
            let labels: Vec<i32> = (0..12).map(|i| i * 7 % 3).collect();
            let ids: Vec<PointId> = (0..12u64).map(|i| (i * 5) % 12).collect();
            let metric = if cosine { Distance::Cosine } else { Distance::L2 };
            let mut features = vec![0.0; 24];
            let mut active = Vec::new();
            let mut inc = IncrementalKnn::new(&eval, &labels, &ids, k, metric).unwrap();
            prop_assert_eq!(inc.utility(), 0.0);
            // Integer coordinates force plenty of exact distance ties.
            for (row, x, y) in moves {
                features[row * 2] = f64::from(x);
                features[row * 2 + 1] = f64::from(y);
                inc.set_row(row, &features[row * 2..row * 2 + 2]).unwrap();
                active.push(row);
                let view = TrainView::new(&features, 2, &labels, &ids, active.clone()).unwrap().with_metric(metric);
                prop_assert_eq!(inc.utility(), evaluate_utility(&view, &eval, k).unwrap());
            }
        }

        #[test]
        fn prediction_ignores_row_order(seed in any::<u64>(), k in 1usize..6) {
            let ds = generate_synthetic(&SyntheticSpec {
                n: 30, d: 2, num_classes: 3, cluster_spread: 0.8, label_noise: 0.3, seed,
            }).unwrap();
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.reverse();
            order.rotate_left((seed % 30) as usize);
            let permuted = ds.select(&order);
            let queries = generate_synthetic(&SyntheticSpec {
                n: 10, d: 2, num_classes: 3, cluster_spread: 0.8, label_noise: 0.0, seed: seed ^ 1,
            }).unwrap();
            for q in queries.rows() {
                prop_assert_eq!(
                    knn_predict(&TrainView::full(&ds), q, k).unwrap(),
                    knn_predict(&TrainView::full(&permuted), q, k).unwrap()
                );
            }
        }
    }
}
