//! Data Shapley values for kNN: the exact sorted-recursion formula and a
//! permutation-sampling estimator that doubles as its brute-force oracle.

use std::io::{Read, Write};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointId};
use crate::error::{invalid, parse_err, Location, Result};
use crate::knn::{evaluate_utility, TrainView};
use crate::rng::{stream_rng, STREAM_PERMUTATION};

/// Largest player count accepted by exhaustive enumeration (9! orderings).
pub const MAX_EXHAUSTIVE_PLAYERS: usize = 9;

const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationMethod {
    ExactKnn,
    MonteCarlo,
    /// Bandit Q-value estimates rather than Shapley values.
    QValue,
}

impl ValuationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ValuationMethod::ExactKnn => "exact_knn",
            ValuationMethod::MonteCarlo => "monte_carlo",
            ValuationMethod::QValue => "q_value",
        }
    }
}

/// One value per valued training row. `points[i]` is the row index in the
/// training set, `ids[i]` its id.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationVector {
    pub points: Vec<usize>,
    pub ids: Vec<PointId>,
    pub values: Vec<f64>,
    pub method: ValuationMethod,
    pub eval_size: usize,
}

impl ValuationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rows sorted by descending value, ties by lower id.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.values[b]
                .total_cmp(&self.values[a])
                .then_with(|| self.ids[a].cmp(&self.ids[b]))
        });
        order.into_iter().map(|i| self.points[i]).collect()
    }

    /// The best `ceil(fraction * len)` rows.
    pub fn top_fraction(&self, fraction: f64) -> Result<Vec<usize>> {
        let m = fraction_count(self.len(), fraction)?;
        let mut top = self.ranking();
        top.truncate(m);
        top.sort_unstable();
        Ok(top)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "value", "method"])?;
        for (id, v) in self.ids.iter().zip(&self.values) {
            out.write_record([
                id.to_string(),
                v.to_string(),
                self.method.as_str().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `(id, value)` pairs from a valuation CSV.
pub fn read_valuation_csv<R: Read>(r: R) -> Result<Vec<(PointId, f64)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || parse_err(Location::Line(line), "expected id,value,method");
        let id = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let v = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        out.push((id, v));
    }
    Ok(out)
}

/// `ceil(fraction * n)` with a small guard against representation error.
pub fn fraction_count(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let m = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    Ok(m.min(n))
}

/// kNN value of `subset` for one labeled query: the share of the
/// `min(k, |subset|)` nearest members whose label matches, divided by `k`.
pub fn knn_value(
    view: &TrainView<'_>,
    subset: &[usize],
    query: &[f64],
    label: i32,
    k: usize,
) -> f64 {
    let mut ranked: Vec<(f64, PointId, usize)> = subset
        .iter()
        .map(|&i| (view.metric().rank_key(query, view.row(i)), view.id(i), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let hits = ranked
        .iter()
        .take(k)
        .filter(|r| view.label(r.2) == label)
        .count();
    hits as f64 / k as f64
}

/// Exact kNN Shapley values of the view's active rows for a single query,
/// aligned with `view.active()`.
pub fn knn_shapley_single(view: &TrainView<'_>, query: &[f64], label: i32, k: usize) -> Vec<f64> {
    let order = view.sorted_by_distance(query);
    let n = order.len();
    let mut by_rank = vec![0.0; n];
    if n == 0 {
        return by_rank;
    }
    let hit = |r: usize| {
        if view.label(order[r]) == label {
            1.0
        } else {
            0.0
        }
    };
    let kf = k as f64;
    // With fewer than k points every member is always counted, so the last
    // one is worth 1/k rather than 1/N.
    by_rank[n - 1] = hit(n - 1) / (n as f64).max(kf);
    for r in (0..n - 1).rev() {
        // 1-based rank i = r + 1
        let i = (r + 1) as f64;
        by_rank[r] = by_rank[r + 1] + (hit(r) - hit(r + 1)) / kf * (kf.min(i) / i);
    }
    let mut out = vec![0.0; n];
    let active = view.active();
    for (r, &row) in order.iter().enumerate() {
        let pos = active
            .binary_search(&row)
            .expect("sorted rows come from the active set");
        out[pos] = by_rank[r];
    }
    out
}

/// Exact kNN Shapley values averaged over the evaluation points.
pub fn exact_knn_shapley(
    view: &TrainView<'_>,
    eval: &Dataset,
    k: usize,
) -> Result<ValuationVector> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if view.active().is_empty() {
        return Err(invalid("cannot value an empty training set"));
    }
    if eval.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let n = view.active().len();
    let rows: Vec<usize> = (0..eval.len()).collect();
    // Fixed-size chunks summed in order keep the result bit-reproducible
    // regardless of thread count.
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for &e in chunk {
                let s = knn_shapley_single(view, eval.row(e), eval.label(e), k);
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let m = eval.len() as f64;
    Ok(ValuationVector {
        points: view.active().to_vec(),
        ids: view.active().iter().map(|&i| view.id(i)).collect(),
        values: total.into_iter().map(|t| t / m).collect(),
        method: ValuationMethod::ExactKnn,
        eval_size: eval.len(),
    })
}

/// Which coalition value the permutation estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueFunction {
    /// Mean of [`knn_value`] over evaluation points.
    KnnLikelihood,
    /// Majority-vote accuracy on the evaluation set; the empty set scores 0.
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Every ordering of the players; exact.
    Exhaustive,
    /// This many uniformly random orderings.
    Permutations(usize),
}

/// Average marginal contribution of each of `players` players over player
/// orderings. `value` receives a coalition as a sorted slice of player
/// indices.
pub fn permutation_shapley<F>(
    players: usize,
    mut value: F,
    sampling: Sampling,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: FnMut(&[usize]) -> f64,
{
    let mut phi = vec![0.0; players];
    if players == 0 {
        return Ok(phi);
    }
    match sampling {
        Sampling::Exhaustive => {
            if players > MAX_EXHAUSTIVE_PLAYERS {
                return Err(invalid(format!(
                    "exhaustive enumeration supports at most {MAX_EXHAUSTIVE_PLAYERS} players, got {players}"
                )));
            }
            let table: Vec<f64> = (0..1usize << players)
                .map(|mask| {
                    let coalition: Vec<usize> =
                        (0..players).filter(|p| mask >> p & 1 == 1).collect();
                    value(&coalition)
                })
                .collect();
            let mut orderings = 0u64;
            for perm in (0..players).permutations(players) {
                let mut mask = 0usize;
                for p in perm {
                    let next = mask | 1 << p;
                    phi[p] += table[next] - table[mask];
                    mask = next;
                }
                orderings += 1;
            }
            for v in &mut phi {
                *v /= orderings as f64;
            }
        }
        Sampling::Permutations(count) => {
            if count == 0 {
                return Err(invalid("need at least one permutation"));
            }
            let mut rng = stream_rng(seed, &[STREAM_PERMUTATION]);
            let mut perm: Vec<usize> = (0..players).collect();
            let mut coalition = Vec::with_capacity(players);
            for _ in 0..count {
                perm.shuffle(&mut rng);
                coalition.clear();
                let mut prev = value(&coalition);
                for &p in &perm {
                    let at = coalition.binary_search(&p).unwrap_err();
                    coalition.insert(at, p);
                    let cur = value(&coalition);
                    phi[p] += cur - prev;
                    prev = cur;
                }
            }
            for v in &mut phi {
                *v /= count as f64;
            }
        }
    }
    Ok(phi)
}

/// Permutation Shapley for a single labeled query under the kNN value
/// function, aligned with `view.active()`.
pub fn monte_carlo_shapley_single(
    view: &TrainView<'_>,
    query: &[f64],
    label: i32,
    k: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<Vec<f64>> {
    let active = view.active().to_vec();
    let mut rows = Vec::with_capacity(active.len());
    permutation_shapley(
        active.len(),
        |coalition| {
            rows.clear();
            rows.extend(coalition.iter().map(|&p| active[p]));
            knn_value(view, &rows, query, label, k)
        },
        sampling,
        seed,
    )
}

/// Permutation-sampling Shapley values of the view's active rows.
pub fn monte_carlo_shapley(
    view: &TrainView<'_>,
    eval: &Dataset,
    k: usize,
    value_fn: ValueFunction,
    sampling: Sampling,
    seed: u64,
) -> Result<ValuationVector> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if eval.is_empty() {
        return Err(invalid("evaluation set is empty"));
    }
    let active = view.active().to_vec();
    let mut rows = Vec::with_capacity(active.len());
    let values = permutation_shapley(
        active.len(),
        |coalition| {
            if coalition.is_empty() {
                return 0.0;
            }
            rows.clear();
            rows.extend(coalition.iter().map(|&p| active[p]));
            match value_fn {
                ValueFunction::KnnLikelihood => {
                    eval.rows()
                        .zip(eval.labels())
                        .map(|(q, &y)| knn_value(view, &rows, q, y, k))
                        .sum::<f64>()
                        / eval.len() as f64
                }
                ValueFunction::Accuracy => {
                    let sub = view
                        .clone()
                        .with_active(rows.clone())
                        .expect("rows drawn from the view");
                    evaluate_utility(&sub, eval, k).expect("non-empty coalition")
                }
            }
        },
        sampling,
        seed,
    )?;
    Ok(ValuationVector {
        points: active.clone(),
        ids: active.iter().map(|&i| view.id(i)).collect(),
        values,
        method: ValuationMethod::MonteCarlo,
        eval_size: eval.len(),
    })
}

/// Training rows in a seeded uniform random order.
pub fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, &[STREAM_PERMUTATION]));
    order
}

/// Accuracy on `eval` of kNN trained on the first `ceil(f * n)` rows of
/// `order`, for each fraction `f`.
pub fn prefix_accuracy(
    view: &TrainView<'_>,
    eval: &Dataset,
    order: &[usize],
    fractions: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    fractions
        .iter()
        .map(|&f| {
            let m = fraction_count(order.len(), f)?.max(1);
            let prefix = view.clone().with_active(order[..m].to_vec())?;
            evaluate_utility(&prefix, eval, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_instance(seed: u64, n: usize, d: usize) -> (Dataset, Vec<f64>, i32) {
        let mut rng = stream_rng(seed, &[1]);
        let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<i32> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let query: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = rng.random_range(0..2);
        (
            Dataset::with_row_ids(features, d, labels).unwrap(),
            query,
            label,
        )
    }

    #[test]
    fn all_matching_labels_split_evenly() {
        let ds =
            Dataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]], vec![1; 4]).unwrap();
        let eval = Dataset::from_rows(&[vec![0.2]], vec![1]).unwrap();
        for k in 1..6 {
            let v = exact_knn_shapley(&TrainView::full(&ds), &eval, k).unwrap();
            let share = 1.0 / (k as f64).max(4.0);
            for x in &v.values {
                assert!((x - share).abs() < 1e-15);
            }
            assert!((v.sum() - (k.min(4) as f64 / k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn no_matching_labels_gives_zero() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]], vec![0; 3]).unwrap();
        let eval = Dataset::from_rows(&[vec![0.2]], vec![1]).unwrap();
        let v = exact_knn_shapley(&TrainView::full(&ds), &eval, 2).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn three_point_hand_example() {
        // Sorted by distance: match, mismatch, match; k = 1.
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], vec![1, 0, 1]).unwrap();
        let view = TrainView::full(&ds);
        let exact = knn_shapley_single(&view, &[0.0], 1, 1);
        let expected = [5.0 / 6.0, -1.0 / 6.0, 1.0 / 3.0];
        for (a, b) in exact.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{exact:?}");
        }
        let brute =
            monte_carlo_shapley_single(&view, &[0.0], 1, 1, Sampling::Exhaustive, 0).unwrap();
        for (a, b) in brute.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{brute:?}");
        }
    }

    #[test]
    fn exhaustive_rejects_large_games() {
        let (ds, _, _) = random_instance(3, 10, 2);
        let eval = ds.select(&[0]);
        let r = monte_carlo_shapley(
            &TrainView::full(&ds),
            &eval,
            1,
            ValueFunction::Accuracy,
            Sampling::Exhaustive,
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn six_point_exhaustive_equals_recursion() {
        for seed in 0..5 {
            let (ds, q, y) = random_instance(seed, 6, 3);
            let view = TrainView::full(&ds);
            for k in 1..=4 {
                let exact = knn_shapley_single(&view, &q, y, k);
                let brute =
                    monte_carlo_shapley_single(&view, &q, y, k, Sampling::Exhaustive, 0).unwrap();
                for (a, b) in exact.iter().zip(&brute) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn duplicate_points_receive_equal_value() {
        let ds = Dataset::from_rows(
            &[
                vec![0.0, 1.0],
                vec![0.5, 0.5],
                vec![0.5, 0.5],
                vec![2.0, 0.0],
                vec![1.0, 1.0],
            ],
            vec![0, 1, 1, 0, 1],
        )
        .unwrap();
        let eval = Dataset::from_rows(&[vec![0.4, 0.6], vec![1.5, 0.2]], vec![1, 0]).unwrap();
        let v = monte_carlo_shapley(
            &TrainView::full(&ds),
            &eval,
            3,
            ValueFunction::Accuracy,
            Sampling::Exhaustive,
            0,
        )
        .unwrap();
        assert!((v.values[1] - v.values[2]).abs() < 1e-12);
        let full = evaluate_utility(&TrainView::full(&ds), &eval, 3).unwrap();
        assert!((v.sum() - full).abs() < 1e-12);
    }

    #[test]
    fn sampled_estimate_approaches_exact() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 12,
            d: 2,
            num_classes: 2,
            cluster_spread: 0.7,
            label_noise: 0.2,
            seed: 4,
        })
        .unwrap();
        let eval = generate_synthetic(&SyntheticSpec {
            n: 6,
            d: 2,
            num_classes: 2,
            cluster_spread: 0.7,
            label_noise: 0.0,
            seed: 5,
        })
        .unwrap();
        let view = TrainView::full(&ds);
        let exact = exact_knn_shapley(&view, &eval, 3).unwrap();
        let mc = monte_carlo_shapley(
            &view,
            &eval,
            3,
            ValueFunction::KnnLikelihood,
            Sampling::Permutations(4000),
            9,
        )
        .unwrap();
        for (a, b) in exact.values.iter().zip(&mc.values) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn top_fraction_breaks_ties_by_id() {
        let v = ValuationVector {
            points: vec![0, 1, 2, 3],
            ids: vec![10, 11, 12, 13],
            values: vec![0.1, 0.5, 0.5, 0.2],
            method: ValuationMethod::ExactKnn,
            eval_size: 1,
        };
        assert_eq!(v.top_fraction(0.25).unwrap(), vec![1]);
        assert_eq!(v.top_fraction(0.5).unwrap(), vec![1, 2]);
        assert_eq!(v.top_fraction(1.0).unwrap(), vec![0, 1, 2, 3]);
        assert!(v.top_fraction(0.0).is_err());
    }

    #[test]
    fn fraction_count_rounds_up() {
        assert_eq!(fraction_count(10, 0.25).unwrap(), 3);
        assert_eq!(fraction_count(500, 0.6).unwrap(), 300);
        assert_eq!(fraction_count(10, 1.0).unwrap(), 10);
    }

    #[test]
    fn valuation_csv_round_trip() {
        let v = ValuationVector {
            points: vec![0, 1],
            ids: vec![3, 8],
            values: vec![-0.125, 1.0 / 3.0],
            method: ValuationMethod::ExactKnn,
            eval_size: 2,
        };
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,value,method\n3,-0.125,exact_knn\n"));
        assert_eq!(
            read_valuation_csv(buf.as_slice()).unwrap(),
            vec![(3, -0.125), (8, 1.0 / 3.0)]
        );
    }

    proptest! {
        #[test]
        fn efficiency_per_query(seed in any::<u64>(), n in 1usize..40, k in 1usize..7) {
            let (ds, q, y) = random_instance(seed, n, 3);
            let view = TrainView::full(&ds);
            let s = knn_shapley_single(&view, &q, y, k);
            let all: Vec<usize> = (0..n).collect();
            let v_full = knn_value(&view, &all, &q, y, k);
            prop_assert!((s.iter().sum::<f64>() - v_full).abs() < 1e-9);
        }

        #[test]
        fn swapping_identical_points_swaps_values(seed in any::<u64>(), k in 1usize..4) {
            let (ds, q, y) = random_instance(seed, 5, 2);
            // Make rows 1 and 3 identical, then swap their storage positions.
            let mut rows: Vec<Vec<f64>> = ds.rows().map(<[f64]>::to_vec).collect();
            let mut labels = ds.labels().to_vec();
            rows[3] = rows[1].clone();
            labels[3] = labels[1];
            let a = Dataset::from_rows(&rows, labels.clone()).unwrap();
            let va = monte_carlo_shapley_single(&TrainView::full(&a), &q, y, k, Sampling::Exhaustive, 0).unwrap();
            prop_assert!((va[1] - va[3]).abs() < 1e-12);
            let exact = knn_shapley_single(&TrainView::full(&a), &q, y, k);
            for (x, z) in exact.iter().zip(&va) {
                prop_assert!((x - z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_order_is_a_permutation() {
        let mut order = random_order(50, 3);
        assert_ne!(order, (0..50).collect::<Vec<_>>());
        assert_eq!(order, random_order(50, 3));
        order.sort_unstable();
        assert_eq!(order, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn full_prefix_matches_whole_training_set() {
        let spec = SyntheticSpec {
            n: 60,
            d: 2,
            num_classes: 2,
            cluster_spread: 0.5,
            label_noise: 0.1,
            seed: 4,
        };
        let data = generate_synthetic(&spec).unwrap();
        let train = data.select(&(0..40).collect::<Vec<_>>());
        let test = data.select(&(40..60).collect::<Vec<_>>());
        let view = TrainView::full(&train);
        let order = random_order(40, 9);
        let acc = prefix_accuracy(&view, &test, &order, &[0.5, 1.0], 3).unwrap();
        assert_eq!(acc[1], evaluate_utility(&view, &test, 3).unwrap());
        let half = view.clone().with_active(order[..20].to_vec()).unwrap();
        assert_eq!(acc[0], evaluate_utility(&half, &test, 3).unwrap());
    }
}
