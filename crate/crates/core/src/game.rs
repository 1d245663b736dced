//! Running the information disclosure game: DU policy, the consumer loop,
//! stopping rules, the full-information pricing baseline and grid search.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{compute_feature_bounds, Dataset, FeatureBounds, PointId, SplitDataset};
use crate::denoise::CenterTable;
use crate::error::{invalid, Result};
use crate::knn::{evaluate_utility, Distance, TrainView};
use crate::metrics::{gini, spearman};
use crate::release::{BudgetLedger, DataUnion, ReleaseConfig};
use crate::shapley::{exact_knn_shapley, ValuationVector};
use crate::strategy::{
    noisy_shapley_select, run_budget_ucb, run_subset, StrategyConfig, StrategyKind,
};

/// Largest instance accepted by [`solve_pricing_game`].
pub const MAX_PRICING_POINTS: usize = 12;

fn default_charge() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    1.0
}

/// The data union's disclosure policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DUPolicy {
    #[serde(default = "default_charge")]
    pub charge_per_query: f64,
    /// Per-point query cap; also the iteration cap for ranking strategies.
    pub t_max: u32,
    #[serde(default = "default_eps")]
    pub eps_per_feature: f64,
    pub u_target: f64,
}

impl DUPolicy {
    pub fn new(t_max: u32, u_target: f64) -> Self {
        Self {
            charge_per_query: default_charge(),
            t_max,
            eps_per_feature: default_eps(),
            u_target,
        }
    }

    pub fn with_eps(mut self, eps_per_feature: f64) -> Self {
        self.eps_per_feature = eps_per_feature;
        self
    }

    /// Per-point budget cap, `t_max * charge_per_query`.
    pub fn b_max(&self) -> f64 {
        f64::from(self.t_max) * self.charge_per_query
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.charge_per_query > 0.0) || !self.charge_per_query.is_finite() {
            return Err(invalid("charge_per_query must be positive and finite"));
        }
        if self.t_max == 0 {
            return Err(invalid("t_max must be at least 1"));
        }
        if !(self.eps_per_feature > 0.0) || !self.eps_per_feature.is_finite() {
            return Err(invalid("eps_per_feature must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.u_target) {
            return Err(invalid(format!(
                "u_target {} outside [0, 1]",
                self.u_target
            )));
        }
        Ok(())
    }
}

/// One iteration of a run. `t = 0` is the state before any release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u32,
    /// Ids released this iteration.
    pub selected: Vec<PointId>,
    /// Number of points in the consumer's classifier after this iteration.
    pub model_size: usize,
    pub utility: f64,
    pub spend_this_iter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
    pub success: bool,
    pub total_spend: f64,
    pub final_utility: f64,
    pub u_target: f64,
    pub seed: u64,
}

impl RunTrace {
    pub(crate) fn finish(iterations: Vec<IterationRecord>, policy: &DUPolicy, seed: u64) -> Self {
        let queries: usize = iterations.iter().map(|r| r.selected.len()).sum();
        let success = iterations.iter().any(|r| r.utility >= policy.u_target);
        let final_utility = iterations.last().map_or(0.0, |r| r.utility);
        Self {
            iterations,
            success,
            total_spend: queries as f64 * policy.charge_per_query,
            final_utility,
            u_target: policy.u_target,
            seed,
        }
    }

    /// Last recorded iteration.
    pub fn last_t(&self) -> u32 {
        self.iterations.last().map_or(0, |r| r.t)
    }

    /// First iteration whose utility meets the target.
    pub fn iterations_to_target(&self) -> Option<u32> {
        self.iterations
            .iter()
            .find(|r| r.utility >= self.u_target)
            .map(|r| r.t)
    }

    /// Iterations to target, or one past the last iteration for a failed run.
    pub fn censored_iterations(&self) -> u32 {
        self.iterations_to_target().unwrap_or(self.last_t() + 1)
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.utility).collect()
    }

    /// CSV with columns `t,utility,spend,cumulative_spend,selected,model_size`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "t",
            "utility",
            "spend",
            "cumulative_spend",
            "selected",
            "model_size",
        ])?;
        let mut cumulative = 0.0;
        for r in &self.iterations {
            cumulative += r.spend_this_iter;
            out.write_record([
                r.t.to_string(),
                r.utility.to_string(),
                r.spend_this_iter.to_string(),
                cumulative.to_string(),
                r.selected.len().to_string(),
                r.model_size.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Everything a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub ledger: BudgetLedger,
    pub centers: CenterTable,
    /// Final bandit estimates per training row, UCB runs only.
    pub q_values: Option<Vec<f64>>,
}

/// A split together with the classifier settings shared by all runs.
#[derive(Debug, Clone)]
pub struct Game<'a> {
    split: &'a SplitDataset,
    k: usize,
    metric: Distance,
    bounds: FeatureBounds,
}

impl<'a> Game<'a> {
    pub fn new(split: &'a SplitDataset, k: usize, metric: Distance) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if split.train.is_empty() {
            return Err(invalid("training split is empty"));
        }
        if split.validation.is_empty() {
            return Err(invalid("validation split is empty"));
        }
        let bounds = compute_feature_bounds(&split.train)?;
        Ok(Self {
            split,
            k,
            metric,
            bounds,
        })
    }

    pub fn split(&self) -> &'a SplitDataset {
        self.split
    }

    pub fn train(&self) -> &'a Dataset {
        &self.split.train
    }

    pub fn validation(&self) -> &'a Dataset {
        &self.split.validation
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Distance {
        self.metric
    }

    pub fn bounds(&self) -> &FeatureBounds {
        &self.bounds
    }

    pub fn release_config(&self, eps_per_feature: f64) -> Result<ReleaseConfig> {
        ReleaseConfig::new(eps_per_feature, self.bounds.clone())
    }

    pub fn center_view<'c>(
        &'c self,
        centers: &'c CenterTable,
        active: Vec<usize>,
    ) -> Result<TrainView<'c>> {
        Ok(TrainView::from_centers(centers, self.train(), active)?.with_metric(self.metric))
    }

    /// Validation accuracy of kNN over the given center rows; 0 when empty.
    pub fn center_utility(&self, centers: &CenterTable, model: &[usize]) -> Result<f64> {
        if model.is_empty() {
            return Ok(0.0);
        }
        evaluate_utility(
            &self.center_view(centers, model.to_vec())?,
            self.validation(),
            self.k,
        )
    }

    /// Validation accuracy of kNN on the noise-free training set.
    pub fn full_data_utility(&self) -> Result<f64> {
        evaluate_utility(
            &TrainView::full(self.train()).with_metric(self.metric),
            self.validation(),
            self.k,
        )
    }

    /// Exact kNN Shapley values of the original training rows against the
    /// validation set.
    pub fn original_shapley(&self) -> Result<ValuationVector> {
        exact_knn_shapley(
            &TrainView::full(self.train()).with_metric(self.metric),
            self.validation(),
            self.k,
        )
    }

    pub fn run(
        &self,
        policy: &DUPolicy,
        strategy: &StrategyConfig,
        seed: u64,
    ) -> Result<RunOutcome> {
        policy.validate()?;
        strategy.validate()?;
        match strategy.kind {
            StrategyKind::BudgetUcb => run_budget_ucb(self, policy, strategy, seed),
            _ => self.run_ranking(policy, strategy, seed),
        }
    }

    fn run_ranking(
        &self,
        policy: &DUPolicy,
        strategy: &StrategyConfig,
        seed: u64,
    ) -> Result<RunOutcome> {
        let train = self.train();
        let n = train.len();
        let all: Vec<usize> = (0..n).collect();
        let mut union = DataUnion::new(
            train,
            self.release_config(policy.eps_per_feature)?,
            policy.charge_per_query,
            policy.b_max(),
            seed,
        )?;
        let mut centers = CenterTable::new(n, train.dim());
        let fixed = match strategy.kind {
            StrategyKind::Random => run_subset(n, strategy.fraction, seed)?,
            _ => Vec::new(),
        };
        let mut model: Vec<usize> = Vec::new();
        let mut committed: Option<Vec<usize>> = None;
        let mut iterations = vec![IterationRecord {
            t: 0,
            selected: Vec::new(),
            model_size: 0,
            utility: 0.0,
            spend_this_iter: 0.0,
        }];

        for t in 1..=policy.t_max {
            let wanted: &[usize] = match strategy.kind {
                StrategyKind::Random => &fixed,
                StrategyKind::NoisyShapley if t == 1 || strategy.refine_all => &all,
                StrategyKind::NoisyShapley => &model,
                StrategyKind::ShapleyCommit => committed.as_deref().unwrap_or(&all),
                StrategyKind::BudgetUcb => unreachable!("handled by run_budget_ucb"),
            };
            let queried: Vec<usize> = wanted
                .iter()
                .copied()
                .filter(|&p| union.ledger().can_charge(p))
                .collect();
            for &p in &queried {
                let noisy = union.release(p)?;
                centers.update_center(&noisy)?;
            }
            model = match strategy.kind {
                StrategyKind::Random => fixed.clone(),
                _ if committed.is_some() => committed.clone().unwrap(),
                _ => {
                    let view = self.center_view(&centers, all.clone())?;
                    let top =
                        noisy_shapley_select(&view, self.validation(), self.k, strategy.fraction)?;
                    if strategy.kind == StrategyKind::ShapleyCommit && t >= strategy.bootstrap_iters
                    {
                        committed = Some(top.clone());
                    }
                    top
                }
            };
            let utility = self.center_utility(&centers, &model)?;
            iterations.push(IterationRecord {
                t,
                selected: queried.iter().map(|&p| train.id(p)).collect(),
                model_size: model.len(),
                utility,
                spend_this_iter: queried.len() as f64 * policy.charge_per_query,
            });
            if utility >= policy.u_target {
                break;
            }
        }
        Ok(RunOutcome {
            trace: RunTrace::finish(iterations, policy, seed),
            ledger: union.into_ledger(),
            centers,
            q_values: None,
        })
    }
}

/// Runs one game under the given policy and strategy.
pub fn run_idg(
    game: &Game<'_>,
    policy: &DUPolicy,
    strategy: &StrategyConfig,
    seed: u64,
) -> Result<RunOutcome> {
    game.run(policy, strategy, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PricingOutcome {
    Feasible { subset: Vec<usize>, cost: f64 },
    Infeasible,
}

/// Cheapest subset of points whose utility meets `u_target`, by exhaustive
/// search. Ties go to the smaller subset, then the lexicographically smaller
/// index list.
pub fn solve_pricing_game<F>(
    prices: &[f64],
    mut utility: F,
    u_target: f64,
) -> Result<PricingOutcome>
where
    F: FnMut(&[usize]) -> f64,
{
    let n = prices.len();
    if n > MAX_PRICING_POINTS {
        return Err(invalid(format!(
            "pricing game supports at most {MAX_PRICING_POINTS} points, got {n}"
        )));
    }
    if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(invalid("prices must be positive and finite"));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut subset = Vec::with_capacity(n);
    for mask in 0u32..1 << n {
        subset.clear();
        subset.extend((0..n).filter(|i| mask >> i & 1 == 1));
        let cost: f64 = subset.iter().map(|&i| prices[i]).sum();
        if let Some((bc, bs)) = &best {
            let worse = cost > *bc
                || (cost == *bc
                    && (subset.len() > bs.len() || (subset.len() == bs.len() && subset >= *bs)));
            if worse {
                continue;
            }
        }
        if utility(&subset) >= u_target {
            best = Some((cost, subset.clone()));
        }
    }
    Ok(match best {
        Some((cost, subset)) => PricingOutcome::Feasible { subset, cost },
        None => PricingOutcome::Infeasible,
    })
}

/// One cell of a grid: a DU policy paired with a consumer strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub b_max: f64,
    pub exploration_c: f64,
    pub du_policy: DUPolicy,
    pub strategy: StrategyConfig,
}

impl GridCell {
    pub fn new(du_policy: DUPolicy, strategy: StrategyConfig) -> Self {
        Self {
            b_max: du_policy.b_max(),
            exploration_c: strategy.exploration_c,
            du_policy,
            strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub success: bool,
    pub total_spend: f64,
    pub final_utility: f64,
    /// Iterations to target, or one past the last iteration on failure.
    pub iterations: u32,
    pub gini_spend: Option<f64>,
    pub spearman_q_shapley: Option<f64>,
}

impl SeedResult {
    pub fn from_outcome(outcome: &RunOutcome, reference: Option<&ValuationVector>) -> Self {
        let spearman_q_shapley = match (&outcome.q_values, reference) {
            (Some(q), Some(r)) => spearman(q, &r.values).ok(),
            _ => None,
        };
        Self {
            seed: outcome.trace.seed,
            success: outcome.trace.success,
            total_spend: outcome.trace.total_spend,
            final_utility: outcome.trace.final_utility,
            iterations: outcome.trace.censored_iterations(),
            gini_spend: gini(&outcome.ledger.spent_vector()).ok(),
            spearman_q_shapley,
        }
    }
}

/// Per-cell aggregate over seeds. `success` is true when at least half of
/// the seeds succeed; optional means skip seeds where the metric is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cell: GridCell,
    pub success: bool,
    pub success_rate: f64,
    pub total_spend: f64,
    pub mean_iterations: f64,
    pub gini_spend: Option<f64>,
    pub spearman_q_shapley: Option<f64>,
    pub seeds: usize,
    pub per_seed: Vec<SeedResult>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl GridResult {
    pub fn aggregate(cell: GridCell, per_seed: Vec<SeedResult>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(invalid("a grid cell needs at least one seed"));
        }
        let success_rate = mean(per_seed.iter().map(|s| f64::from(u8::from(s.success)))).unwrap();
        Ok(Self {
            cell,
            success: success_rate >= 0.5,
            success_rate,
            total_spend: mean(per_seed.iter().map(|s| s.total_spend)).unwrap(),
            mean_iterations: mean(per_seed.iter().map(|s| f64::from(s.iterations))).unwrap(),
            gini_spend: mean(per_seed.iter().filter_map(|s| s.gini_spend)),
            spearman_q_shapley: mean(per_seed.iter().filter_map(|s| s.spearman_q_shapley)),
            seeds: per_seed.len(),
            per_seed,
        })
    }
}

/// All runs of one cell, in seed order.
#[derive(Debug, Clone)]
pub struct CellRuns {
    pub cell: GridCell,
    pub runs: Vec<RunOutcome>,
}

/// Cells in `du_grid`-major order.
pub fn grid_cells(du_grid: &[DUPolicy], strategy_grid: &[StrategyConfig]) -> Vec<GridCell> {
    du_grid
        .iter()
        .flat_map(|p| {
            strategy_grid
                .iter()
                .map(move |s| GridCell::new(p.clone(), s.clone()))
        })
        .collect()
}

/// Every cell under every seed, run in parallel and collected in order.
pub fn run_cells(game: &Game<'_>, cells: &[GridCell], seeds: &[u64]) -> Result<Vec<CellRuns>> {
    if cells.is_empty() || seeds.is_empty() {
        return Err(invalid("grid needs at least one cell and one seed"));
    }
    for c in cells {
        c.du_policy.validate()?;
        c.strategy.validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(c, s)| game.run(&cells[c].du_policy, &cells[c].strategy, s))
        .collect::<Result<_>>()?;
    let mut outcomes = outcomes.into_iter();
    Ok(cells
        .iter()
        .map(|cell| CellRuns {
            cell: cell.clone(),
            runs: outcomes.by_ref().take(seeds.len()).collect(),
        })
        .collect())
}

/// Aggregates finished runs. Spearman against original Shapley values is
/// computed only for cells with bandit estimates.
pub fn summarize(game: &Game<'_>, runs: &[CellRuns]) -> Result<Vec<GridResult>> {
    let reference = if runs
        .iter()
        .any(|c| c.runs.iter().any(|r| r.q_values.is_some()))
    {
        Some(game.original_shapley()?)
    } else {
        None
    };
    runs.iter()
        .map(|c| {
            let per_seed = c
                .runs
                .iter()
                .map(|r| SeedResult::from_outcome(r, reference.as_ref()))
                .collect();
            GridResult::aggregate(c.cell.clone(), per_seed)
        })
        .collect()
}

/// Cartesian product of DU policies, strategies and seeds, aggregated per cell.
pub fn grid_search(
    game: &Game<'_>,
    du_grid: &[DUPolicy],
    strategy_grid: &[StrategyConfig],
    seeds: &[u64],
) -> Result<Vec<GridResult>> {
    let runs = run_cells(game, &grid_cells(du_grid, strategy_grid), seeds)?;
    summarize(game, &runs)
}

/// The DU policy that maximizes the cheapest successful consumer strategy
/// among the admitted cells. Policies where no admitted strategy succeeds
/// rank last; ties go to the smaller `B_max`, then to the earlier policy.
pub fn du_objective<F>(results: &[GridResult], admit: F) -> Result<DUPolicy>
where
    F: Fn(&StrategyConfig) -> bool,
{
    if results.is_empty() {
        return Err(invalid("no grid results to optimize over"));
    }
    let mut policies: Vec<(&DUPolicy, Option<f64>)> = Vec::new();
    for r in results {
        let pos = match policies.iter().position(|(p, _)| **p == r.cell.du_policy) {
            Some(pos) => pos,
            None => {
                policies.push((&r.cell.du_policy, None));
                policies.len() - 1
            }
        };
        if r.success && admit(&r.cell.strategy) {
            let slot = &mut policies[pos].1;
            *slot = Some(slot.map_or(r.total_spend, |m: f64| m.min(r.total_spend)));
        }
    }
    let mut best = 0;
    for i in 1..policies.len() {
        let (p, v) = policies[i];
        let (bp, bv) = policies[best];
        let better = match (v, bv) {
            (Some(_), None) => true,
            (Some(a), Some(b)) => a > b || (a == b && p.b_max() < bp.b_max()),
            (None, None) => p.b_max() < bp.b_max(),
            (None, Some(_)) => false,
        };
        if better {
            best = i;
        }
    }
    Ok(policies[best].0.clone())
}
