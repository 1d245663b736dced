//! Data consumer acquisition policies.
//!
//! Ranking strategies (random, noisy Shapley, Shapley with commitment) pick
//! a subset each iteration and are driven by [`crate::game::Game::run`].
//! The budget-aware UCB bandit pulls one point per step and has its own
//! loop, [`run_budget_ucb`].

use serde::{Deserialize, Serialize};

use crate::data::PointId;
use crate::denoise::CenterTable;
use crate::error::{invalid, Result};
use crate::game::{DUPolicy, Game, IterationRecord, RunOutcome, RunTrace};
use crate::knn::{label_agreement, IncrementalKnn, TrainView};
use crate::release::{BudgetLedger, DataUnion};
use crate::rng::{derive_seed, stream_rng, STREAM_SUBSET};
use crate::shapley::{exact_knn_shapley, fraction_count};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    NoisyShapley,
    ShapleyCommit,
    BudgetUcb,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::NoisyShapley => "noisy_shapley",
            StrategyKind::ShapleyCommit => "shapley_commit",
            StrategyKind::BudgetUcb => "budget_ucb",
        }
    }
}

/// How points that were never released enter the consumer's classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnqueriedPolicy {
    /// Not usable as neighbors until released once.
    #[default]
    Exclude,
    /// Present with an all-zero center.
    ZeroCenter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Change in validation accuracy caused by the pull.
    #[default]
    UtilityDelta,
    /// Share of the pulled point's kNN neighbors that agree with its label.
    LabelAgreement,
}

fn default_fraction() -> f64 {
    1.0
}
fn default_bootstrap() -> u32 {
    10
}
fn default_c() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.1
}
fn default_stability() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_iters: u32,
    #[serde(default = "default_c")]
    pub exploration_c: f64,
    #[serde(default = "default_alpha")]
    pub learning_rate: f64,
    #[serde(default = "default_stability")]
    pub stability_eps: f64,
    #[serde(default)]
    pub unqueried_policy: UnqueriedPolicy,
    #[serde(default)]
    pub reward: RewardMode,
    /// Noisy Shapley only: re-release every point each iteration instead of
    /// just the currently selected subset.
    #[serde(default = "default_true")]
    pub refine_all: bool,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            fraction: default_fraction(),
            bootstrap_iters: default_bootstrap(),
            exploration_c: default_c(),
            learning_rate: default_alpha(),
            stability_eps: default_stability(),
            unqueried_policy: UnqueriedPolicy::default(),
            reward: RewardMode::default(),
            refine_all: true,
        }
    }

    pub fn with_fraction(mut self, fraction: f64) -> Self {
        self.fraction = fraction;
        self
    }

    pub fn with_exploration(mut self, c: f64) -> Self {
        self.exploration_c = c;
        self
    }

    pub fn with_bootstrap(mut self, iters: u32) -> Self {
        self.bootstrap_iters = iters;
        self
    }

    pub fn with_unqueried(mut self, policy: UnqueriedPolicy) -> Self {
        self.unqueried_policy = policy;
        self
    }

    pub fn with_reward(mut self, reward: RewardMode) -> Self {
        self.reward = reward;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(invalid(format!(
                "fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        if !(self.stability_eps > 0.0) {
            return Err(invalid("stability_eps must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid("learning_rate must lie in (0, 1]"));
        }
        if !(self.exploration_c >= 0.0) || !self.exploration_c.is_finite() {
            return Err(invalid("exploration_c must be finite and non-negative"));
        }
        if self.kind == StrategyKind::ShapleyCommit && self.bootstrap_iters == 0 {
            return Err(invalid(
                "shapley_commit needs at least one bootstrap iteration",
            ));
        }
        Ok(())
    }
}

/// `ceil(fraction * n)` distinct rows drawn uniformly without replacement,
/// returned sorted.
pub fn select_random_subset(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    let m = fraction_count(n, fraction)?;
    let mut rng = stream_rng(seed, &[STREAM_SUBSET]);
    let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Top `ceil(fraction * n)` rows by exact kNN Shapley value computed on the
/// view (normally the current centers). Every row must be active.
pub fn noisy_shapley_select(
    view: &TrainView<'_>,
    eval: &crate::data::Dataset,
    k: usize,
    fraction: f64,
) -> Result<Vec<usize>> {
    if view.active().len() != view.rows() {
        return Err(invalid(
            "noisy Shapley selection needs a center for every point",
        ));
    }
    exact_knn_shapley(view, eval, k)?.top_fraction(fraction)
}

/// Per-arm bandit estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    pub q: Vec<f64>,
    pub n: Vec<u32>,
    pub last_utility: f64,
}

impl BanditState {
    pub fn new(arms: usize, initial_utility: f64) -> Self {
        Self {
            q: vec![0.0; arms],
            n: vec![0; arms],
            last_utility: initial_utility,
        }
    }

    pub fn arms(&self) -> usize {
        self.q.len()
    }
}

/// Budget-scaled UCB scores. Arms that cannot afford another query score
/// negative infinity.
pub fn ucb_scores(
    state: &BanditState,
    ledger: &BudgetLedger,
    config: &StrategyConfig,
) -> Result<Vec<f64>> {
    if state.arms() != ledger.len() {
        return Err(invalid("bandit state and ledger cover different arms"));
    }
    (0..state.arms())
        .map(|a| {
            if ledger.is_exhausted(a) {
                return Ok(f64::NEG_INFINITY);
            }
            let bonus = (1.0 / (f64::from(state.n[a]) + config.stability_eps)).sqrt();
            Ok(state.q[a] + config.exploration_c * bonus * ledger.remaining_fraction(a)?)
        })
        .collect()
}

/// Index of the highest finite-or-positive score, ties to the lower id.
/// `None` when every arm is exhausted.
pub fn select_arm(scores: &[f64], ids: &[PointId]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (a, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY {
            continue;
        }
        best = match best {
            None => Some(a),
            Some(b) if s > scores[b] || (s == scores[b] && ids[a] < ids[b]) => Some(a),
            keep => keep,
        };
    }
    best
}

/// Exponential-recency update of the pulled arm.
pub fn bandit_update(
    state: &mut BanditState,
    arm: usize,
    reward: f64,
    config: &StrategyConfig,
) -> Result<()> {
    if arm >= state.arms() {
        return Err(invalid(format!("unknown arm {arm}")));
    }
    state.q[arm] += config.learning_rate * (reward - state.q[arm]);
    state.n[arm] += 1;
    Ok(())
}

fn model_rows(centers: &CenterTable, policy: UnqueriedPolicy) -> Vec<usize> {
    match policy {
        UnqueriedPolicy::Exclude => centers.queried(),
        UnqueriedPolicy::ZeroCenter => (0..centers.len()).collect(),
    }
}

/// Budget-aware UCB over single points.
///
/// Each step scores every arm, pulls the argmax (ties to the lower id),
/// releases it, folds the release into its center, recomputes validation
/// utility and updates the arm with the reward. The run ends when the target
/// is reached or no arm can afford another query.
pub fn run_budget_ucb(
    game: &Game<'_>,
    policy: &DUPolicy,
    config: &StrategyConfig,
    seed: u64,
) -> Result<RunOutcome> {
    if config.kind != StrategyKind::BudgetUcb {
        return Err(invalid("run_budget_ucb needs a budget_ucb strategy"));
    }
    config.validate()?;
    policy.validate()?;
    let train = game.train();
    let n = train.len();
    let mut union = DataUnion::new(
        train,
        game.release_config(policy.eps_per_feature)?,
        policy.charge_per_query,
        policy.b_max(),
        seed,
    )?;
    let mut centers = CenterTable::new(n, train.dim());
    let mut tracker = IncrementalKnn::new(
        game.validation(),
        train.labels(),
        train.ids(),
        game.k(),
        game.metric(),
    )?;
    if config.unqueried_policy == UnqueriedPolicy::ZeroCenter {
        let zeros = vec![0.0; train.dim()];
        for row in 0..n {
            tracker.set_row(row, &zeros)?;
        }
    }
    let mut utility = tracker.utility();
    let mut state = BanditState::new(n, utility);
    let mut iterations = vec![IterationRecord {
        t: 0,
        selected: Vec::new(),
        model_size: tracker.active_rows(),
        utility,
        spend_this_iter: 0.0,
    }];
    let mut t = 1u32;
    while utility < policy.u_target {
        let scores = ucb_scores(&state, union.ledger(), config)?;
        let Some(arm) = select_arm(&scores, train.ids()) else {
            break;
        };
        let noisy = union.release(arm)?;
        centers.update_center(&noisy)?;
        tracker.set_row(arm, centers.center(arm).expect("just released"))?;
        let new_utility = tracker.utility();
        let reward = match config.reward {
            RewardMode::UtilityDelta => new_utility - utility,
            RewardMode::LabelAgreement => {
                let view =
                    game.center_view(&centers, model_rows(&centers, config.unqueried_policy))?;
                if view.active().len() < 2 {
                    0.0
                } else {
                    label_agreement(&view, arm, game.k())?
                }
            }
        };
        utility = new_utility;
        state.last_utility = utility;
        bandit_update(&mut state, arm, reward, config)?;
        iterations.push(IterationRecord {
            t,
            selected: vec![train.id(arm)],
            model_size: tracker.active_rows(),
            utility,
            spend_this_iter: policy.charge_per_query,
        });
        t += 1;
    }
    let ledger = union.into_ledger();
    debug_assert!(
        (0..n).all(|a| f64::from(state.n[a]) * policy.charge_per_query == ledger.spent(a))
    );
    Ok(RunOutcome {
        trace: RunTrace::finish(iterations, policy, seed),
        ledger,
        centers,
        q_values: Some(state.q),
    })
}

/// Rows the random strategy commits to for a whole run.
pub(crate) fn run_subset(n: usize, fraction: f64, run_seed: u64) -> Result<Vec<usize>> {
    select_random_subset(n, fraction, derive_seed(run_seed, &[STREAM_SUBSET]))
}
