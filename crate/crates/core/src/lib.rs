//! Simulation engine for the information disclosure game.
//!
//! A data union holds a labeled dataset and discloses it only through a
//! clamped Laplace mechanism, charging a per-point privacy budget for every
//! release. A data consumer averages the noisy releases into centers, values
//! them with kNN data Shapley or a budget-aware UCB bandit, and tries to reach
//! a validation-accuracy target while spending as little budget as possible.
//!
//! Module map:
//!
//! - [`data`]: datasets, file formats, splits, feature bounds, synthetic data.
//! - [`release`]: Laplace release mechanism and the per-point budget ledger.
//! - [`denoise`]: running-mean centers and fidelity measures.
//! - [`knn`] and [`shapley`]: kNN classification, utilities and data Shapley.
//! - [`strategy`]: the consumer's acquisition policies.
//! - [`game`]: run orchestration, pricing baseline, grid search.
//! - [`metrics`]: Gini, Spearman, curve aggregation and result export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod denoise;
pub mod error;
pub mod game;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod release;
pub mod rng;
pub mod shapley;
pub mod strategy;

pub use data::{
    compute_feature_bounds, generate_synthetic, load_dataset, save_dataset, split_dataset,
    DataFormat, Dataset, FeatureBounds, PointId, SplitDataset, SyntheticSpec,
};
pub use denoise::CenterTable;
pub use error::{Error, Result};
pub use game::{
    du_objective, grid_search, run_idg, solve_pricing_game, DUPolicy, Game, GridCell, GridResult,
    IterationRecord, PricingOutcome, RunOutcome, RunTrace, SeedResult,
};
pub use knn::{
    evaluate_utility, knn_predict, label_agreement, macro_f1, Distance, IncrementalKnn, TrainView,
};
pub use metrics::{aggregate_curves, gini, spearman, CurveSeries};
pub use release::{noisy_release, BudgetLedger, DataUnion, NoisyVector, ReleaseConfig};
pub use shapley::{
    exact_knn_shapley, monte_carlo_shapley, Sampling, ValuationVector, ValueFunction,
};
pub use strategy::{
    bandit_update, run_budget_ucb, select_random_subset, ucb_scores, BanditState, RewardMode,
    StrategyConfig, StrategyKind, UnqueriedPolicy,
};
