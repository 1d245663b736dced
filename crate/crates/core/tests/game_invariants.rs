use idg_core::{
    generate_synthetic, split_dataset, DUPolicy, Distance, Game, RewardMode, SplitDataset,
    StrategyConfig, StrategyKind, SyntheticSpec, UnqueriedPolicy,
};
use proptest::prelude::*;

fn split(seed: u64) -> SplitDataset {
    let spec = SyntheticSpec {
        n: 90,
        d: 3,
        num_classes: 2,
        cluster_spread: 0.5,
        label_noise: 0.1,
        seed,
    };
    split_dataset(&generate_synthetic(&spec).unwrap(), 40, 30, 20, seed).unwrap()
}

fn strategy() -> impl Strategy<Value = StrategyConfig> {
    (
        prop_oneof![
            Just(StrategyKind::Random),
            Just(StrategyKind::NoisyShapley),
            Just(StrategyKind::ShapleyCommit),
            Just(StrategyKind::BudgetUcb),
        ],
        0.1f64..=1.0,
        1u32..6,
        0.0f64..3.0,
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(kind, fraction, bootstrap, c, zero, agree)| {
            let mut s = StrategyConfig::new(kind)
                .with_fraction(fraction)
                .with_bootstrap(bootstrap)
                .with_exploration(c);
            if zero {
                s = s.with_unqueried(UnqueriedPolicy::ZeroCenter);
            }
            if agree {
                s = s.with_reward(RewardMode::LabelAgreement);
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traces_are_self_consistent(
        data_seed in 0u64..5,
        run_seed in any::<u64>(),
        config in strategy(),
        t_max in 1u32..8,
        charge in prop_oneof![Just(0.5), Just(1.0), Just(2.0)],
        target in 0.5f64..1.0,
    ) {
        let split = split(data_seed);
        let game = Game::new(&split, 3, Distance::L2).unwrap();
        let mut policy = DUPolicy::new(t_max, target).with_eps(0.5);
        policy.charge_per_query = charge;
        let out = game.run(&policy, &config, run_seed).unwrap();
        let trace = &out.trace;

        for (i, r) in trace.iterations.iter().enumerate() {
            prop_assert_eq!(r.t as usize, i);
            prop_assert!((r.spend_this_iter - r.selected.len() as f64 * charge).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.utility));
        }
        let spent: f64 = trace.iterations.iter().map(|r| r.spend_this_iter).sum();
        prop_assert!((spent - trace.total_spend).abs() < 1e-9);
        prop_assert!((out.ledger.total_spent() - trace.total_spend).abs() < 1e-9);

        for p in 0..out.ledger.len() {
            prop_assert!(out.ledger.spent(p) <= policy.b_max() + 1e-9);
            prop_assert_eq!(out.ledger.queries(p), out.centers.count(p));
        }

        let hits: Vec<u32> = trace.iterations.iter().filter(|r| r.utility >= target).map(|r| r.t).collect();
        prop_assert_eq!(trace.success, !hits.is_empty());
        if trace.success {
            prop_assert_eq!(hits, vec![trace.last_t()]);
        }
        if config.kind == StrategyKind::BudgetUcb {
            prop_assert_eq!(out.q_values.as_ref().map(Vec::len), Some(split.train.len()));
            if !trace.success {
                prop_assert!((0..out.ledger.len()).all(|p| !out.ledger.can_charge(p)));
            }
        } else {
            prop_assert!(trace.last_t() <= t_max);
            prop_assert!(out.q_values.is_none());
        }
    }

    #[test]
    fn runs_are_reproducible(run_seed in any::<u64>(), config in strategy()) {
        let split = split(1);
        let game = Game::new(&split, 3, Distance::L2).unwrap();
        let policy = DUPolicy::new(4, 0.95).with_eps(0.5);
        let a = game.run(&policy, &config, run_seed).unwrap();
        let b = game.run(&policy, &config, run_seed).unwrap();
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.ledger, b.ledger);
        prop_assert_eq!(a.q_values, b.q_values);
    }
}

#[test]
fn cosine_distance_runs_end_to_end() {
    let split = split(2);
    let game = Game::new(&split, 3, Distance::Cosine).unwrap();
    let policy = DUPolicy::new(5, 0.0);
    let out = game
        .run(&policy, &StrategyConfig::new(StrategyKind::NoisyShapley), 0)
        .unwrap();
    assert!(out.trace.success);
    assert_eq!(out.trace.last_t(), 1);
}
