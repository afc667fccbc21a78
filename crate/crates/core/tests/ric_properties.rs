use std::sync::OnceLock;

use proptest::prelude::*;

use oran_balance::io::FeatureTable;
use oran_balance::labeler::{attach_labels, PolicyName, ThresholdPolicy};
use oran_balance::learner::TrainedModel;
use oran_balance::pipeline::{fit, ModelKind, TrainParams};
use oran_balance::ric::{optimize, BalanceModel, Decision, OptimizeOptions, OracleLabeler, RicState, SearchMode};
use oran_balance::twin::{generate_dataset, generate_snapshot, TwinParams};
use oran_balance::{BalanceCategory, KpmRecord, Scenario};

const POLICIES: [PolicyName; 3] = [PolicyName::Conservative, PolicyName::Moderate, PolicyName::Aggressive];

fn state(n: usize, seed: u64, index: u64) -> RicState {
    let scenario = Scenario::new(n, 6 * n, 0).unwrap();
    let twin = TwinParams::default();
    let snap = generate_snapshot(&scenario, &twin, seed, index).unwrap();
    RicState {
        scenario,
        twin,
        deployment: snap.deployment,
        config: snap.state.config().clone(),
    }
}

fn oracle_run(s: &RicState, p: PolicyName, options: &OptimizeOptions) -> Decision {
    optimize(s, p, &OracleLabeler(ThresholdPolicy::builtin(p)), options).unwrap()
}

/// Small forest on five-RU data labelled with the moderate policy.
fn forest() -> &'static TrainedModel {
    static M: OnceLock<TrainedModel> = OnceLock::new();
    M.get_or_init(|| {
        let s = Scenario::new(5, 30, 0).unwrap();
        let mut recs: Vec<KpmRecord> = generate_dataset(&s, &TwinParams::default(), 3000, 77)
            .unwrap()
            .iter()
            .map(|snap| snap.state.kpm(snap.id, s.prb_per_ru))
            .collect();
        attach_labels(&mut recs, &ThresholdPolicy::builtin(PolicyName::Moderate)).unwrap();
        let table = FeatureTable::from_records(&recs).unwrap();
        let mut params = TrainParams::default();
        params.forest.n_trees = 30;
        fit(
            ModelKind::Forest,
            &table.x,
            &table.labels_for(PolicyName::Moderate).unwrap(),
            &params,
            1,
        )
        .unwrap()
    })
}

fn assert_safe(d: &Decision) {
    match d.chosen {
        Some(i) => {
            let c = &d.candidates[i];
            assert_ne!(c.prediction.category, BalanceCategory::Imbalanced);
            assert!(c.energy_savings_w > 0.0);
            assert!(c.config.n_active() <= d.current.n_active());
        }
        None => assert_eq!(d.energy_savings_w(), 0.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_choice_is_never_imbalanced(n in 2usize..=8, seed in 0u64..1000, index in 0u64..1000, single in any::<bool>(), wb in any::<bool>()) {
        let s = state(n, seed, index);
        let options = OptimizeOptions {
            mode: if single { SearchMode::Single } else { SearchMode::Exhaustive },
            well_balanced_only: wb,
        };
        for p in POLICIES {
            let d = oracle_run(&s, p, &options);
            assert_safe(&d);
            if wb {
                if let Some(i) = d.chosen {
                    prop_assert_eq!(d.candidates[i].prediction.category, BalanceCategory::WellBalanced);
                }
            }
        }
    }

    #[test]
    fn forest_choice_is_never_predicted_imbalanced(seed in 0u64..1000, index in 0u64..1000) {
        let s = state(5, seed, index);
        let model: &dyn BalanceModel = forest();
        let d = optimize(&s, PolicyName::Moderate, model, &OptimizeOptions::default()).unwrap();
        assert_safe(&d);
    }

    #[test]
    fn looser_policy_never_saves_less(n in 2usize..=8, seed in 0u64..1000, index in 0u64..1000) {
        let s = state(n, seed, index);
        let savings: Vec<f64> = POLICIES
            .iter()
            .map(|&p| oracle_run(&s, p, &OptimizeOptions::default()).energy_savings_w())
            .collect();
        prop_assert!(savings[0] <= savings[1] && savings[1] <= savings[2], "{:?}", savings);
    }

    #[test]
    fn second_run_keeps_config_or_saves_more(n in 2usize..=8, seed in 0u64..1000, index in 0u64..1000, p in 0usize..3) {
        let s = state(n, seed, index);
        let options = OptimizeOptions::default();
        let first = oracle_run(&s, POLICIES[p], &options);
        let next = s.with_config(first.config().clone());
        let second = oracle_run(&next, POLICIES[p], &options);
        prop_assert!(second.config() == first.config() || second.energy_savings_w() > 0.0);
    }
}
