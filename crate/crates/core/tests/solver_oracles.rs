use std::collections::BTreeMap;

use knapsack_game::oracle::{history_tree_evaluate, history_tree_value, single_seller_dp};
use knapsack_game::simulator::{simulate, CapacityMode, SimulationConfig};
use knapsack_game::suite::{generate, SuiteSpec};
use knapsack_game::{
    solve, Instance, PriceAtom, ProblemInstance, SalesVector, SellerSpec, SolveOptions, ValueTables,
};
use proptest::prelude::*;

fn solved(raw: ProblemInstance) -> ValueTables {
    solve(&Instance::new(raw).unwrap(), &SolveOptions::default()).unwrap()
}

fn two_uniform_sellers() -> ProblemInstance {
    let seller = |name: &str| SellerSpec {
        name: name.into(),
        pi: 0.5,
        capacity_prior: BTreeMap::from([(0, 0.5), (1, 0.5)]),
        actual_capacity: None,
    };
    ProblemInstance {
        horizon: 2,
        prices: vec![
            PriceAtom {
                price: 10.0,
                prob: 0.5,
            },
            PriceAtom {
                price: 4.0,
                prob: 0.5,
            },
        ],
        sellers: vec![seller("a"), seller("b")],
    }
}

#[test]
fn two_seller_table_by_hand_and_by_history_tree() {
    let tables = solved(two_uniform_sellers());
    let mut rows = 0;
    for (key, value, accept) in tables.entries() {
        let expected = match (key.period, key.remaining) {
            (_, 0) | (3, _) => 0.0,
            // last period: sell at any price, pi * E[P]
            (2, 1) => 3.5,
            // accept both prices now, else fall back to 3.5
            (1, 1) => 0.5 * 7.0 + 0.5 * 3.5,
            _ => unreachable!("capacity at most 1"),
        };
        assert!(
            (value - expected).abs() <= 1e-12,
            "{key:?}: {value} vs {expected}"
        );
        if key.period <= 2 && key.remaining == 1 {
            assert_eq!(accept, Some(vec![true, true]), "{key:?}");
        }
        rows += 1;
    }
    assert_eq!(rows, tables.space().state_count());

    let inst = tables.instance();
    let zeros = SalesVector::zeros(2);
    for n in 0..2 {
        let oracle = history_tree_value(inst, 1, n).unwrap();
        assert!((oracle - tables.value(n, 1, 1, &zeros).unwrap()).abs() <= 1e-12);
        assert_eq!(history_tree_value(inst, 0, n).unwrap(), 0.0);
    }
}

#[test]
fn history_tree_subjective_value_matches_table() {
    for raw in generate(&SuiteSpec::tiny(), 8, 91) {
        let tables = solved(raw);
        let inst = tables.instance();
        let zeros = SalesVector::zeros(inst.num_sellers());
        for n in 0..inst.num_sellers() {
            for c in inst.prior(n).support() {
                let eval = history_tree_evaluate(inst, c, n).unwrap();
                let v = tables.value(n, 1, c, &zeros).unwrap();
                assert!((eval.subjective_value - v).abs() <= 1e-9);
                assert!((eval.expected_revenue - v).abs() <= 1e-9);
            }
        }
    }
}

// A seller's sale probability is pi_n whatever the others do, so even with
// competitors at their actual capacities the mean revenue matches the table.
#[test]
fn fixed_mode_means_match_own_table_entries() {
    for (i, raw) in generate(&SuiteSpec::default_suite(), 4, 17)
        .into_iter()
        .enumerate()
    {
        let tables = solved(raw);
        let inst = tables.instance();
        let caps = inst.actual_capacities().unwrap();
        let config = SimulationConfig {
            replications: 50_000,
            seed: i as u64,
            mode: CapacityMode::Fixed,
            focal: None,
        };
        let report = simulate(&tables, &config).unwrap();
        let zeros = SalesVector::zeros(inst.num_sellers());
        for (n, stats) in report.sellers.iter().enumerate() {
            let v = tables.value(n, 1, caps[n], &zeros).unwrap();
            let slack = 3.5 * stats.std_error + 1e-12;
            assert!(
                (stats.mean_revenue - v).abs() <= slack,
                "seller {n}: {} vs {v}",
                stats.mean_revenue
            );
        }
    }
}

fn reversed(raw: &ProblemInstance) -> ProblemInstance {
    let mut out = raw.clone();
    out.sellers.reverse();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // With static selection probabilities each seller's table collapses to its
    // own single-seller problem with selection probability pi_n.
    #[test]
    fn tables_decouple_into_single_seller_problems(seed in any::<u64>()) {
        let tables = solved(generate(&SuiteSpec::default_suite(), 1, seed).remove(0));
        let inst = tables.instance();
        let dps: Vec<_> = (0..inst.num_sellers())
            .map(|n| single_seller_dp(
                inst.horizon(),
                inst.prior(n).max_support(),
                inst.prices().atoms(),
                inst.selection().pi(n),
            ))
            .collect();
        for (key, value, _) in tables.entries() {
            let dp = dps[key.seller].value(key.period, key.remaining);
            prop_assert!((value - dp).abs() <= 1e-12, "{:?}: {} vs {}", key, value, dp);
        }
    }

    #[test]
    fn relabeling_sellers_permutes_tables(seed in any::<u64>()) {
        let raw = generate(&SuiteSpec::default_suite(), 1, seed).remove(0);
        let n = raw.sellers.len();
        let original = solved(raw.clone());
        let permuted = solved(reversed(&raw));
        for (key, value, accept) in original.entries() {
            let mut s = key.sales.as_slice().to_vec();
            s.reverse();
            let s = SalesVector::from(s);
            let m = n - 1 - key.seller;
            let other = permuted.value(m, key.period, key.remaining, &s).unwrap();
            prop_assert!((value - other).abs() <= 1e-12, "{:?}: {} vs {}", key, value, other);
            if key.period <= raw.horizon {
                for (i, flag) in accept.unwrap().into_iter().enumerate() {
                    prop_assert_eq!(
                        flag,
                        permuted.policy_accepts(m, key.period, key.remaining, &s, i).unwrap()
                    );
                }
            }
        }
        prop_assert_eq!(original.space().state_count(), permuted.space().state_count());
    }

    #[test]
    fn history_tree_agrees_on_random_tiny_instances(seed in any::<u64>()) {
        let tables = solved(generate(&SuiteSpec::tiny(), 1, seed).remove(0));
        let inst = tables.instance();
        let zeros = SalesVector::zeros(inst.num_sellers());
        for n in 0..inst.num_sellers() {
            for c in inst.prior(n).support() {
                let oracle = history_tree_value(inst, c, n).unwrap();
                let v = tables.value(n, 1, c, &zeros).unwrap();
                prop_assert!((oracle - v).abs() <= 1e-9, "seller {} cap {}: {} vs {}", n, c, v, oracle);
            }
        }
    }
}
