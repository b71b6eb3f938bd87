use abac_explain::bench::{run_benchmark, visibility_sweep, MetricsReport};
use abac_explain::datagen::{generate, Dataset, DatasetParams};
use abac_explain::{SearchLimits, SearchStrategy, SplitHeuristic};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = Dataset> {
    // Permissive policies can make the deny quota unreachable; those draws are discarded.
    (any::<u64>(), 5usize..60, 0.1f64..0.6, 0.2f64..0.8).prop_filter_map("reachable allow target", |(seed, n_p, wildcard_fraction, target_allow_ratio)| {
        generate(&DatasetParams {
            n_u: 30,
            n_o: 30,
            n_e: 4,
            u_a: 3,
            o_a: 3,
            e_a: 2,
            nv_u: 3,
            nv_o: 3,
            nv_e: 2,
            n_p,
            n_ops: 2,
            wildcard_fraction,
            target_allow_ratio,
            n_requests: 80,
            max_perturbations: 2,
            seed,
        })
        .ok()
    })
}

/// Everything except wall-clock measurements.
fn counts(r: &MetricsReport) -> (usize, usize, usize, Option<f64>, Option<f64>, Option<f64>, usize, u32, usize) {
    (
        r.n_allowed,
        r.n_denied,
        r.n_found,
        r.avg_cost,
        r.avg_depth,
        r.nodes_expanded,
        r.tree_node_count,
        r.tree_height,
        r.decision_mismatches,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reports_repeat_and_agree_across_configurations(d in dataset(), seed in any::<u64>()) {
        let limits = SearchLimits::new(8, 3);
        let reference = run_benchmark(&d, SplitHeuristic::HighCostFirst, SearchStrategy::ChangeFirst, limits, 80, seed).unwrap();
        let again = run_benchmark(&d, SplitHeuristic::HighCostFirst, SearchStrategy::ChangeFirst, limits, 80, seed).unwrap();
        prop_assert_eq!(counts(&reference), counts(&again));
        for h in SplitHeuristic::ALL {
            let first = run_benchmark(&d, h, SearchStrategy::ChangeFirst, limits, 80, seed).unwrap();
            let best = run_benchmark(&d, h, SearchStrategy::ChangeBest, limits, 80, seed).unwrap();
            for r in [&first, &best] {
                prop_assert_eq!(r.decision_mismatches, 0);
                prop_assert_eq!((r.n_allowed, r.n_denied), (reference.n_allowed, reference.n_denied), "{}", h);
            }
            prop_assert_eq!(first.n_found, best.n_found, "{}", h);
            if let (Some(b), Some(f)) = (best.avg_cost, first.avg_cost) {
                prop_assert!(b <= f + 1e-9);
            }
        }
    }

    #[test]
    fn sweep_rows_shrink_as_more_is_hidden(d in dataset(), seed in any::<u64>()) {
        let fractions = [0.0, 0.2, 0.5, 0.8, 1.0];
        let report = visibility_sweep(
            &d,
            &fractions,
            SplitHeuristic::HighCostFirst,
            SearchStrategy::ChangeBest,
            SearchLimits::new(8, 3),
            80,
            seed,
        )
        .unwrap();
        prop_assume!(report.baseline_requests > 0);
        prop_assert_eq!(report.rows[0].found_pct, 100.0);
        prop_assert_eq!(report.rows[4].found_pct, 0.0);
        for w in report.rows.windows(2) {
            prop_assert!(w[1].found_pct <= w[0].found_pct);
        }
    }
}
