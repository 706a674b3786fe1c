mod common;

use persuasion::conformal::{calibrate, ScoreKind};
use persuasion::domain::{best_response, joint_ys, receiver_posterior, tv_distance, Categorical, Scenario};
use persuasion::robustopt::{robust_value_with_sets, simplex_lattice};
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n).prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-6)
}

fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    weights(n).prop_map(|w| Categorical::from_weights(&w).unwrap().probs().to_vec())
}

fn policy() -> impl Strategy<Value = persuasion::domain::SignalingPolicy> {
    prop::collection::vec(dist(3), 3).prop_map(|rows| persuasion::domain::SignalingPolicy::new(rows).unwrap())
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, 1..200)
}

proptest! {
    #[test]
    fn normalized_weights_lie_on_the_simplex(w in weights(6)) {
        let c = Categorical::from_weights(&w).unwrap();
        prop_assert!((c.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(c.probs().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn joint_law_and_posteriors_lie_on_the_simplex(pi in policy(), theta in dist(3)) {
        let sc = Scenario::smart_grid();
        let j = joint_ys(&sc, &pi);
        prop_assert!((j.total_mass() - 1.0).abs() <= 1e-9);
        let belief = Categorical::new(theta).unwrap();
        for s in 0..3 {
            if let Ok(post) = receiver_posterior(&pi, &belief, s) {
                prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(post.probs().iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn lattice_points_lie_on_the_simplex(parts in 1usize..5, res in 1usize..6) {
        for p in simplex_lattice(parts, res) {
            prop_assert_eq!(p.len(), parts);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn best_response_is_affine_invariant(
        theta in dist(3),
        rewards in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 3),
        scale in 0.01f64..100.0,
        shifts in prop::collection::vec(-100.0f64..100.0, 3),
    ) {
        let belief = Categorical::new(theta).unwrap();
        let base = best_response(&belief, &rewards);
        let values: Vec<f64> = (0..3).map(|u| (0..3).map(|x| belief.prob(x) * rewards[x][u]).sum()).collect();
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let runner_up = values.iter().filter(|&&v| v < top).cloned().fold(f64::NEG_INFINITY, f64::max);
        // near-ties may legitimately flip under rounding
        prop_assume!(values.iter().filter(|&&v| v == top).count() == 1 && top - runner_up > 1e-6);
        let moved: Vec<Vec<f64>> = rewards
            .iter()
            .zip(&shifts)
            .map(|(row, c)| row.iter().map(|r| scale * r + c).collect())
            .collect();
        prop_assert_eq!(best_response(&belief, &moved), base);
    }

    #[test]
    fn permuting_signals_permutes_joint_columns(pi in policy(), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        let sc = Scenario::smart_grid();
        let a = joint_ys(&sc, &pi);
        let b = joint_ys(&sc, &pi.permute_signals(&perm));
        for y in 0..3 {
            for j in 0..3 {
                prop_assert!((b.prob(y, j) - a.prob(y, perm[j])).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn tv_is_a_bounded_metric(a in dist(4), b in dist(4), c in dist(4)) {
        let (ab, ba) = (tv_distance(&a, &b), tv_distance(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(tv_distance(&a, &a), 0.0);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!(ab <= tv_distance(&a, &c) + tv_distance(&c, &b) + 1e-12);
    }

    #[test]
    fn sets_shrink_as_alpha_grows(s in scores(), probs in dist(3), a1 in 0.01f64..0.99, a2 in 0.01f64..0.99) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        for kind in [ScoreKind::nll(), ScoreKind::aps(), ScoreKind::one_minus_prob(), ScoreKind::indicator()] {
            let wide = calibrate(kind, &s, lo).unwrap();
            let narrow = calibrate(kind, &s, hi).unwrap();
            prop_assert!(narrow.threshold() <= wide.threshold());
            let big = wide.set_from_probs(&probs);
            let small = narrow.set_from_probs(&probs);
            prop_assert!(!small.is_empty());
            prop_assert!(small.iter().all(|u| big.contains(u)), "{:?} ⊄ {:?}", small, big);
        }
    }

    #[test]
    fn indicator_sets_are_singletons_or_full(s in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0)], 1..100), probs in dist(3), alpha in 0.01f64..0.99) {
        let cal = calibrate(ScoreKind::indicator(), &s, alpha).unwrap();
        let n = cal.set_from_probs(&probs).len();
        prop_assert!(n == 1 || n == 3, "size {}", n);
    }

    #[test]
    fn threshold_covers_the_calibration_scores(s in scores(), alpha in 0.01f64..0.99) {
        let cal = calibrate(ScoreKind::nll(), &s, alpha).unwrap();
        let covered = s.iter().filter(|&&v| v <= cal.threshold()).count() as f64;
        let n = s.len() as f64;
        prop_assert!(covered >= ((1.0 - alpha) * (n + 1.0) - 1e-9).ceil().min(n));
    }

    #[test]
    fn larger_sets_never_raise_the_robust_value(pi in policy(), masks in prop::collection::vec(1u8..8, 9), extra in prop::collection::vec(0u8..8, 9)) {
        let sc = Scenario::smart_grid();
        let to_set = |m: u8| (0..3).filter(|u| m & (1 << u) != 0).collect::<Vec<usize>>();
        let small: Vec<Vec<Vec<usize>>> = (0..3).map(|y| (0..3).map(|s| to_set(masks[3 * y + s])).collect()).collect();
        let big: Vec<Vec<Vec<usize>>> = (0..3).map(|y| (0..3).map(|s| to_set(masks[3 * y + s] | extra[3 * y + s])).collect()).collect();
        let full: Vec<Vec<Vec<usize>>> = vec![vec![vec![0, 1, 2]; 3]; 3];
        let (vs, vb, vf) = (
            robust_value_with_sets(&sc, &pi, &small),
            robust_value_with_sets(&sc, &pi, &big),
            robust_value_with_sets(&sc, &pi, &full),
        );
        prop_assert!(vb <= vs + 1e-12);
        prop_assert!(vf <= vb + 1e-12);
    }
}
