use interleave::format::validate;
use interleave::grpo::compute_advantages;
use interleave::reward::{lq_rewards, segment_score, ta_reward, total_reward, LqConfig, LqInput, RewardWeights, TaConfig};
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            Just("<|thinking|>".to_string()),
            Just("<|answer|>".to_string()),
            "[a-z ]{0,12}",
            (1usize..60).prop_map(|n| vec!["w"; n].join(" ")),
        ],
        0..10,
    )
    .prop_map(|v| v.concat())
}

fn seq_with_lengths(lengths: &[usize]) -> String {
    lengths.iter().map(|&l| format!("<|thinking|>{}<|answer|>ok", vec!["w"; l].join(" "))).collect()
}

proptest! {
    #[test]
    fn malformed_scores_zero(s in stream(), l in 1usize..80) {
        let r = ta_reward(&s, &TaConfig { l_target: l });
        prop_assert!((0.0..=1.0).contains(&r));
        if !validate(&s).is_valid() {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn symmetric_about_target(l in 1usize..400, frac in 0.0f64..=1.0) {
        let d = ((l / 2) as f64 * frac) as usize;
        prop_assert_eq!(segment_score(l + d, l), segment_score(l - d, l));
    }

    #[test]
    fn one_only_at_target(lengths in prop::collection::vec(1usize..100, 1..6), l in 1usize..100) {
        let r = ta_reward(&seq_with_lengths(&lengths), &TaConfig { l_target: l });
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert_eq!(r == 1.0, lengths.iter().all(|&x| x == l));
    }

    #[test]
    fn lq_gate_and_bound(
        group in prop::collection::vec((-8.0f64..0.0, any::<bool>()), 2..40),
        beta in 0.01f64..5.0,
    ) {
        let inputs: Vec<LqInput> =
            group.iter().map(|&(l, c)| LqInput { normalized_loglik: l, correct: c }).collect();
        let r = lq_rewards(&inputs, &LqConfig { beta }).unwrap();
        let mean = group.iter().map(|g| g.0).sum::<f64>() / group.len() as f64;
        let positive_dev: f64 = group.iter().map(|g| (g.0 - mean).max(0.0)).sum();
        for (x, (_, correct)) in r.iter().zip(&group) {
            prop_assert!(*x >= 0.0);
            if !correct {
                prop_assert_eq!(*x, 0.0);
            }
        }
        let total: f64 = r.iter().sum();
        prop_assert!(total <= beta * positive_dev + 1e-9);
        let deviants_correct = group.iter().all(|&(l, c)| c || l <= mean);
        if deviants_correct {
            prop_assert!((total - beta * positive_dev).abs() <= 1e-9);
        }
    }

    #[test]
    fn total_is_linear_in_weights(
        c in (0.0f64..=1.0, prop::sample::select(vec![0.0, 1.0]), 0.0f64..3.0),
        w in (0.0f64..4.0, 0.0f64..4.0, 0.0f64..4.0),
        k in 0.0f64..4.0,
    ) {
        let base = RewardWeights { w_ta: w.0, w_acc: w.1, w_lq: w.2 };
        let scaled = RewardWeights { w_ta: w.0 + k, ..base };
        let a = total_reward(c.0, c.1, c.2, &base).r_total;
        let b = total_reward(c.0, c.1, c.2, &scaled).r_total;
        prop_assert!((b - a - k * c.0).abs() <= 1e-9);
        let b = total_reward(c.0, c.1, c.2, &base);
        prop_assert_eq!(b.r_total, w.0 * c.0 + w.1 * c.1 + w.2 * c.2);
    }

    #[test]
    fn advantages_are_standardized(rewards in prop::collection::vec(0.0f64..1.0, 2..64)) {
        let spread = rewards.iter().cloned().fold(f64::MIN, f64::max) - rewards.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-3);
        let adv = compute_advantages(&rewards, 1e-8).unwrap().values;
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-4);
    }
}

#[test]
fn landscape_peaks_at_target() {
    for l in [2usize, 7, 20, 40, 63] {
        let scores: Vec<f64> = (1..=2 * l)
            .map(|len| ta_reward(&seq_with_lengths(&[len, len, len]), &TaConfig { l_target: l }))
            .collect();
        let peak = l - 1;
        assert_eq!(scores[peak], 1.0);
        for i in 0..peak {
            assert!(scores[i] <= scores[i + 1]);
            assert!(scores[i] < 1.0);
        }
        for i in peak..scores.len() - 1 {
            assert!(scores[i] >= scores[i + 1]);
        }
    }
}

#[test]
fn constant_rewards_give_zero_advantage() {
    assert_eq!(compute_advantages(&[0.3; 5], 1e-8).unwrap().values, vec![0.0; 5]);
}
