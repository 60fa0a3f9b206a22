use std::collections::BTreeMap;

use proptest::prelude::*;

use misconception_turing::model::{
    arith_question, build_space, concentrate, sample_student, ArithExpr, MisconceptionSpace, StudentId,
};
use misconception_turing::plan::{questions_needed, students_needed};
use misconception_turing::protocol::{assemble_mcq, ChoiceOutcome};
use misconception_turing::rng::stream;
use misconception_turing::simulate::BehaviorParams;
use misconception_turing::stats::{
    adjudicate, approx_upper_p_value, equivalence_test, exact_upper_p_value, normal_cdf,
    normal_quantile, AdjudicationParams, Outcome, RateEstimates, VictoryRule,
};

fn space_from(weights: &[f64], mastery: f64) -> MisconceptionSpace {
    let total: f64 = weights.iter().sum();
    let entries: Vec<(String, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (format!("m{}", i + 1), w / total))
        .collect();
    build_space(&entries, mastery).unwrap()
}

fn ledger(ai: usize, human: usize, random: usize, correct: usize, both: usize) -> Vec<ChoiceOutcome> {
    let mut v = Vec::new();
    for (c, k) in [
        (ChoiceOutcome::Ai, ai),
        (ChoiceOutcome::Human, human),
        (ChoiceOutcome::Random, random),
        (ChoiceOutcome::Correct, correct),
        (ChoiceOutcome::Both, both),
    ] {
        v.extend(std::iter::repeat_n(c, k));
    }
    v
}

proptest! {
    #[test]
    fn concentrate_is_minimal_and_sufficient(
        weights in prop::collection::vec(1u32..100, 1..=12),
        eps in 0.0f64..0.99,
    ) {
        let w: Vec<f64> = weights.iter().map(|&x| x as f64).collect();
        let space = space_from(&w, 0.0);
        let chosen = concentrate(&space, eps);
        let mass: f64 = chosen.iter().map(|&m| space.probability(m).unwrap()).sum();
        prop_assert!(mass >= 1.0 - eps - 1e-9);

        // No smaller subset of any kind reaches the mass budget.
        let probs: Vec<f64> = space.misconceptions().iter().map(|m| m.probability).collect();
        let n = probs.len();
        for mask in 0u32..(1 << n) {
            if (mask.count_ones() as usize) < chosen.len() {
                let m: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| probs[i]).sum();
                prop_assert!(m < 1.0 - eps - 1e-12, "subset {mask:b} of mass {m} beats {}", chosen.len());
            }
        }
    }

    #[test]
    fn concentrate_is_monotone(
        weights in prop::collection::vec(1u32..100, 1..=12),
        a in 0.0f64..0.99,
        b in 0.0f64..0.99,
    ) {
        let w: Vec<f64> = weights.iter().map(|&x| x as f64).collect();
        let space = space_from(&w, 0.0);
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        let wide = concentrate(&space, small);
        let narrow = concentrate(&space, large);
        prop_assert!(narrow.len() <= wide.len());
        prop_assert_eq!(&wide[..narrow.len()], &narrow[..]);
    }

    #[test]
    fn adjudicate_is_antisymmetric(
        ai in 0usize..300, human in 0usize..300, random in 0usize..200,
        correct in 0usize..200, both in 0usize..100,
        sup in 0.0f64..0.2, margin_shifted in any::<bool>(),
    ) {
        prop_assume!(ai + human + random + correct + both > 0);
        let params = AdjudicationParams {
            equiv_margin: 0.1,
            sup_margin: sup,
            alpha: 0.05,
            victory_rule: if margin_shifted { VictoryRule::MarginShifted } else { VictoryRule::Corollary },
        };
        let fwd = RateEstimates::from_outcomes(&ledger(ai, human, random, correct, both)).unwrap();
        let rev = RateEstimates::from_outcomes(&ledger(human, ai, random, correct, both)).unwrap();
        let v = adjudicate(&fwd, &params);
        let w = adjudicate(&rev, &params);
        prop_assert_eq!(v.outcome.swapped(), w.outcome);
        if v.z_diff.is_finite() {
            prop_assert!((v.z_diff + w.z_diff).abs() < 1e-9);
        } else {
            prop_assert_eq!(v.z_diff, -w.z_diff);
        }
    }

    #[test]
    fn equivalence_is_monotone_in_margin(
        ai in 1usize..300, human in 1usize..300, rest in 1usize..300,
        m1 in 0.01f64..0.5, m2 in 0.01f64..0.5,
    ) {
        let est = RateEstimates::from_outcomes(&ledger(ai, human, rest, rest, 0)).unwrap();
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let narrow = equivalence_test(&est, lo, 0.05).unwrap();
        let wide = equivalence_test(&est, hi, 0.05).unwrap();
        prop_assert!(!narrow.pass || wide.pass);
    }

    #[test]
    fn variance_identity_without_ties(ai in 0usize..500, human in 0usize..500, other in 1usize..500) {
        let e = RateEstimates::from_outcomes(&ledger(ai, human, other, 0, 0)).unwrap();
        let identity = e.p_ai + e.p_human - (e.p_ai - e.p_human).powi(2);
        prop_assert!((e.sigma_d_sq - identity).abs() < 1e-9);
    }

    #[test]
    fn students_needed_monotone(
        k in 1u32..50, dk in 0u32..20,
        d1 in 0.001f64..0.999, d2 in 0.001f64..0.999,
        p1 in 0.001f64..=1.0, p2 in 0.001f64..=1.0,
    ) {
        let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (plo, phi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(students_needed(k, dhi, plo) <= students_needed(k, dlo, plo));
        prop_assert!(students_needed(k, dlo, phi) <= students_needed(k, dlo, plo));
        prop_assert!(students_needed(k, dlo, plo) <= students_needed(k + dk, dlo, plo));
    }

    #[test]
    fn questions_needed_monotone(
        k in 1u32..50, dk in 0u32..20, t1 in 1u32..50, t2 in 1u32..50,
        d1 in 0.001f64..0.999, d2 in 0.001f64..0.999,
    ) {
        let (tlo, thi) = (t1.min(t2).min(k), t1.max(t2).min(k));
        let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(questions_needed(k, thi, dlo) <= questions_needed(k, tlo, dlo));
        prop_assert!(questions_needed(k, tlo, dhi) <= questions_needed(k, tlo, dlo));
        prop_assert!(questions_needed(k, tlo, dlo) <= questions_needed(k + dk, tlo, dlo));
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-12f64..0.999_999) {
        let x = normal_quantile(p);
        prop_assert!((normal_cdf(x) - p).abs() <= 1e-15 + 1e-9 * p.min(1.0 - p));
    }

    #[test]
    fn quantile_is_odd(p in 1e-6f64..0.5) {
        prop_assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-9);
    }

    /// For n ≥ 200 and p̂ in [0.2, 0.8], the exact tail used at p̂ ∈ {0, 1}
    /// agrees with its continuity-corrected normal approximation.
    #[test]
    fn exact_tail_matches_normal_approximation(
        n in 200u64..2000, frac in 0.2f64..0.8, p0 in 0.25f64..0.45,
    ) {
        let k = (frac * n as f64).round() as u64;
        let exact = exact_upper_p_value(k, n, p0);
        let approx = approx_upper_p_value(k, n, p0);
        prop_assert!((exact - approx).abs() < 0.01, "n={n} k={k} p0={p0}: {exact} vs {approx}");
    }
}

#[test]
fn display_orders_are_uniform() {
    let s = build_space(&[("L2R", 0.5), ("AddFirst", 0.3), ("SignFlip", 0.2)], 0.0).unwrap();
    let all: Vec<_> = s.ids().collect();
    let q = arith_question(&s, "q", ArithExpr::new(3, 4, 3, 7), &all).unwrap();
    let draws = 100_000;
    let mut seen: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
    let mut rng = stream(99, &[]);
    for _ in 0..draws {
        let mcq = assemble_mcq(&q, 28, 70, &mut rng).unwrap();
        *seen.entry(mcq.display_order).or_default() += 1;
    }
    assert_eq!(seen.len(), 24);
    for (order, count) in seen {
        let freq = count as f64 / draws as f64;
        assert!((freq - 1.0 / 24.0).abs() < 0.005, "{order:?}: {freq}");
    }
}

#[test]
fn sampled_students_follow_the_space() {
    // Pearson chi-square against mastery + conditional probabilities.
    let s = build_space(&[("L2R", 0.5), ("AddFirst", 0.3), ("SignFlip", 0.2)], 0.25).unwrap();
    let draws = 100_000;
    let mut counts = [0u32; 4];
    let mut rng = stream(3, &[]);
    for j in 0..draws {
        let st = sample_student(&s, StudentId(j), BehaviorParams::default(), &mut rng);
        counts[st.held.map_or(0, |m| m.0 as usize)] += 1;
    }
    let expected = [0.25, 0.75 * 0.5, 0.75 * 0.3, 0.75 * 0.2];
    let chi2: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&c, p)| {
            let e = p * draws as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 0.999 quantile of chi-square with 3 degrees of freedom.
    assert!(chi2 < 16.266, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn one_sided_perfect_ledgers_are_invalid() {
    // p_human = 0 can never clear the floor, however good the AI looks.
    for n in 1..60 {
        let est = RateEstimates::from_outcomes(&ledger(n, 0, 0, 0, 0)).unwrap();
        let v = adjudicate(&est, &AdjudicationParams::default());
        assert_eq!(v.outcome, Outcome::Invalid);
        assert!(v.superiority_ai.exact && v.superiority_human.exact);
    }
}
