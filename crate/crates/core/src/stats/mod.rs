//! Selection-rate estimation, the paired difference statistic, equivalence
//! and superiority tests, victory adjudication, and Phase-2 sample sizes.

mod normal;

pub use normal::{
    binomial_upper_tail, normal_cdf, normal_pdf, normal_quantile, normal_sf, z_upper,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ChoiceOutcome, Role, TrialLedger};

/// Selection probability of a uniformly random pick among four options.
pub const P_RANDOM: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("ledger has no trials")]
    EmptyLedger,
    #[error("paired difference has zero variance")]
    DegenerateVariance,
    #[error("{name} = {value} out of range")]
    BadParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    #[serde(rename = "AI")]
    pub ai: u64,
    #[serde(rename = "Human")]
    pub human: u64,
    #[serde(rename = "Random")]
    pub random: u64,
    #[serde(rename = "Correct")]
    pub correct: u64,
    #[serde(rename = "Both")]
    pub both: u64,
}

impl OutcomeCounts {
    pub fn record(&mut self, c: ChoiceOutcome) {
        match c {
            ChoiceOutcome::Ai => self.ai += 1,
            ChoiceOutcome::Human => self.human += 1,
            ChoiceOutcome::Random => self.random += 1,
            ChoiceOutcome::Correct => self.correct += 1,
            ChoiceOutcome::Both => self.both += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.ai + self.human + self.random + self.correct + self.both
    }
}

/// Classical discordant-pair McNemar statistic, reported alongside the Wald
/// statistic on tie-free ledgers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Trials crediting only the AI.
    pub ai_only: u64,
    /// Trials crediting only the Human.
    pub human_only: u64,
    pub chi_square: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    pub n: u64,
    pub counts: OutcomeCounts,
    pub p_ai: f64,
    pub p_human: f64,
    pub p_random_sel: f64,
    pub p_correct: f64,
    /// Empirical correlation of the paired `X_AI`, `X_Human` indicators
    /// (0 when either indicator is constant).
    pub rho: f64,
    pub sigma_d_sq: f64,
    pub mcnemar: Option<McNemar>,
}

impl RateEstimates {
    pub fn from_outcomes(outcomes: &[ChoiceOutcome]) -> Result<Self, StatsError> {
        if outcomes.is_empty() {
            return Err(StatsError::EmptyLedger);
        }
        let mut counts = OutcomeCounts::default();
        outcomes.iter().for_each(|&c| counts.record(c));
        let n = outcomes.len() as f64;
        let x_ai: Vec<f64> = outcomes.iter().map(|c| c.credits_ai() as u8 as f64).collect();
        let x_human: Vec<f64> = outcomes
            .iter()
            .map(|c| c.credits_human() as u8 as f64)
            .collect();
        let p_ai = x_ai.iter().sum::<f64>() / n;
        let p_human = x_human.iter().sum::<f64>() / n;
        let rho = pearson(&x_ai, &x_human);
        let mcnemar = (counts.both == 0).then(|| {
            let (b, c) = (counts.ai, counts.human);
            McNemar {
                ai_only: b,
                human_only: c,
                chi_square: (b + c > 0).then(|| {
                    let d = b as f64 - c as f64;
                    d * d / (b + c) as f64
                }),
            }
        });
        Ok(Self {
            n: outcomes.len() as u64,
            counts,
            p_ai,
            p_human,
            p_random_sel: counts.random as f64 / n,
            p_correct: counts.correct as f64 / n,
            rho,
            sigma_d_sq: paired_variance(p_ai, p_human, rho),
            mcnemar,
        })
    }

    pub fn rate(&self, role: Role) -> f64 {
        match role {
            Role::Ai => self.p_ai,
            Role::Human => self.p_human,
        }
    }

    pub fn diff(&self) -> f64 {
        self.p_ai - self.p_human
    }

    /// `sqrt(sigma_d_sq / n)`.
    pub fn standard_error(&self) -> f64 {
        (self.sigma_d_sq / self.n as f64).sqrt()
    }
}

/// `σ²_d = pa(1−pa) + ph(1−ph) − 2ρ·sqrt(pa·ph·(1−pa)(1−ph))`, clamped at 0.
pub fn paired_variance(p_ai: f64, p_human: f64, rho: f64) -> f64 {
    let va = p_ai * (1.0 - p_ai);
    let vh = p_human * (1.0 - p_human);
    (va + vh - 2.0 * rho * (va * vh).sqrt()).max(0.0)
}

/// Pearson correlation with population moments; 0 if either series is constant.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

pub fn estimate_rates(ledger: &TrialLedger) -> Result<RateEstimates, StatsError> {
    RateEstimates::from_outcomes(&ledger.outcomes())
}

/// `(p_ai − p_human) / sqrt(σ²_d / n)`.
pub fn z_diff(est: &RateEstimates) -> Result<f64, StatsError> {
    if est.sigma_d_sq <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok(est.diff() / est.standard_error())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceResult {
    /// `(diff + margin) / se`, tests H0: diff ≤ −margin.
    pub lower_statistic: f64,
    /// `(margin − diff) / se`, tests H0: diff ≥ margin.
    pub upper_statistic: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub pass: bool,
}

/// Two one-sided tests of `|p_ai − p_human| < equiv_margin`.
pub fn equivalence_test(
    est: &RateEstimates,
    equiv_margin: f64,
    alpha: f64,
) -> Result<EquivalenceResult, StatsError> {
    if equiv_margin.is_nan() || equiv_margin <= 0.0 {
        return Err(StatsError::BadParameter {
            name: "equiv_margin",
            value: equiv_margin,
        });
    }
    if est.sigma_d_sq <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok(tost(est.diff(), est.standard_error(), equiv_margin, alpha))
}

fn tost(diff: f64, se: f64, margin: f64, alpha: f64) -> EquivalenceResult {
    let z = z_upper(alpha);
    let lower_statistic = (diff + margin) / se;
    let upper_statistic = (margin - diff) / se;
    EquivalenceResult {
        lower_statistic,
        upper_statistic,
        p_lower: normal_sf(lower_statistic),
        p_upper: normal_sf(upper_statistic),
        pass: lower_statistic > z && upper_statistic > z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperiorityResult {
    pub role: Role,
    pub estimate: f64,
    /// `P_RANDOM + sup_margin`.
    pub threshold: f64,
    /// Wald statistic; absent when the estimate is 0 or 1.
    pub statistic: Option<f64>,
    pub p_value: f64,
    /// True when the exact binomial tail was used.
    pub exact: bool,
    pub pass: bool,
}

/// One-sided test of H1: p > 1/4 + sup_margin.
///
/// Uses the Wald statistic with variance at the estimate; when the estimate
/// is 0 or 1 that variance vanishes and the exact binomial tail at the
/// threshold decides instead.
pub fn superiority_test(
    est: &RateEstimates,
    role: Role,
    sup_margin: f64,
    alpha: f64,
) -> SuperiorityResult {
    let p_hat = est.rate(role);
    let threshold = P_RANDOM + sup_margin;
    let n = est.n;
    if p_hat <= 0.0 || p_hat >= 1.0 {
        let successes = (p_hat * n as f64).round() as u64;
        let p_value = exact_upper_p_value(successes, n, threshold);
        return SuperiorityResult {
            role,
            estimate: p_hat,
            threshold,
            statistic: None,
            p_value,
            exact: true,
            pass: p_value < alpha,
        };
    }
    let statistic = (p_hat - threshold) / (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    SuperiorityResult {
        role,
        estimate: p_hat,
        threshold,
        statistic: Some(statistic),
        p_value: normal_sf(statistic),
        exact: false,
        pass: statistic > z_upper(alpha),
    }
}

/// Exact one-sided p-value `P(X ≥ successes)` under `Binomial(n, p0)`.
pub fn exact_upper_p_value(successes: u64, n: u64, p0: f64) -> f64 {
    binomial_upper_tail(successes, n, p0)
}

/// Continuity-corrected normal approximation to [`exact_upper_p_value`].
pub fn approx_upper_p_value(successes: u64, n: u64, p0: f64) -> f64 {
    let mean = n as f64 * p0;
    let sd = (n as f64 * p0 * (1.0 - p0)).sqrt();
    normal_sf((successes as f64 - 0.5 - mean) / sd)
}

/// Which statistic decides a win.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictoryRule {
    /// `Z_diff` against `±z_{1−α}`.
    #[default]
    Corollary,
    /// `(diff ∓ equiv_margin) / se` against `±z_{1−α}`.
    MarginShifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjudicationParams {
    pub equiv_margin: f64,
    pub sup_margin: f64,
    pub alpha: f64,
    #[serde(default)]
    pub victory_rule: VictoryRule,
}

impl Default for AdjudicationParams {
    fn default() -> Self {
        Self {
            equiv_margin: 0.1,
            sup_margin: 0.1,
            alpha: 0.05,
            victory_rule: VictoryRule::Corollary,
        }
    }
}

impl AdjudicationParams {
    pub fn validate(&self) -> Result<(), StatsError> {
        let checks = [
            ("equiv_margin", self.equiv_margin, self.equiv_margin > 0.0 && self.equiv_margin < 1.0),
            ("sup_margin", self.sup_margin, (0.0..1.0 - P_RANDOM).contains(&self.sup_margin)),
            ("alpha", self.alpha, self.alpha > 0.0 && self.alpha < 0.5),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(StatsError::BadParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "AIWins")]
    AiWins,
    HumanWins,
    Draw,
    Invalid,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::AiWins,
        Outcome::HumanWins,
        Outcome::Draw,
        Outcome::Invalid,
    ];

    pub fn swapped(self) -> Self {
        match self {
            Outcome::AiWins => Outcome::HumanWins,
            Outcome::HumanWins => Outcome::AiWins,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::AiWins => "AIWins",
            Outcome::HumanWins => "HumanWins",
            Outcome::Draw => "Draw",
            Outcome::Invalid => "Invalid",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub victory_rule: VictoryRule,
    /// `Z_diff`; ±∞ (serialized as null) when σ²_d = 0 but the rates differ.
    pub z_diff: f64,
    /// `(diff − equiv_margin) / se`.
    pub z_ai_beyond_margin: f64,
    /// `(diff + equiv_margin) / se`.
    pub z_human_beyond_margin: f64,
    pub critical_value: f64,
    pub equivalence: Option<EquivalenceResult>,
    pub superiority_ai: SuperiorityResult,
    pub superiority_human: SuperiorityResult,
    pub alpha: f64,
    pub equiv_margin: f64,
    pub sup_margin: f64,
}

fn ratio_or_limit(num: f64, se: f64) -> f64 {
    if se > 0.0 {
        num / se
    } else if num == 0.0 {
        0.0
    } else {
        num.signum() * f64::INFINITY
    }
}

/// Validity gate first (both roles must beat the random floor plus margin),
/// then the configured victory rule.
pub fn adjudicate(est: &RateEstimates, params: &AdjudicationParams) -> Verdict {
    let superiority_ai = superiority_test(est, Role::Ai, params.sup_margin, params.alpha);
    let superiority_human = superiority_test(est, Role::Human, params.sup_margin, params.alpha);
    let se = est.standard_error();
    let diff = est.diff();
    let z_diff = ratio_or_limit(diff, se);
    let z_ai_beyond_margin = ratio_or_limit(diff - params.equiv_margin, se);
    let z_human_beyond_margin = ratio_or_limit(diff + params.equiv_margin, se);
    let critical_value = z_upper(params.alpha);
    let equivalence = (se > 0.0).then(|| tost(diff, se, params.equiv_margin, params.alpha));

    let (up, down) = match params.victory_rule {
        VictoryRule::Corollary => (z_diff, z_diff),
        VictoryRule::MarginShifted => (z_ai_beyond_margin, z_human_beyond_margin),
    };
    let outcome = if !(superiority_ai.pass && superiority_human.pass) {
        Outcome::Invalid
    } else if up > critical_value {
        Outcome::AiWins
    } else if down < -critical_value {
        Outcome::HumanWins
    } else {
        Outcome::Draw
    };
    Verdict {
        outcome,
        victory_rule: params.victory_rule,
        z_diff,
        z_ai_beyond_margin,
        z_human_beyond_margin,
        critical_value,
        equivalence,
        superiority_ai,
        superiority_human,
        alpha: params.alpha,
        equiv_margin: params.equiv_margin,
        sup_margin: params.sup_margin,
    }
}

/// `ceil(2 · z²_{1−α/2} · σ²_d / ε²)`.
pub fn required_n_equiv(sigma_d_sq: f64, equiv_margin: f64, alpha: f64) -> u64 {
    let z = normal_quantile(1.0 - alpha / 2.0);
    (2.0 * z * z * sigma_d_sq / (equiv_margin * equiv_margin)).ceil() as u64
}

/// `ceil(z²_{1−α} · ¼ · ¾ / δ²)`.
pub fn required_n_sup(sup_margin: f64, alpha: f64) -> u64 {
    let z = z_upper(alpha);
    (z * z * P_RANDOM * (1.0 - P_RANDOM) / (sup_margin * sup_margin)).ceil() as u64
}

/// `max(n1, n2)`.
pub fn required_n(sigma_d_sq: f64, equiv_margin: f64, sup_margin: f64, alpha: f64) -> u64 {
    required_n_equiv(sigma_d_sq, equiv_margin, alpha).max(required_n_sup(sup_margin, alpha))
}
