//! Monte Carlo checks of the planning bounds and of the test's error rates.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use super::{fingerprint, with_threads, EngineInfo, Resolved, ENGINE};
use crate::model::{gen_arith_question, sample_student, MisconceptionId, MisconceptionSpace, StudentId};
use crate::predict::PredictorSpec;
use crate::protocol::{run_phase2, Phase1Record, Phase2Setup};
use crate::rng::{derive_seed, stream, tag};
use crate::simulate::{answer_open, BehaviorParams};
use crate::stats::{adjudicate, estimate_rates, normal_quantile, AdjudicationParams, Outcome, RateEstimates, VictoryRule};
use crate::{Error, Result};

/// Give up when a population yields fewer than one wrong answer per this
/// many sampled students.
const MAX_DRAWS_PER_TRIAL: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    /// Wilson score 95% interval.
    pub low: f64,
    pub high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let (low, high) = wilson_interval(successes, trials, normal_quantile(0.975));
        Self {
            successes,
            trials,
            rate: successes as f64 / trials as f64,
            low,
            high,
        }
    }
}

/// Wilson score interval for a binomial proportion at critical value `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingCalibration {
    pub engine: EngineInfo,
    pub seed: u64,
    pub config_fingerprint: String,
    pub k: u32,
    pub t: u32,
    pub p_min: f64,
    pub conf_delta: f64,
    pub students_needed: u64,
    pub questions_needed: u64,
    pub top_k: Vec<MisconceptionId>,
    /// Smallest per-student probability of holding a member of the top k,
    /// mastery included.
    pub min_observation_probability: f64,
    /// The student bound is only guaranteed when this probability is at least `p_min`.
    pub bound_applies: bool,
    pub target: f64,
    /// Share of replications in which every top-k misconception was held by some student.
    pub observation: Proportion,
    /// Share of replications in which the random t-subsets covered all k.
    pub coverage: Proportion,
}

/// Draws `students_needed` students and `questions_needed` random t-subsets
/// per replication and counts how often each covers the whole top k.
pub fn calibrate_sampling(r: &Resolved, threads: usize) -> Result<SamplingCalibration> {
    let (plan_params, plan) = r
        .config
        .plan
        .zip(r.plan)
        .ok_or_else(|| Error::Config("calibrate-sampling needs a plan section".into()))?;
    let k = plan_params.k as usize;
    let t = plan_params.t as usize;
    let top_k = r.space.top_k(k);
    let reps = r.config.calibration.sampling_replications;
    let seed = r.config.seed;
    let behavior = r.config.behavior;

    let outcomes: Vec<(bool, bool)> = with_threads(threads, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, &[tag::STUDENTS, rep]);
                let mut seen = vec![false; r.space.len() + 1];
                for j in 0..plan.students_needed {
                    let s = sample_student(&r.space, StudentId(j as u32 + 1), behavior, &mut rng);
                    if let Some(m) = s.held {
                        seen[m.0 as usize] = true;
                    }
                }
                let observed = top_k.iter().all(|m| seen[m.0 as usize]);

                let mut rng = stream(seed, &[tag::COVERAGE, rep]);
                let mut covered = vec![false; k];
                for _ in 0..plan.questions_needed {
                    for i in index::sample(&mut rng, k, t) {
                        covered[i] = true;
                    }
                }
                (observed, covered.iter().all(|&c| c))
            })
            .collect()
    })?;

    let min_observation_probability = min_observation_probability(&r.space, &top_k);
    Ok(SamplingCalibration {
        engine: ENGINE,
        seed,
        config_fingerprint: fingerprint(&r.config),
        k: plan_params.k,
        t: plan_params.t,
        p_min: plan_params.p_min,
        conf_delta: plan_params.conf_delta,
        students_needed: plan.students_needed,
        questions_needed: plan.questions_needed,
        bound_applies: min_observation_probability >= plan_params.p_min,
        min_observation_probability,
        top_k,
        target: 1.0 - plan_params.conf_delta,
        observation: Proportion::new(outcomes.iter().filter(|o| o.0).count() as u64, reps),
        coverage: Proportion::new(outcomes.iter().filter(|o| o.1).count() as u64, reps),
    })
}

fn min_observation_probability(space: &MisconceptionSpace, ids: &[MisconceptionId]) -> f64 {
    ids.iter()
        .map(|&m| space.probability(m).expect("id from space") * (1.0 - space.mastery_rate()))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettingSummary {
    pub name: &'static str,
    pub ai_accuracy: f64,
    pub human_accuracy: f64,
    pub replications: u64,
    pub verdict_frequencies: BTreeMap<String, u64>,
    pub ai_wins: Proportion,
    pub human_wins: Proportion,
    pub mean_p_ai: f64,
    pub mean_p_human: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestCalibration {
    pub engine: EngineInfo,
    pub seed: u64,
    pub config_fingerprint: String,
    pub trials_per_replication: u64,
    pub alpha: f64,
    pub victory_rule: VictoryRule,
    /// `null`, `alternative`, then `swapped` (the alternative with roles exchanged).
    pub settings: Vec<SettingSummary>,
}

impl TestCalibration {
    pub fn setting(&self, name: &str) -> Option<&SettingSummary> {
        self.settings.iter().find(|s| s.name == name)
    }
}

/// Simulates one ledger of exactly `n` trials: students are sampled one at a
/// time, each answering one fresh question, until `n` wrong answers exist.
pub fn simulate_test_replication(
    space: &MisconceptionSpace,
    behavior: BehaviorParams,
    ai: &PredictorSpec,
    human: &PredictorSpec,
    n: u64,
    seed: u64,
) -> Result<RateEstimates> {
    let mut students = Vec::new();
    let mut questions = Vec::new();
    let mut records = Vec::new();
    let mut j = 0u64;
    while (records.len() as u64) < n {
        if j >= n.saturating_mul(MAX_DRAWS_PER_TRIAL) {
            return Err(Error::Config(format!(
                "population produced only {} wrong answers in {j} students",
                records.len()
            )));
        }
        let student = sample_student(space, StudentId(j as u32 + 1), behavior, &mut stream(seed, &[tag::STUDENTS, j]));
        let q = gen_arith_question(space, format!("q{:06}", j + 1), &mut stream(seed, &[tag::QUESTIONS, j]))?;
        let given = answer_open(&student, &q, &mut stream(seed, &[tag::PHASE1, j]));
        if given != q.correct_answer {
            records.push(Phase1Record {
                student_id: student.id,
                question_id: q.id.clone(),
                given_answer: given,
            });
            students.push(student);
            questions.push(q);
        }
        j += 1;
    }
    let setup = Phase2Setup {
        space,
        students: &students,
        questions: &questions,
        ai,
        human,
        external_ai: None,
        external_human: None,
        replication: 0,
    };
    let ledger = run_phase2(&setup, &records, seed)?;
    Ok(estimate_rates(&ledger)?)
}

fn run_setting(
    r: &Resolved,
    name: &'static str,
    path: &[u64],
    ai_accuracy: f64,
    human_accuracy: f64,
    params: &AdjudicationParams,
) -> Result<SettingSummary> {
    let cal = &r.config.calibration;
    let ai = PredictorSpec::NoisyConditioned { accuracy: ai_accuracy };
    let human = PredictorSpec::NoisyConditioned { accuracy: human_accuracy };
    let results: Vec<(Outcome, f64, f64)> = (0..cal.test_replications)
        .into_par_iter()
        .map(|rep| {
            let mut full = path.to_vec();
            full.push(rep);
            let seed = derive_seed(r.config.seed, &full);
            let est = simulate_test_replication(
                &r.space,
                r.config.behavior,
                &ai,
                &human,
                cal.trials_per_replication,
                seed,
            )?;
            Ok((adjudicate(&est, params).outcome, est.p_ai, est.p_human))
        })
        .collect::<Result<_>>()?;

    let mut freq: BTreeMap<String, u64> =
        Outcome::ALL.iter().map(|o| (o.as_str().to_string(), 0)).collect();
    for (o, _, _) in &results {
        *freq.get_mut(o.as_str()).expect("all outcomes present") += 1;
    }
    let reps = cal.test_replications;
    let mean = |f: fn(&(Outcome, f64, f64)) -> f64| results.iter().map(f).sum::<f64>() / reps as f64;
    Ok(SettingSummary {
        name,
        ai_accuracy,
        human_accuracy,
        replications: reps,
        ai_wins: Proportion::new(freq[Outcome::AiWins.as_str()], reps),
        human_wins: Proportion::new(freq[Outcome::HumanWins.as_str()], reps),
        verdict_frequencies: freq,
        mean_p_ai: mean(|x| x.1),
        mean_p_human: mean(|x| x.2),
    })
}

/// False-win rate under equal accuracies, and power under unequal ones (in
/// both role assignments).
pub fn calibrate_test(r: &Resolved, threads: usize) -> Result<TestCalibration> {
    let cal = r.config.calibration;
    let params = r.config.test.adjudication();
    let settings = with_threads(threads, || {
        [
            ("null", vec![tag::NULL], cal.null_accuracy, cal.null_accuracy),
            ("alternative", vec![tag::ALTERNATIVE, 0], cal.alt_ai_accuracy, cal.alt_human_accuracy),
            ("swapped", vec![tag::ALTERNATIVE, 1], cal.alt_human_accuracy, cal.alt_ai_accuracy),
        ]
        .into_iter()
        .map(|(name, path, a, h)| run_setting(r, name, &path, a, h, &params))
        .collect::<Result<Vec<_>>>()
    })??;
    Ok(TestCalibration {
        engine: ENGINE,
        seed: r.config.seed,
        config_fingerprint: fingerprint(&r.config),
        trials_per_replication: cal.trials_per_replication,
        alpha: params.alpha,
        victory_rule: params.victory_rule,
        settings,
    })
}
