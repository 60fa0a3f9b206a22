//! Distractor predictors standing in for the AI under test and the human
//! expert, plus the unconditioned-targeting ceiling.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MisconceptionId, MisconceptionSpace, Question};
use crate::protocol::Phase1Record;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("answer {answer} on question {question} matches several misconceptions: {candidates:?}")]
    AmbiguousAnswer {
        question: String,
        answer: i64,
        candidates: Vec<MisconceptionId>,
    },
    #[error("no external prediction for request {0}")]
    MissingExternalPrediction(String),
    #[error("follow-up question {0} tests no misconception")]
    EmptyAnswerMap(String),
    #[error("follow-up question {question} does not test {target}")]
    UntestedTarget {
        question: String,
        target: MisconceptionId,
    },
    #[error("unknown misconception {0}")]
    UnknownMisconception(MisconceptionId),
    #[error("predictor accuracy {0} outside [0, 1]")]
    BadAccuracy(f64),
}

/// Which distractor strategy plays a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum PredictorSpec {
    /// Infers the misconception from the Phase-1 answer and applies it to the follow-up.
    ConditionedOracle,
    /// Oracle with probability `accuracy`, otherwise a different misconception.
    NoisyConditioned { accuracy: f64 },
    /// Always targets the population mode, ignoring the student.
    UnconditionedMode,
    /// Always targets one fixed misconception.
    UnconditionedFixed { target: MisconceptionId },
    /// A uniformly random wrong value of the follow-up.
    RandomWrong,
    /// Looked up in an imported prediction table.
    External,
}

impl PredictorSpec {
    pub fn validate(&self, space: &MisconceptionSpace) -> Result<(), PredictError> {
        match *self {
            PredictorSpec::NoisyConditioned { accuracy } if !(0.0..=1.0).contains(&accuracy) => {
                Err(PredictError::BadAccuracy(accuracy))
            }
            PredictorSpec::UnconditionedFixed { target } if space.get(target).is_none() => {
                Err(PredictError::UnknownMisconception(target))
            }
            _ => Ok(()),
        }
    }

    pub fn is_conditioned(&self) -> bool {
        matches!(
            self,
            PredictorSpec::ConditionedOracle | PredictorSpec::NoisyConditioned { .. }
        )
    }
}

/// Imported predictions keyed by request id.
pub type PredictionTable = BTreeMap<String, i64>;

/// Everything a predictor may look at for one Phase-1 record.
#[derive(Debug, Clone, Copy)]
pub struct PredictionInput<'a> {
    pub request_id: &'a str,
    pub record: &'a Phase1Record,
    pub question: &'a Question,
    pub followup: &'a Question,
}

/// Recovers the misconception behind a recorded wrong answer.
pub fn infer_misconception(
    record: &Phase1Record,
    q: &Question,
) -> Result<Option<MisconceptionId>, PredictError> {
    let candidates: Vec<_> = q
        .answer_map
        .iter()
        .filter(|(_, v)| **v == record.given_answer)
        .map(|(m, _)| *m)
        .collect();
    match candidates.as_slice() {
        [] => Ok(None),
        [only] => Ok(Some(*only)),
        _ => Err(PredictError::AmbiguousAnswer {
            question: q.id.clone(),
            answer: record.given_answer,
            candidates,
        }),
    }
}

/// Target an oracle aims at: the inferred misconception when the follow-up
/// tests it, else the most frequent misconception the follow-up tests.
pub fn oracle_target(
    space: &MisconceptionSpace,
    record: &Phase1Record,
    q: &Question,
    followup: &Question,
) -> Result<MisconceptionId, PredictError> {
    if followup.answer_map.is_empty() {
        return Err(PredictError::EmptyAnswerMap(followup.id.clone()));
    }
    match infer_misconception(record, q)? {
        Some(m) if followup.tests(m) => Ok(m),
        _ => Ok(space
            .mode_among(followup.tested())
            .or_else(|| followup.tested().next())
            .expect("non-empty answer map")),
    }
}

/// Produces one predicted wrong answer for the follow-up question.
pub fn predict_distractor<R: Rng + ?Sized>(
    spec: &PredictorSpec,
    space: &MisconceptionSpace,
    external: Option<&PredictionTable>,
    input: PredictionInput<'_>,
    rng: &mut R,
) -> Result<i64, PredictError> {
    let followup = input.followup;
    if followup.answer_map.is_empty() {
        return Err(PredictError::EmptyAnswerMap(followup.id.clone()));
    }
    let value_of = |m: MisconceptionId| {
        followup
            .answer_map
            .get(&m)
            .copied()
            .ok_or_else(|| PredictError::UntestedTarget {
                question: followup.id.clone(),
                target: m,
            })
    };
    match *spec {
        PredictorSpec::ConditionedOracle => {
            value_of(oracle_target(space, input.record, input.question, followup)?)
        }
        PredictorSpec::NoisyConditioned { accuracy } => {
            let target = oracle_target(space, input.record, input.question, followup)?;
            let hit: f64 = rng.gen();
            let others: Vec<_> = followup.tested().filter(|m| *m != target).collect();
            if hit < accuracy || others.is_empty() {
                value_of(target)
            } else {
                value_of(others[rng.gen_range(0..others.len())])
            }
        }
        PredictorSpec::UnconditionedMode => {
            let mode = space
                .mode_among(followup.tested())
                .or_else(|| followup.tested().next())
                .expect("non-empty answer map");
            value_of(mode)
        }
        PredictorSpec::UnconditionedFixed { target } => value_of(target),
        PredictorSpec::RandomWrong => {
            let wrong = &followup.answer_values()[1..];
            Ok(wrong[rng.gen_range(0..wrong.len())])
        }
        PredictorSpec::External => external
            .and_then(|t| t.get(input.request_id))
            .copied()
            .ok_or_else(|| PredictError::MissingExternalPrediction(input.request_id.to_string())),
    }
}

/// `(1 - mastery_rate) * P(target)`: the selection rate a noise-free
/// population gives a distractor that always targets `target`.
pub fn expected_selection_rate(
    target: MisconceptionId,
    space: &MisconceptionSpace,
) -> Result<f64, PredictError> {
    space
        .probability(target)
        .map(|p| (1.0 - space.mastery_rate()) * p)
        .ok_or(PredictError::UnknownMisconception(target))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnconditionedCeiling {
    pub max_rate: f64,
    /// Lowest-id achiever of `max_rate`.
    pub argmax: MisconceptionId,
    /// Every pure strategy attaining `max_rate`.
    pub achievers: Vec<MisconceptionId>,
}

/// Enumerates every pure targeting strategy and scores each by summing the
/// selection indicator over the whole population.
pub fn verify_unconditioned_ceiling(space: &MisconceptionSpace) -> UnconditionedCeiling {
    let holding = 1.0 - space.mastery_rate();
    let rates: Vec<(MisconceptionId, f64)> = space
        .ids()
        .map(|targeted| {
            let rate: f64 = space
                .misconceptions()
                .iter()
                .filter(|m| m.id == targeted)
                .map(|m| holding * m.probability)
                .sum();
            (targeted, rate)
        })
        .collect();
    let max_rate = rates.iter().map(|(_, r)| *r).fold(f64::NEG_INFINITY, f64::max);
    let achievers: Vec<_> = rates
        .iter()
        .filter(|(_, r)| *r == max_rate)
        .map(|(m, _)| *m)
        .collect();
    UnconditionedCeiling {
        max_rate,
        argmax: achievers[0],
        achievers,
    }
}
