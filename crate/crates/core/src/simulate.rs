//! Simulated student behaviour for both phases.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Question, StudentProfile};
use crate::protocol::{ChoiceOutcome, Mcq};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("{name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

/// Noise on top of deterministic misconception expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorParams {
    /// Probability of answering uniformly at random.
    pub slip: f64,
    /// Probability the Phase-1 misconception still governs the Phase-2 choice.
    pub persistence: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            slip: 0.05,
            persistence: 0.9,
        }
    }
}

impl BehaviorParams {
    pub fn new(slip: f64, persistence: f64) -> Result<Self, BehaviorError> {
        let p = Self { slip, persistence };
        p.validate()?;
        Ok(p)
    }

    /// Noise-free: the held misconception always drives the answer.
    pub fn deterministic() -> Self {
        Self {
            slip: 0.0,
            persistence: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), BehaviorError> {
        for (name, value) in [("slip", self.slip), ("persistence", self.persistence)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(BehaviorError::OutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// Open-ended answer `A(s, q)`.
pub fn answer_open<R: Rng + ?Sized>(student: &StudentProfile, q: &Question, rng: &mut R) -> i64 {
    let draw: f64 = rng.gen();
    if draw < student.behavior.slip {
        let values = q.answer_values();
        return values[rng.gen_range(0..values.len())];
    }
    student
        .held
        .and_then(|m| q.answer_map.get(&m).copied())
        .unwrap_or(q.correct_answer)
}

/// Multiple-choice selection on a follow-up question.
///
/// The student recomputes their misconception on `q_prime` and picks the
/// option with that content; if no option carries it they pick the correct
/// answer. Selection is by content, so display order only matters for slips.
pub fn choose_mcq<R: Rng + ?Sized>(
    student: &StudentProfile,
    trial: &Mcq,
    q_prime: &Question,
    rng: &mut R,
) -> ChoiceOutcome {
    let slip_draw: f64 = rng.gen();
    if slip_draw < student.behavior.slip {
        let position = rng.gen_range(0..trial.display_order.len());
        return trial.options[trial.display_order[position]].provenance;
    }
    let persist_draw: f64 = rng.gen();
    if persist_draw < student.behavior.persistence {
        if let Some(value) = student_value(student, q_prime) {
            if let Some(opt) = trial.options.iter().find(|o| o.content == value) {
                return opt.provenance;
            }
        }
    }
    ChoiceOutcome::Correct
}

/// The wrong answer the student's misconception produces on `q`, if `q` tests it.
pub fn student_value(student: &StudentProfile, q: &Question) -> Option<i64> {
    student.held.and_then(|m| q.answer_map.get(&m).copied())
}
