//! Count-level planning: how many students to observe every common
//! misconception, how many questions to cover them, and the resulting
//! Phase-2 response budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{name} = {value} out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("t = {t} exceeds k = {k}")]
    TExceedsK { t: u32, k: u32 },
    #[error("response budget {n} x {q} overflows")]
    Overflow { n: u64, q: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanParams {
    /// Size of the concentrated set S_k.
    pub k: u32,
    /// Misconceptions a single question can distinguish.
    pub t: u32,
    /// Smallest probability within S_k.
    pub p_min: f64,
    /// Allowed failure probability of the planning guarantee.
    pub conf_delta: f64,
}

impl PlanParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.k < 1 {
            return Err(PlanError::OutOfRange { name: "k", value: self.k as f64 });
        }
        if self.t < 1 {
            return Err(PlanError::OutOfRange { name: "t", value: self.t as f64 });
        }
        if self.t > self.k {
            return Err(PlanError::TExceedsK { t: self.t, k: self.k });
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(PlanError::OutOfRange { name: "p_min", value: self.p_min });
        }
        if !(self.conf_delta > 0.0 && self.conf_delta < 1.0) {
            return Err(PlanError::OutOfRange { name: "conf_delta", value: self.conf_delta });
        }
        Ok(())
    }

    pub fn summary(&self) -> Result<PlanSummary, PlanError> {
        self.validate()?;
        let students = students_needed(self.k, self.conf_delta, self.p_min);
        let questions = questions_needed(self.k, self.t, self.conf_delta);
        Ok(PlanSummary {
            students_needed: students,
            questions_needed: questions,
            total_responses: total_responses(students, questions)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub students_needed: u64,
    pub questions_needed: u64,
    pub total_responses: u64,
}

/// `ceil(ln(k/δ) / p_min)`: a union bound over the k misconceptions, each
/// missed by N students with probability at most `(1 − p_min)^N ≤ e^{−N·p_min}`.
pub fn students_needed(k: u32, conf_delta: f64, p_min: f64) -> u64 {
    ((k as f64 / conf_delta).ln() / p_min).ceil() as u64
}

/// `ceil((k/t) · ln(k/δ))` questions, each testing t uniformly chosen
/// misconceptions out of k.
pub fn questions_needed(k: u32, t: u32, conf_delta: f64) -> u64 {
    (k as f64 / t as f64 * (k as f64 / conf_delta).ln()).ceil() as u64
}

/// Upper bound `N · Q` on the number of Phase-2 responses.
pub fn total_responses(n: u64, q: u64) -> Result<u64, PlanError> {
    n.checked_mul(q).ok_or(PlanError::Overflow { n, q })
}
