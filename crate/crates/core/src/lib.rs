//! Simulation engine and statistics for a two-phase, misconception-conditioned
//! Turing test of distractor generation.
//!
//! Phase 1 collects open-ended wrong answers from simulated students. Phase 2
//! shows each student a follow-up multiple-choice question whose distractors
//! were predicted by an AI and by a human expert from that student's Phase-1
//! mistake. The [`stats`] module decides who predicted better; [`plan`] sizes
//! the study; [`experiment`] runs whole scenarios and Monte Carlo calibrations.
//!
//! ```
//! use misconception_turing::model::{arith_question, build_space, ArithExpr};
//!
//! let space = build_space(&[("L2R", 0.5), ("AddFirst", 0.3), ("SignFlip", 0.2)], 0.1).unwrap();
//! let all: Vec<_> = space.ids().collect();
//! let q = arith_question(&space, "q1", ArithExpr::new(1, 2, 3, 4), &all).unwrap();
//! assert_eq!(q.correct_answer, 11);
//! assert_eq!(q.answer_values(), vec![11, 13, 21, 3]);
//! ```

pub mod experiment;
pub mod model;
pub mod plan;
pub mod predict;
pub mod protocol;
pub mod rng;
pub mod simulate;
pub mod stats;

use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Behavior(#[from] simulate::BehaviorError),
    #[error(transparent)]
    Predict(#[from] predict::PredictError),
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Plan(#[from] plan::PlanError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for bad input (config, parameters, files); false for failures
    /// that happen while running a valid configuration.
    pub fn is_validation(&self) -> bool {
        use model::ModelError as M;
        use protocol::ProtocolError as P;
        match self {
            Error::Model(e) => !matches!(e, M::GenerationExhausted(_)),
            Error::Behavior(_) | Error::Plan(_) | Error::Config(_) | Error::Json(_) => true,
            Error::Predict(e) => matches!(
                e,
                predict::PredictError::BadAccuracy(_)
                    | predict::PredictError::UnknownMisconception(_)
                    | predict::PredictError::MissingExternalPrediction(_)
            ),
            Error::Protocol(e) => matches!(
                e,
                P::MalformedLine { .. }
                    | P::UnknownRequest(_)
                    | P::DuplicateResponse(_)
                    | P::MissingPrediction(_)
                    | P::PredictedCorrectExternal { .. }
            ),
            Error::Stats(e) => matches!(e, stats::StatsError::BadParameter { .. }),
            Error::Csv(e) => !e.is_io_error(),
            Error::Io { .. } => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
