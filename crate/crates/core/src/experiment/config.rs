//! Strict JSON experiment configuration and its resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{MisconceptionSpace, SpaceDef};
use crate::plan::{PlanParams, PlanSummary};
use crate::predict::PredictorSpec;
use crate::simulate::BehaviorParams;
use crate::stats::{AdjudicationParams, VictoryRule};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceSource,
    #[serde(default)]
    pub behavior: BehaviorParams,
    #[serde(default = "default_predictor")]
    pub ai: PredictorSpec,
    #[serde(default = "default_predictor")]
    pub human: PredictorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanParams>,
    #[serde(default)]
    pub test: TestParams,
    pub counts: Counts,
    /// When set, the report lists the concentrated set for this mass budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_conc: Option<f64>,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: u64,
    #[serde(default)]
    pub calibration: CalibrationParams,
}

fn default_predictor() -> PredictorSpec {
    PredictorSpec::NoisyConditioned { accuracy: 0.9 }
}

fn one() -> u64 {
    1
}

/// A space written inline or loaded from a JSON file (relative paths are
/// resolved against the config's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSource {
    File(SpaceFile),
    Inline(SpaceDef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub file: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestParams {
    pub equiv_margin: f64,
    pub sup_margin: f64,
    pub alpha: f64,
    #[serde(default)]
    pub victory_rule: VictoryRule,
    /// σ²_d assumed when sizing the equivalence test.
    #[serde(default = "default_planning_variance")]
    pub planning_sigma_d_sq: f64,
}

fn default_planning_variance() -> f64 {
    0.6
}

impl Default for TestParams {
    fn default() -> Self {
        let a = AdjudicationParams::default();
        Self {
            equiv_margin: a.equiv_margin,
            sup_margin: a.sup_margin,
            alpha: a.alpha,
            victory_rule: a.victory_rule,
            planning_sigma_d_sq: default_planning_variance(),
        }
    }
}

impl TestParams {
    pub fn adjudication(&self) -> AdjudicationParams {
        AdjudicationParams {
            equiv_margin: self.equiv_margin,
            sup_margin: self.sup_margin,
            alpha: self.alpha,
            victory_rule: self.victory_rule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub students: Count,
    /// Questions every student answers in Phase 1.
    pub questions: Count,
}

/// A fixed count, or `"auto"` to take it from the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Fixed(u64),
    Auto(Auto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationParams {
    pub sampling_replications: u64,
    pub test_replications: u64,
    pub trials_per_replication: u64,
    /// Shared accuracy of both predictors under the null.
    pub null_accuracy: f64,
    pub alt_ai_accuracy: f64,
    pub alt_human_accuracy: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            sampling_replications: 2000,
            test_replications: 5000,
            trials_per_replication: 400,
            null_accuracy: 0.9,
            alt_ai_accuracy: 1.0,
            alt_human_accuracy: 0.5,
        }
    }
}

/// A validated config with the space loaded and `"auto"` counts filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    /// Self-contained: inline space, fixed counts. Embedded in reports.
    pub config: ExperimentConfig,
    pub space: MisconceptionSpace,
    pub students: u64,
    pub questions: u64,
    pub plan: Option<PlanSummary>,
}

/// Reads a user-supplied file; failure counts as invalid input.
pub fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_input(path)?)
    }

    /// Validates every parameter, loads a file-backed space relative to
    /// `base_dir`, and resolves `"auto"` counts from the plan.
    pub fn resolve(&self, base_dir: &Path) -> Result<Resolved> {
        let def = match &self.space {
            SpaceSource::Inline(def) => def.clone(),
            SpaceSource::File(SpaceFile { file }) => {
                let path = base_dir.join(file);
                serde_json::from_str(&read_input(&path)?)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?
            }
        };
        let space = MisconceptionSpace::try_from(def)?;

        self.behavior.validate()?;
        self.ai.validate(&space)?;
        self.human.validate(&space)?;
        self.test.adjudication().validate()?;
        if !(0.0..=1.0).contains(&self.test.planning_sigma_d_sq) {
            return Err(invalid(format!(
                "test.planning_sigma_d_sq = {} outside [0, 1]",
                self.test.planning_sigma_d_sq
            )));
        }
        if let Some(eps) = self.eps_conc {
            if !(0.0..1.0).contains(&eps) {
                return Err(invalid(format!("eps_conc = {eps} outside [0, 1)")));
            }
        }
        if self.replications < 1 {
            return Err(invalid("replications must be at least 1"));
        }
        self.calibration.validate()?;

        let plan = self.plan.map(|p| p.summary()).transpose()?;
        if let Some(p) = &self.plan {
            if p.k as usize > space.len() {
                return Err(invalid(format!(
                    "plan.k = {} exceeds the {} misconceptions in the space",
                    p.k,
                    space.len()
                )));
            }
        }
        let fill = |count: Count, name: &str, auto: fn(&PlanSummary) -> u64| match count {
            Count::Fixed(0) => Err(invalid(format!("counts.{name} must be at least 1"))),
            Count::Fixed(n) => Ok(n),
            Count::Auto(_) => plan
                .as_ref()
                .map(auto)
                .ok_or_else(|| invalid(format!("counts.{name} = \"auto\" needs a plan section"))),
        };
        let students = fill(self.counts.students, "students", |p| p.students_needed)?;
        let questions = fill(self.counts.questions, "questions", |p| p.questions_needed)?;

        let config = ExperimentConfig {
            space: SpaceSource::Inline(space.clone().into()),
            counts: Counts {
                students: Count::Fixed(students),
                questions: Count::Fixed(questions),
            },
            ..self.clone()
        };
        Ok(Resolved {
            config,
            space,
            students,
            questions,
            plan,
        })
    }
}

impl CalibrationParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sampling_replications", self.sampling_replications),
            ("test_replications", self.test_replications),
            ("trials_per_replication", self.trials_per_replication),
        ] {
            if v < 1 {
                return Err(invalid(format!("calibration.{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("null_accuracy", self.null_accuracy),
            ("alt_ai_accuracy", self.alt_ai_accuracy),
            ("alt_human_accuracy", self.alt_human_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("calibration.{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}
