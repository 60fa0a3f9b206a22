//! Misconception spaces, questions, students, and the built-in arithmetic
//! domain (`a + b*c + d` with three faulty evaluation rules).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::simulate::BehaviorParams;

/// Raw probabilities may be off by this much before normalisation; more is an error.
pub const NORMALIZE_TOLERANCE: f64 = 1e-6;
/// Inclusive coefficient range for generated arithmetic questions.
pub const COEFF_RANGE: std::ops::RangeInclusive<i64> = 1..=9;
pub const MAX_GENERATION_ATTEMPTS: usize = 100;
pub const DEFAULT_TOPIC: &str = "order of operations";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("misconception space has no entries")]
    EmptySpace,
    #[error("bad misconception probability: {0}")]
    BadProbability(String),
    #[error("mastery rate {0} outside [0, 1)")]
    BadMasteryRate(f64),
    #[error("duplicate misconception label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown misconception {0}")]
    UnknownMisconception(MisconceptionId),
    #[error("misconception {0} has no built-in answer rule")]
    UnsupportedRule(MisconceptionId),
    #[error("no question with pairwise-distinct answers after {0} attempts")]
    GenerationExhausted(usize),
    #[error("question {id}: {reason}")]
    InvalidQuestion { id: String, reason: String },
}

/// One-based misconception identifier, rendered `m1`, `m2`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MisconceptionId(pub u32);

impl fmt::Display for MisconceptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

impl FromStr for MisconceptionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('m')
            .and_then(|n| n.parse().ok())
            .map(MisconceptionId)
            .ok_or_else(|| format!("expected misconception id like `m1`, got `{s}`"))
    }
}

impl Serialize for MisconceptionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MisconceptionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Student identifier, rendered `s0001`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StudentId(pub u32);

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{:04}", self.0)
    }
}

impl FromStr for StudentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('s')
            .and_then(|n| n.parse().ok())
            .map(StudentId)
            .ok_or_else(|| format!("expected student id like `s0001`, got `{s}`"))
    }
}

impl Serialize for StudentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StudentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Faulty evaluation rules for `a + b*c + d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// Evaluate strictly left to right: `((a + b) * c) + d`.
    L2R,
    /// Perform both additions before the multiplication: `(a + b) * (c + d)`.
    AddFirst,
    /// Subtract the trailing term: `a + b*c - d`.
    SignFlip,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::L2R, Rule::AddFirst, Rule::SignFlip];

    pub fn apply(self, e: &ArithExpr) -> i64 {
        match self {
            Rule::L2R => (e.a + e.b) * e.c + e.d,
            Rule::AddFirst => (e.a + e.b) * (e.c + e.d),
            Rule::SignFlip => e.a + e.b * e.c - e.d,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::L2R => "L2R",
            Rule::AddFirst => "AddFirst",
            Rule::SignFlip => "SignFlip",
        }
    }
}

impl FromStr for Rule {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL.into_iter().find(|r| r.name() == s).ok_or(())
    }
}

/// Payload of the toy domain: the expression `a + b*c + d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArithExpr {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl ArithExpr {
    pub const fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        Self { a, b, c, d }
    }

    /// Standard precedence.
    pub fn correct(&self) -> i64 {
        self.a + self.b * self.c + self.d
    }

    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            a: rng.gen_range(COEFF_RANGE),
            b: rng.gen_range(COEFF_RANGE),
            c: rng.gen_range(COEFF_RANGE),
            d: rng.gen_range(COEFF_RANGE),
        }
    }
}

impl fmt::Display for ArithExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {} * {} + {}", self.a, self.b, self.c, self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Misconception {
    pub id: MisconceptionId,
    pub label: String,
    /// Frequency among students who hold some misconception.
    pub probability: f64,
    pub rule: Option<Rule>,
}

/// A topic's misconceptions with their conditional population frequencies.
///
/// Probabilities sum to one; `mastery_rate` is the share of students that
/// hold no misconception at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDef", into = "SpaceDef")]
pub struct MisconceptionSpace {
    topic: String,
    misconceptions: Vec<Misconception>,
    mastery_rate: f64,
}

/// Serialized form of a space: ids are implied by list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDef {
    #[serde(default = "default_topic")]
    pub topic: String,
    pub mastery_rate: f64,
    pub misconceptions: Vec<MisconceptionDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisconceptionDef {
    pub label: String,
    pub probability: f64,
    /// Defaults to the rule whose name equals `label`, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
}

fn default_topic() -> String {
    DEFAULT_TOPIC.to_string()
}

impl TryFrom<SpaceDef> for MisconceptionSpace {
    type Error = ModelError;

    fn try_from(def: SpaceDef) -> Result<Self, Self::Error> {
        let entries: Vec<_> = def
            .misconceptions
            .into_iter()
            .map(|m| {
                let rule = m.rule.or_else(|| m.label.parse().ok());
                (m.label, m.probability, rule)
            })
            .collect();
        MisconceptionSpace::with_rules(def.topic, entries, def.mastery_rate)
    }
}

impl From<MisconceptionSpace> for SpaceDef {
    fn from(space: MisconceptionSpace) -> Self {
        SpaceDef {
            topic: space.topic,
            mastery_rate: space.mastery_rate,
            misconceptions: space
                .misconceptions
                .into_iter()
                .map(|m| MisconceptionDef {
                    rule: m.rule.filter(|r| r.name() != m.label),
                    label: m.label,
                    probability: m.probability,
                })
                .collect(),
        }
    }
}

impl MisconceptionSpace {
    /// Builds a space from `(label, probability)` pairs. Labels naming a
    /// built-in [`Rule`] get that rule attached.
    pub fn new<L: AsRef<str>>(
        topic: impl Into<String>,
        entries: &[(L, f64)],
        mastery_rate: f64,
    ) -> Result<Self, ModelError> {
        let entries = entries
            .iter()
            .map(|(label, p)| {
                let label = label.as_ref().to_string();
                let rule = label.parse().ok();
                (label, *p, rule)
            })
            .collect();
        Self::with_rules(topic, entries, mastery_rate)
    }

    pub fn with_rules(
        topic: impl Into<String>,
        entries: Vec<(String, f64, Option<Rule>)>,
        mastery_rate: f64,
    ) -> Result<Self, ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptySpace);
        }
        if !(0.0..1.0).contains(&mastery_rate) {
            return Err(ModelError::BadMasteryRate(mastery_rate));
        }
        let mut labels = BTreeSet::new();
        for (label, p, _) in &entries {
            if !p.is_finite() || *p <= 0.0 || *p > 1.0 {
                return Err(ModelError::BadProbability(format!(
                    "`{label}` has probability {p}, expected (0, 1]"
                )));
            }
            if !labels.insert(label.as_str()) {
                return Err(ModelError::DuplicateLabel(label.clone()));
            }
        }
        let sum: f64 = entries.iter().map(|(_, p, _)| p).sum();
        if (sum - 1.0).abs() > NORMALIZE_TOLERANCE {
            return Err(ModelError::BadProbability(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        // Leave already-normalized input untouched so serialization round-trips.
        let scale = if (sum - 1.0).abs() <= 16.0 * f64::EPSILON { 1.0 } else { sum };
        let misconceptions = entries
            .into_iter()
            .enumerate()
            .map(|(i, (label, p, rule))| Misconception {
                id: MisconceptionId(i as u32 + 1),
                label,
                probability: p / scale,
                rule,
            })
            .collect();
        Ok(Self {
            topic: topic.into(),
            misconceptions,
            mastery_rate,
        })
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn misconceptions(&self) -> &[Misconception] {
        &self.misconceptions
    }

    pub fn len(&self) -> usize {
        self.misconceptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.misconceptions.is_empty()
    }

    pub fn mastery_rate(&self) -> f64 {
        self.mastery_rate
    }

    pub fn ids(&self) -> impl Iterator<Item = MisconceptionId> + '_ {
        self.misconceptions.iter().map(|m| m.id)
    }

    pub fn get(&self, id: MisconceptionId) -> Option<&Misconception> {
        let idx = (id.0 as usize).checked_sub(1)?;
        self.misconceptions.get(idx)
    }

    pub fn probability(&self, id: MisconceptionId) -> Option<f64> {
        self.get(id).map(|m| m.probability)
    }

    /// Misconceptions by descending probability, ties by ascending id.
    pub fn by_descending_probability(&self) -> Vec<&Misconception> {
        let mut sorted: Vec<_> = self.misconceptions.iter().collect();
        sorted.sort_by(|x, y| {
            y.probability
                .total_cmp(&x.probability)
                .then(x.id.cmp(&y.id))
        });
        sorted
    }

    /// The population mode (lowest id on ties).
    pub fn mode(&self) -> MisconceptionId {
        self.by_descending_probability()[0].id
    }

    /// Most frequent misconception among `candidates`.
    pub fn mode_among(
        &self,
        candidates: impl IntoIterator<Item = MisconceptionId>,
    ) -> Option<MisconceptionId> {
        candidates
            .into_iter()
            .filter_map(|id| self.get(id))
            .min_by(|x, y| {
                y.probability
                    .total_cmp(&x.probability)
                    .then(x.id.cmp(&y.id))
            })
            .map(|m| m.id)
    }

    /// The `k` most frequent misconceptions (the `S_k` used for planning).
    pub fn top_k(&self, k: usize) -> Vec<MisconceptionId> {
        self.by_descending_probability()
            .into_iter()
            .take(k)
            .map(|m| m.id)
            .collect()
    }

    pub fn rule(&self, id: MisconceptionId) -> Result<Rule, ModelError> {
        self.get(id)
            .ok_or(ModelError::UnknownMisconception(id))?
            .rule
            .ok_or(ModelError::UnsupportedRule(id))
    }
}

/// Builds a space in the default topic.
pub fn build_space<L: AsRef<str>>(
    entries: &[(L, f64)],
    mastery_rate: f64,
) -> Result<MisconceptionSpace, ModelError> {
    MisconceptionSpace::new(DEFAULT_TOPIC, entries, mastery_rate)
}

/// Smallest high-probability set covering at least `1 - eps_conc` of the
/// misconception mass. Returned in selection order.
pub fn concentrate(space: &MisconceptionSpace, eps_conc: f64) -> Vec<MisconceptionId> {
    // Absorbs float error in the running sum, so eps_conc = 0 selects everything.
    const SLACK: f64 = 1e-12;
    let threshold = 1.0 - eps_conc.clamp(0.0, 1.0) - SLACK;
    let mut selected = Vec::new();
    let mut cumulative = 0.0;
    for m in space.by_descending_probability() {
        if cumulative >= threshold {
            break;
        }
        cumulative += m.probability;
        selected.push(m.id);
    }
    selected
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub id: StudentId,
    /// `None` means mastery.
    pub held: Option<MisconceptionId>,
    pub behavior: BehaviorParams,
}

/// Draws mastery with probability `mastery_rate`, otherwise a misconception
/// from the conditional distribution. Consumes exactly two uniforms.
pub fn sample_student<R: Rng + ?Sized>(
    space: &MisconceptionSpace,
    id: StudentId,
    behavior: BehaviorParams,
    rng: &mut R,
) -> StudentProfile {
    let mastery_draw: f64 = rng.gen();
    let pick: f64 = rng.gen();
    let held = if mastery_draw < space.mastery_rate {
        None
    } else {
        let mut cumulative = 0.0;
        let chosen = space
            .misconceptions
            .iter()
            .find(|m| {
                cumulative += m.probability;
                pick < cumulative
            })
            .unwrap_or_else(|| space.misconceptions.last().expect("non-empty space"));
        Some(chosen.id)
    };
    StudentProfile { id, held, behavior }
}

/// A question with its correct answer and the wrong answer each tested
/// misconception produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuestionDef")]
pub struct Question {
    pub id: String,
    pub topic: String,
    pub payload: ArithExpr,
    pub correct_answer: i64,
    pub answer_map: BTreeMap<MisconceptionId, i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionDef {
    id: String,
    #[serde(default = "default_topic")]
    topic: String,
    payload: ArithExpr,
    correct_answer: i64,
    answer_map: BTreeMap<MisconceptionId, i64>,
}

impl TryFrom<QuestionDef> for Question {
    type Error = ModelError;

    fn try_from(d: QuestionDef) -> Result<Self, Self::Error> {
        Question::new(d.id, d.topic, d.payload, d.correct_answer, d.answer_map)
    }
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        topic: impl Into<String>,
        payload: ArithExpr,
        correct_answer: i64,
        answer_map: BTreeMap<MisconceptionId, i64>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if let Some((m, _)) = answer_map.iter().find(|(_, v)| **v == correct_answer) {
            return Err(ModelError::InvalidQuestion {
                id,
                reason: format!("{m} maps to the correct answer {correct_answer}"),
            });
        }
        Ok(Self {
            id,
            topic: topic.into(),
            payload,
            correct_answer,
            answer_map,
        })
    }

    /// Misconceptions this question can reveal.
    pub fn tested(&self) -> impl Iterator<Item = MisconceptionId> + '_ {
        self.answer_map.keys().copied()
    }

    pub fn tests(&self, id: MisconceptionId) -> bool {
        self.answer_map.contains_key(&id)
    }

    /// `{correct} ∪ range(answer_map)` in a fixed order: correct first,
    /// then distinct wrong values in key order.
    pub fn answer_values(&self) -> Vec<i64> {
        let mut values = vec![self.correct_answer];
        for v in self.answer_map.values() {
            if !values.contains(v) {
                values.push(*v);
            }
        }
        values
    }

    pub fn is_injective(&self) -> bool {
        let distinct: BTreeSet<_> = self.answer_map.values().collect();
        distinct.len() == self.answer_map.len()
    }
}

/// Builds a question for a fixed payload, testing `tested` misconceptions.
/// Fails if the produced answers are not pairwise distinct.
pub fn arith_question(
    space: &MisconceptionSpace,
    id: impl Into<String>,
    payload: ArithExpr,
    tested: &[MisconceptionId],
) -> Result<Question, ModelError> {
    let id = id.into();
    let correct = payload.correct();
    let mut seen = BTreeSet::from([correct]);
    let mut answer_map = BTreeMap::new();
    for &m in tested {
        let value = space.rule(m)?.apply(&payload);
        if !seen.insert(value) {
            return Err(ModelError::InvalidQuestion {
                id,
                reason: format!("{payload}: {m} collides on answer {value}"),
            });
        }
        answer_map.insert(m, value);
    }
    Question::new(id, space.topic(), payload, correct, answer_map)
}

/// Samples an arithmetic question that tests every misconception in the
/// space, resampling until all answers are pairwise distinct.
pub fn gen_arith_question<R: Rng + ?Sized>(
    space: &MisconceptionSpace,
    id: impl Into<String>,
    rng: &mut R,
) -> Result<Question, ModelError> {
    let tested: Vec<_> = space.ids().collect();
    gen_arith_question_testing(space, id, &tested, rng)
}

pub fn gen_arith_question_testing<R: Rng + ?Sized>(
    space: &MisconceptionSpace,
    id: impl Into<String>,
    tested: &[MisconceptionId],
    rng: &mut R,
) -> Result<Question, ModelError> {
    for &m in tested {
        space.rule(m)?;
    }
    let id = id.into();
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let payload = ArithExpr::sample(rng);
        match arith_question(space, id.clone(), payload, tested) {
            Ok(q) => return Ok(q),
            Err(ModelError::InvalidQuestion { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(ModelError::GenerationExhausted(MAX_GENERATION_ATTEMPTS))
}
