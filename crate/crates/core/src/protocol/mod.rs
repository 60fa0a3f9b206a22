//! The two-phase protocol: open-ended Phase 1, then a conditioned
//! four-option follow-up for every incorrect Phase-1 answer.
//!
//! Every per-record decision draws from its own stream derived from
//! `(seed, purpose, record index)`, so a ledger does not depend on the order
//! records are processed in, nor on how much randomness a predictor uses.

mod exchange;

pub use exchange::{
    answer_hash, export_requests, import_predictions, parse_requests, read_jsonl, write_jsonl,
    PredictionRequest, PredictionResponse,
};

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    gen_arith_question, MisconceptionId, MisconceptionSpace, ModelError, Question, StudentId,
    StudentProfile, MAX_GENERATION_ATTEMPTS,
};
use crate::predict::{
    infer_misconception, predict_distractor, PredictError, PredictionInput,
    PredictionTable, PredictorSpec,
};
use crate::rng::{stream, tag};
use crate::simulate::{answer_open, choose_mcq, student_value};

/// Largest offset from the correct answer tried when the follow-up's own
/// wrong answers are all taken.
const RANDOM_OFFSET: i64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{role} predictor returned the correct answer {value}")]
    PredictedCorrect { role: Role, value: i64 },
    #[error("no unused wrong answer available for the random distractor of {0}")]
    RandomPoolExhausted(String),
    #[error("unknown question {0}")]
    UnknownQuestion(String),
    #[error("unknown student {0}")]
    UnknownStudent(StudentId),
    #[error("missing prediction for request {0}")]
    MissingPrediction(String),
    #[error("prediction for request {request_id} equals the correct answer")]
    PredictedCorrectExternal { request_id: String },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("prediction for unknown request {0}")]
    UnknownRequest(String),
    #[error("duplicate prediction for request {0}")]
    DuplicateResponse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// The two predicting roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "AI")]
    Ai,
    Human,
}

impl Role {
    pub fn other(self) -> Self {
        match self {
            Role::Ai => Role::Human,
            Role::Human => Role::Ai,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Ai => "AI",
            Role::Human => "Human",
        })
    }
}

/// Where an option came from, and therefore what a selection means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChoiceOutcome {
    #[serde(rename = "AI")]
    Ai,
    Human,
    Random,
    Correct,
    /// AI and Human predicted the same value; one option carries both.
    Both,
}

impl ChoiceOutcome {
    pub const ALL: [ChoiceOutcome; 5] = [
        ChoiceOutcome::Ai,
        ChoiceOutcome::Human,
        ChoiceOutcome::Random,
        ChoiceOutcome::Correct,
        ChoiceOutcome::Both,
    ];

    /// `X_AI` indicator.
    pub fn credits_ai(self) -> bool {
        matches!(self, ChoiceOutcome::Ai | ChoiceOutcome::Both)
    }

    /// `X_Human` indicator.
    pub fn credits_human(self) -> bool {
        matches!(self, ChoiceOutcome::Human | ChoiceOutcome::Both)
    }

    pub fn credits(self, role: Role) -> bool {
        match role {
            Role::Ai => self.credits_ai(),
            Role::Human => self.credits_human(),
        }
    }

    /// Exchanges the AI and Human labels.
    pub fn swapped(self) -> Self {
        match self {
            ChoiceOutcome::Ai => ChoiceOutcome::Human,
            ChoiceOutcome::Human => ChoiceOutcome::Ai,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChoiceOutcome::Ai => "AI",
            ChoiceOutcome::Human => "Human",
            ChoiceOutcome::Random => "Random",
            ChoiceOutcome::Correct => "Correct",
            ChoiceOutcome::Both => "Both",
        }
    }
}

impl fmt::Display for ChoiceOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ChoiceOutcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChoiceOutcome::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown choice outcome `{s}`"))
    }
}

/// An observed incorrect open-ended answer `(s, q, A(s,q))`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase1Record {
    pub student_id: StudentId,
    pub question_id: String,
    pub given_answer: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOption {
    pub content: i64,
    pub provenance: ChoiceOutcome,
}

impl McqOption {
    pub fn new(content: i64, provenance: ChoiceOutcome) -> Self {
        Self {
            content,
            provenance,
        }
    }
}

/// Options in canonical order (Correct, AI, Human, Random, or Correct, Both,
/// Random on a tie) plus the order they are shown in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mcq {
    pub options: Vec<McqOption>,
    /// `display_order[position]` is the index into `options` shown at `position`.
    pub display_order: Vec<usize>,
    pub tie_flag: bool,
}

impl Mcq {
    pub fn new(options: Vec<McqOption>, display_order: Vec<usize>) -> Self {
        let tie_flag = options
            .iter()
            .any(|o| o.provenance == ChoiceOutcome::Both);
        Self {
            options,
            display_order,
            tie_flag,
        }
    }

    pub fn displayed(&self) -> impl Iterator<Item = &McqOption> + '_ {
        self.display_order.iter().map(|&i| &self.options[i])
    }

    pub fn has(&self, provenance: ChoiceOutcome) -> bool {
        self.options.iter().any(|o| o.provenance == provenance)
    }

    /// Checks the structural invariants of an assembled question.
    pub fn is_well_formed(&self) -> bool {
        let count = |p| self.options.iter().filter(|o| o.provenance == p).count();
        let mut contents: Vec<_> = self.options.iter().map(|o| o.content).collect();
        contents.sort_unstable();
        contents.dedup();
        let mut order = self.display_order.clone();
        order.sort_unstable();
        let roles_ok = if self.tie_flag {
            count(ChoiceOutcome::Both) == 1
                && count(ChoiceOutcome::Ai) == 0
                && count(ChoiceOutcome::Human) == 0
        } else {
            count(ChoiceOutcome::Both) == 0
                && count(ChoiceOutcome::Ai) == 1
                && count(ChoiceOutcome::Human) == 1
        };
        contents.len() == self.options.len()
            && order == (0..self.options.len()).collect::<Vec<_>>()
            && count(ChoiceOutcome::Correct) == 1
            && count(ChoiceOutcome::Random) == 1
            && roles_ok
    }
}

/// One completed follow-up trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2Trial {
    pub trial_id: u64,
    pub replication: u64,
    pub request_id: String,
    pub source_record: Phase1Record,
    pub inferred_misconception: Option<MisconceptionId>,
    pub followup_question_id: String,
    pub ai_prediction: i64,
    pub human_prediction: i64,
    pub mcq: Mcq,
    pub choice: Option<ChoiceOutcome>,
    /// False when the student's misconception value was not among the options,
    /// so a non-slip choice fell back to the correct answer.
    pub student_value_displayed: bool,
}

impl Phase2Trial {
    pub fn tie_flag(&self) -> bool {
        self.mcq.tie_flag
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLedger {
    pub trials: Vec<Phase2Trial>,
    pub config_fingerprint: String,
    pub seed: u64,
}

impl TrialLedger {
    pub fn outcomes(&self) -> Vec<ChoiceOutcome> {
        self.trials.iter().filter_map(|t| t.choice).collect()
    }

    pub fn tie_count(&self) -> usize {
        self.trials.iter().filter(|t| t.tie_flag()).count()
    }

    /// Students contributing more than one trial (clustered observations).
    pub fn repeat_students(&self) -> usize {
        let mut per_student: BTreeMap<StudentId, usize> = BTreeMap::new();
        for t in &self.trials {
            *per_student.entry(t.source_record.student_id).or_default() += 1;
        }
        per_student.values().filter(|&&c| c > 1).count()
    }
}

pub fn request_id(replication: u64, record_index: usize) -> String {
    format!("rep{replication}-rec{record_index:06}")
}

/// Every student answers every question open-endedly; only wrong answers are
/// kept. Student `j` draws from stream `(seed, PHASE1, j)`.
pub fn run_phase1(
    students: &[StudentProfile],
    questions: &[Question],
    seed: u64,
) -> Vec<Phase1Record> {
    students
        .iter()
        .enumerate()
        .flat_map(|(j, student)| {
            let mut rng = stream(seed, &[tag::PHASE1, j as u64]);
            questions
                .iter()
                .filter_map(move |q| {
                    let given = answer_open(student, q, &mut rng);
                    (given != q.correct_answer).then(|| Phase1Record {
                        student_id: student.id,
                        question_id: q.id.clone(),
                        given_answer: given,
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Generates `q'` for one record. The follow-up tests every misconception in
/// the space, so it covers the inferred one (or the mode on inference failure),
/// and its payload differs from the original question.
pub fn generate_followup<R: Rng + ?Sized>(
    record: &Phase1Record,
    q: &Question,
    space: &MisconceptionSpace,
    followup_id: String,
    rng: &mut R,
) -> Result<Question, ProtocolError> {
    let target = infer_misconception(record, q)
        .ok()
        .flatten()
        .unwrap_or_else(|| space.mode());
    space.rule(target)?;
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let candidate = gen_arith_question(space, followup_id.clone(), rng)?;
        if candidate.payload != q.payload {
            debug_assert!(candidate.tests(target));
            return Ok(candidate);
        }
    }
    Err(ModelError::GenerationExhausted(MAX_GENERATION_ATTEMPTS).into())
}

fn followup_id(record: &Phase1Record, index: usize) -> String {
    format!("{}-f{index:06}", record.question_id)
}

/// Builds the displayed question: correct answer, both predictions (merged on
/// a tie), and a random wrong answer, in a uniformly random order.
pub fn assemble_mcq<R: Rng + ?Sized>(
    q_prime: &Question,
    ai_pred: i64,
    human_pred: i64,
    rng: &mut R,
) -> Result<Mcq, ProtocolError> {
    let correct = q_prime.correct_answer;
    for (role, value) in [(Role::Ai, ai_pred), (Role::Human, human_pred)] {
        if value == correct {
            return Err(ProtocolError::PredictedCorrect { role, value });
        }
    }
    let used = [correct, ai_pred, human_pred];
    let pool: Vec<i64> = q_prime.answer_values()[1..]
        .iter()
        .copied()
        .filter(|v| !used.contains(v))
        .collect();
    let random = if pool.is_empty() {
        sample_wrong_value(correct, &used, rng)
            .ok_or_else(|| ProtocolError::RandomPoolExhausted(q_prime.id.clone()))?
    } else {
        pool[rng.gen_range(0..pool.len())]
    };

    let mut options = vec![McqOption::new(correct, ChoiceOutcome::Correct)];
    if ai_pred == human_pred {
        options.push(McqOption::new(ai_pred, ChoiceOutcome::Both));
    } else {
        options.push(McqOption::new(ai_pred, ChoiceOutcome::Ai));
        options.push(McqOption::new(human_pred, ChoiceOutcome::Human));
    }
    options.push(McqOption::new(random, ChoiceOutcome::Random));

    let mut display_order: Vec<usize> = (0..options.len()).collect();
    display_order.shuffle(rng);
    Ok(Mcq::new(options, display_order))
}

fn sample_wrong_value<R: Rng + ?Sized>(correct: i64, used: &[i64], rng: &mut R) -> Option<i64> {
    (0..MAX_GENERATION_ATTEMPTS).find_map(|_| {
        let offset = rng.gen_range(1..=RANDOM_OFFSET) * if rng.gen::<bool>() { 1 } else { -1 };
        let v = correct + offset;
        (!used.contains(&v)).then_some(v)
    })
}

/// Inputs shared by every Phase-2 trial of one replication.
#[derive(Debug, Clone, Copy)]
pub struct Phase2Setup<'a> {
    pub space: &'a MisconceptionSpace,
    pub students: &'a [StudentProfile],
    pub questions: &'a [Question],
    pub ai: &'a PredictorSpec,
    pub human: &'a PredictorSpec,
    pub external_ai: Option<&'a PredictionTable>,
    pub external_human: Option<&'a PredictionTable>,
    pub replication: u64,
}

impl<'a> Phase2Setup<'a> {
    fn question(&self, id: &str) -> Result<&'a Question, ProtocolError> {
        // Generated banks are sorted by id; fall back to a scan otherwise.
        self.questions
            .binary_search_by(|q| q.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.questions[i])
            .or_else(|| self.questions.iter().find(|q| q.id == id))
            .ok_or_else(|| ProtocolError::UnknownQuestion(id.to_string()))
    }

    fn student(&self, id: StudentId) -> Result<&'a StudentProfile, ProtocolError> {
        self.students
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.students[i])
            .or_else(|| self.students.iter().find(|s| s.id == id))
            .ok_or(ProtocolError::UnknownStudent(id))
    }
}

/// Follow-up questions for every record, identical to those `run_phase2`
/// generates under the same seed.
pub fn generate_followups(
    setup: &Phase2Setup<'_>,
    records: &[Phase1Record],
    seed: u64,
) -> Result<Vec<Question>, ProtocolError> {
    records
        .iter()
        .enumerate()
        .map(|(i, record)| followup_for(setup, record, i, seed))
        .collect()
}

fn followup_for(
    setup: &Phase2Setup<'_>,
    record: &Phase1Record,
    index: usize,
    seed: u64,
) -> Result<Question, ProtocolError> {
    let q = setup.question(&record.question_id)?;
    let mut rng = stream(seed, &[tag::FOLLOWUP, index as u64]);
    generate_followup(record, q, setup.space, followup_id(record, index), &mut rng)
}

/// Runs the conditioned follow-up for every record and records choices.
pub fn run_phase2(
    setup: &Phase2Setup<'_>,
    records: &[Phase1Record],
    seed: u64,
) -> Result<TrialLedger, ProtocolError> {
    let trials = records
        .iter()
        .enumerate()
        .map(|(i, record)| run_trial(setup, record, i, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrialLedger {
        trials,
        config_fingerprint: String::new(),
        seed,
    })
}

fn run_trial(
    setup: &Phase2Setup<'_>,
    record: &Phase1Record,
    index: usize,
    seed: u64,
) -> Result<Phase2Trial, ProtocolError> {
    let i = index as u64;
    let q = setup.question(&record.question_id)?;
    let student = setup.student(record.student_id)?;
    let followup = followup_for(setup, record, index, seed)?;
    let request_id = request_id(setup.replication, index);
    let input = PredictionInput {
        request_id: &request_id,
        record,
        question: q,
        followup: &followup,
    };
    let ai_prediction = predict_distractor(
        setup.ai,
        setup.space,
        setup.external_ai,
        input,
        &mut stream(seed, &[tag::AI, i]),
    )?;
    let human_prediction = predict_distractor(
        setup.human,
        setup.space,
        setup.external_human,
        input,
        &mut stream(seed, &[tag::HUMAN, i]),
    )?;
    let mcq = assemble_mcq(
        &followup,
        ai_prediction,
        human_prediction,
        &mut stream(seed, &[tag::ASSEMBLE, i]),
    )?;
    let choice = choose_mcq(student, &mcq, &followup, &mut stream(seed, &[tag::CHOICE, i]));
    let student_value_displayed = student_value(student, &followup)
        .is_some_and(|v| mcq.options.iter().any(|o| o.content == v));
    Ok(Phase2Trial {
        trial_id: i,
        replication: setup.replication,
        request_id,
        source_record: record.clone(),
        inferred_misconception: infer_misconception(record, q).ok().flatten(),
        followup_question_id: followup.id.clone(),
        ai_prediction,
        human_prediction,
        mcq,
        choice: Some(choice),
        student_value_displayed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{arith_question, build_space, sample_student, ArithExpr};
    use crate::simulate::BehaviorParams;

    fn space() -> MisconceptionSpace {
        build_space(&[("L2R", 0.5), ("AddFirst", 0.3), ("SignFlip", 0.2)], 0.1).unwrap()
    }

    fn worked_question(space: &MisconceptionSpace) -> Question {
        let all: Vec<_> = space.ids().collect();
        arith_question(space, "q0001", ArithExpr::new(1, 2, 3, 4), &all).unwrap()
    }

    fn held(id: u32, m: Option<u32>, behavior: BehaviorParams) -> StudentProfile {
        StudentProfile {
            id: StudentId(id),
            held: m.map(MisconceptionId),
            behavior,
        }
    }

    #[test]
    fn phase1_examples() {
        let s = space();
        let q = worked_question(&s);
        let det = BehaviorParams::deterministic();
        let masters: Vec<_> = (0..10).map(|i| held(i, None, det)).collect();
        assert!(run_phase1(&masters, std::slice::from_ref(&q), 1).is_empty());

        let records = run_phase1(&[held(1, Some(1), det)], &[q], 1);
        assert_eq!(
            records,
            vec![Phase1Record {
                student_id: StudentId(1),
                question_id: "q0001".into(),
                given_answer: 13
            }]
        );
    }

    #[test]
    fn phase1_replays_exactly() {
        let s = space();
        let mut rng = stream(5, &[]);
        let behavior = BehaviorParams::default();
        let students: Vec<_> = (0..100)
            .map(|i| sample_student(&s, StudentId(i), behavior, &mut rng))
            .collect();
        let questions: Vec<_> = (0..25)
            .map(|i| gen_arith_question(&s, format!("q{i:04}"), &mut rng).unwrap())
            .collect();
        let a = run_phase1(&students, &questions, 77);
        let b = run_phase1(&students, &questions, 77);
        assert_eq!(a, b);
        assert!(!a.is_empty());
        assert!(a.iter().all(|r| {
            let q = questions.iter().find(|q| q.id == r.question_id).unwrap();
            r.given_answer != q.correct_answer
        }));
    }

    #[test]
    fn followup_examples() {
        let s = space();
        let q = worked_question(&s);
        let record = Phase1Record {
            student_id: StudentId(1),
            question_id: q.id.clone(),
            given_answer: 13,
        };
        let f1 = generate_followup(&record, &q, &s, "f".into(), &mut stream(3, &[])).unwrap();
        let f2 = generate_followup(&record, &q, &s, "f".into(), &mut stream(3, &[])).unwrap();
        assert_eq!(f1, f2);
        assert!(f1.tests(MisconceptionId(1)));
        assert_ne!(f1.id, q.id);

        let unmapped = Phase1Record {
            given_answer: 99,
            ..record
        };
        let f = generate_followup(&unmapped, &q, &s, "g".into(), &mut stream(4, &[])).unwrap();
        assert!(f.tests(s.mode()));
    }

    #[test]
    fn assemble_examples() {
        let s = space();
        let all: Vec<_> = s.ids().collect();
        let qp = arith_question(&s, "f", ArithExpr::new(3, 4, 3, 7), &all).unwrap();
        let mut rng = stream(8, &[]);

        let m = assemble_mcq(&qp, 28, 70, &mut rng).unwrap();
        assert_eq!(m.options.len(), 4);
        assert!(!m.tie_flag);
        assert!(m.is_well_formed());
        assert_eq!(
            m.options.iter().find(|o| o.provenance == ChoiceOutcome::Random).unwrap().content,
            8
        );

        let tie = assemble_mcq(&qp, 28, 28, &mut rng).unwrap();
        assert_eq!(tie.options.len(), 3);
        assert!(tie.tie_flag && tie.has(ChoiceOutcome::Both));
        assert!(tie.is_well_formed());

        assert_eq!(
            assemble_mcq(&qp, 22, 70, &mut rng),
            Err(ProtocolError::PredictedCorrect {
                role: Role::Ai,
                value: 22
            })
        );
        assert_eq!(
            assemble_mcq(&qp, 28, 22, &mut rng),
            Err(ProtocolError::PredictedCorrect {
                role: Role::Human,
                value: 22
            })
        );
    }

    #[test]
    fn assemble_falls_back_to_domain_sampler() {
        let s = build_space(&[("L2R", 1.0)], 0.0).unwrap();
        let qp = arith_question(&s, "f", ArithExpr::new(3, 4, 3, 7), &[MisconceptionId(1)]).unwrap();
        let m = assemble_mcq(&qp, 28, 30, &mut stream(1, &[])).unwrap();
        assert!(m.is_well_formed());
        let random = m
            .options
            .iter()
            .find(|o| o.provenance == ChoiceOutcome::Random)
            .unwrap()
            .content;
        assert!((random - 22).abs() <= RANDOM_OFFSET && ![22, 28, 30].contains(&random));
    }

    fn single_record_setup() -> (MisconceptionSpace, Vec<StudentProfile>, Vec<Question>) {
        let s = space();
        let q = worked_question(&s);
        (s, vec![held(1, Some(1), BehaviorParams::deterministic())], vec![q])
    }

    #[test]
    fn phase2_empty_and_tie() {
        let ai = PredictorSpec::ConditionedOracle;
        let human = PredictorSpec::ConditionedOracle;
        let (s, students, questions) = single_record_setup();
        let setup = Phase2Setup {
            space: &s,
            students: &students,
            questions: &questions,
            ai: &ai,
            human: &human,
            external_ai: None,
            external_human: None,
            replication: 0,
        };
        assert!(run_phase2(&setup, &[], 1).unwrap().trials.is_empty());

        let records = run_phase1(&students, &questions, 1);
        let ledger = run_phase2(&setup, &records, 1).unwrap();
        assert_eq!(ledger.trials.len(), 1);
        let t = &ledger.trials[0];
        assert!(t.tie_flag());
        assert_eq!(t.choice, Some(ChoiceOutcome::Both));
        assert_eq!(t.inferred_misconception, Some(MisconceptionId(1)));
        assert_ne!(t.followup_question_id, t.source_record.question_id);
    }

    #[test]
    fn phase2_missing_question() {
        let ai = PredictorSpec::ConditionedOracle;
        let (s, students, questions) = single_record_setup();
        let setup = Phase2Setup {
            space: &s,
            students: &students,
            questions: &questions,
            ai: &ai,
            human: &ai,
            external_ai: None,
            external_human: None,
            replication: 0,
        };
        let bogus = Phase1Record {
            student_id: StudentId(1),
            question_id: "nope".into(),
            given_answer: 1,
        };
        assert_eq!(
            run_phase2(&setup, &[bogus], 1).unwrap_err(),
            ProtocolError::UnknownQuestion("nope".into())
        );
    }

    #[test]
    fn choice_outcome_parsing() {
        for c in ChoiceOutcome::ALL {
            assert_eq!(c.as_str().parse::<ChoiceOutcome>(), Ok(c));
            assert_eq!(c.swapped().swapped(), c);
        }
        assert!(ChoiceOutcome::Both.credits_ai() && ChoiceOutcome::Both.credits_human());
        assert!(!ChoiceOutcome::Random.credits(Role::Ai));
    }
}
