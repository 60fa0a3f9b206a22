//! End-to-end scenarios: population sampling, both phases, estimation and
//! adjudication per replication, plus the JSON report and CSV ledger.
//!
//! Replication `r` draws everything from `replication_seed(seed, r)`, so the
//! output is identical for any thread count.

mod calibrate;
mod config;
mod ledger;

pub use calibrate::{
    calibrate_sampling, calibrate_test, simulate_test_replication, wilson_interval,
    Proportion, SamplingCalibration, SettingSummary, TestCalibration,
};
pub use config::{
    read_input, Auto, CalibrationParams, Count, Counts, ExperimentConfig, Resolved, SpaceFile, SpaceSource,
    TestParams,
};
pub use ledger::{read_ledger_csv, write_ledger_csv, LedgerRow, LEDGER_COLUMNS};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::model::{
    concentrate, gen_arith_question, sample_student, MisconceptionId, MisconceptionSpace,
    Question, StudentId, StudentProfile,
};
use crate::predict::PredictionTable;
use crate::protocol::{
    export_requests, generate_followups, import_predictions, run_phase1, run_phase2,
    Phase1Record, Phase2Setup, PredictionRequest, TrialLedger,
};
use crate::rng::{derive_seed, replication_seed, stream, tag, PRNG_NAME};
use crate::stats::{
    adjudicate, estimate_rates, required_n_equiv, required_n_sup, Outcome, RateEstimates,
    Verdict,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngineInfo {
    pub name: &'static str,
    pub version: &'static str,
    pub prng: &'static str,
}

pub const ENGINE: EngineInfo = EngineInfo {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
    prng: PRNG_NAME,
};

/// Hex SHA-256 of the resolved config's compact JSON.
pub fn fingerprint(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Imported predictions for roles configured as `External`.
#[derive(Debug, Clone, Default)]
pub struct ExternalTables {
    pub ai: Option<PredictionTable>,
    pub human: Option<PredictionTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanNumbers {
    pub students_needed: Option<u64>,
    pub questions_needed: Option<u64>,
    pub total_responses: Option<u64>,
    pub n1_equivalence: u64,
    pub n2_superiority: u64,
    pub n_required: u64,
    /// Whether `N · Q` reaches `max(n1, n2)`.
    pub budget_covers_n_required: Option<bool>,
}

impl PlanNumbers {
    pub fn from_resolved(r: &Resolved) -> Self {
        let t = &r.config.test;
        let n1 = required_n_equiv(t.planning_sigma_d_sq, t.equiv_margin, t.alpha);
        let n2 = required_n_sup(t.sup_margin, t.alpha);
        let n_required = n1.max(n2);
        Self {
            students_needed: r.plan.map(|p| p.students_needed),
            questions_needed: r.plan.map(|p| p.questions_needed),
            total_responses: r.plan.map(|p| p.total_responses),
            n1_equivalence: n1,
            n2_superiority: n2,
            n_required,
            budget_covers_n_required: r.plan.map(|p| p.total_responses >= n_required),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Concentration {
    pub eps_conc: f64,
    pub selected: Vec<MisconceptionId>,
    pub mass: f64,
    pub min_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub replication: u64,
    pub seed: u64,
    pub students: u64,
    pub questions: u64,
    pub trials: u64,
    pub ties: u64,
    pub repeat_students: u64,
    /// Trials with no option matching a misconception the student holds.
    pub fallback_trials: u64,
    pub estimates: Option<RateEstimates>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub engine: EngineInfo,
    pub seed: u64,
    pub config_fingerprint: String,
    pub config: ExperimentConfig,
    pub plan: PlanNumbers,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<Concentration>,
    pub replications: Vec<ReplicationSummary>,
    /// Keyed by verdict, plus `NoTrials` for replications without wrong answers.
    pub verdict_frequencies: BTreeMap<String, u64>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub struct ScenarioOutput {
    pub report: Report,
    /// One ledger per replication, in replication order.
    pub ledgers: Vec<TrialLedger>,
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Students and Phase-1 questions of one replication.
pub fn sample_population(
    r: &Resolved,
    seed: u64,
) -> Result<(Vec<StudentProfile>, Vec<Question>)> {
    let students = (0..r.students)
        .map(|j| {
            let mut rng = stream(seed, &[tag::STUDENTS, j]);
            sample_student(&r.space, StudentId(j as u32 + 1), r.config.behavior, &mut rng)
        })
        .collect();
    let questions = (0..r.questions)
        .map(|i| {
            let mut rng = stream(seed, &[tag::QUESTIONS, i]);
            gen_arith_question(&r.space, format!("q{:04}", i + 1), &mut rng)
        })
        .collect::<Result<_, _>>()?;
    Ok((students, questions))
}

fn setup<'a>(
    r: &'a Resolved,
    students: &'a [StudentProfile],
    questions: &'a [Question],
    external: &'a ExternalTables,
    replication: u64,
) -> Phase2Setup<'a> {
    Phase2Setup {
        space: &r.space,
        students,
        questions,
        ai: &r.config.ai,
        human: &r.config.human,
        external_ai: external.ai.as_ref(),
        external_human: external.human.as_ref(),
        replication,
    }
}

/// Runs one replication end to end.
pub fn run_replication(
    r: &Resolved,
    replication: u64,
    external: &ExternalTables,
) -> Result<(TrialLedger, ReplicationSummary)> {
    let seed = replication_seed(r.config.seed, replication);
    let (students, questions) = sample_population(r, seed)?;
    let records = run_phase1(&students, &questions, seed);
    let setup = setup(r, &students, &questions, external, replication);
    let mut ledger = run_phase2(&setup, &records, seed)?;
    ledger.config_fingerprint = fingerprint(&r.config);

    let estimates = estimate_rates(&ledger).ok();
    let verdict = estimates
        .as_ref()
        .map(|e| adjudicate(e, &r.config.test.adjudication()));
    let summary = ReplicationSummary {
        replication,
        seed,
        students: r.students,
        questions: r.questions,
        trials: ledger.trials.len() as u64,
        ties: ledger.tie_count() as u64,
        repeat_students: ledger.repeat_students() as u64,
        fallback_trials: ledger
            .trials
            .iter()
            .filter(|t| !t.student_value_displayed)
            .count() as u64,
        estimates,
        verdict,
    };
    Ok((ledger, summary))
}

pub fn run_scenario(
    r: &Resolved,
    threads: usize,
    external: &ExternalTables,
) -> Result<ScenarioOutput> {
    let results: Vec<_> = with_threads(threads, || {
        (0..r.config.replications)
            .into_par_iter()
            .map(|rep| run_replication(r, rep, external))
            .collect::<Result<Vec<_>>>()
    })??;
    let (ledgers, replications): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut verdict_frequencies: BTreeMap<String, u64> = Outcome::ALL
        .iter()
        .map(|o| (o.as_str().to_string(), 0))
        .collect();
    verdict_frequencies.insert("NoTrials".into(), 0);
    for s in &replications {
        let key = s.verdict.as_ref().map_or("NoTrials", |v| v.outcome.as_str());
        *verdict_frequencies.get_mut(key).expect("all keys present") += 1;
    }

    let plan = PlanNumbers::from_resolved(r);
    let report = Report {
        engine: ENGINE,
        seed: r.config.seed,
        config_fingerprint: fingerprint(&r.config),
        config: r.config.clone(),
        concentration: r.config.eps_conc.map(|eps| concentration(&r.space, eps)),
        notes: notes(&replications, &plan),
        plan,
        replications,
        verdict_frequencies,
    };
    Ok(ScenarioOutput { report, ledgers })
}

fn concentration(space: &MisconceptionSpace, eps_conc: f64) -> Concentration {
    let selected = concentrate(space, eps_conc);
    let probs: Vec<f64> = selected
        .iter()
        .map(|&id| space.probability(id).expect("selected from space"))
        .collect();
    Concentration {
        eps_conc,
        mass: probs.iter().sum(),
        min_probability: probs.iter().copied().fold(f64::INFINITY, f64::min),
        selected,
    }
}

fn notes(reps: &[ReplicationSummary], plan: &PlanNumbers) -> Vec<String> {
    let mut notes = Vec::new();
    let repeats: u64 = reps.iter().map(|s| s.repeat_students).sum();
    if repeats > 0 {
        notes.push(format!(
            "{repeats} student(s) contributed more than one trial; standard errors treat trials as independent and ignore within-student clustering"
        ));
    }
    let fallback: u64 = reps.iter().map(|s| s.fallback_trials).sum();
    if fallback > 0 {
        notes.push(format!(
            "{fallback} trial(s) showed no option matching a misconception held by the student (mastery, or the value was not displayed); persistent choices there fall back to Correct"
        ));
    }
    let empty = reps.iter().filter(|s| s.trials == 0).count();
    if empty > 0 {
        notes.push(format!("{empty} replication(s) produced no wrong answers and were not adjudicated"));
    }
    let short: Vec<_> = reps
        .iter()
        .filter(|s| s.trials > 0 && s.trials < plan.n_required)
        .map(|s| s.replication)
        .collect();
    if !short.is_empty() {
        notes.push(format!(
            "{} replication(s) have fewer trials than the required n = {}",
            short.len(),
            plan.n_required
        ));
    }
    if plan.budget_covers_n_required == Some(false) {
        notes.push("planned budget N*Q is below max(n1, n2)".into());
    }
    notes
}

/// Salt for answer hashes in exported requests.
pub fn exchange_salt(seed: u64) -> u64 {
    derive_seed(seed, &[tag::SALT])
}

/// Prediction requests for every replication, in replication then record order.
pub fn scenario_requests(r: &Resolved) -> Result<Vec<PredictionRequest>> {
    let salt = exchange_salt(r.config.seed);
    let external = ExternalTables::default();
    let mut all = Vec::new();
    for rep in 0..r.config.replications {
        let seed = replication_seed(r.config.seed, rep);
        let (students, questions) = sample_population(r, seed)?;
        let records: Vec<Phase1Record> = run_phase1(&students, &questions, seed);
        let setup = setup(r, &students, &questions, &external, rep);
        let followups = generate_followups(&setup, &records, seed)?;
        all.extend(export_requests(&records, &questions, &followups, rep, salt)?);
    }
    Ok(all)
}

/// Validates a response file against this scenario's requests.
pub fn scenario_predictions(r: &Resolved, responses: &str) -> Result<PredictionTable> {
    let requests = scenario_requests(r)?;
    Ok(import_predictions(
        &requests,
        responses,
        exchange_salt(r.config.seed),
    )?)
}
