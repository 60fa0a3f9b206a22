use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use misconception_turing::experiment::{
    calibrate_sampling, calibrate_test, read_input, read_ledger_csv, run_scenario, scenario_predictions,
    scenario_requests, write_ledger_csv, ExperimentConfig, ExternalTables, PlanNumbers, Resolved,
    ENGINE,
};
use misconception_turing::plan::PlanParams;
use misconception_turing::predict::PredictionTable;
use misconception_turing::protocol::{write_jsonl, ChoiceOutcome};
use misconception_turing::stats::{adjudicate, AdjudicationParams, RateEstimates};
use misconception_turing::{Error, Result};

#[derive(Parser)]
#[command(name = "mturing", version, about = "Conditioned distractor-prediction test engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replication count.
    #[arg(long)]
    replications: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads, 0 = one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Student, question and response counts (from --config or explicit values).
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        t: Option<u32>,
        #[arg(long)]
        p_min: Option<f64>,
        #[arg(long)]
        conf_delta: Option<f64>,
    },
    /// Runs the scenario; writes report.json and ledger.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Prediction table from import-predictions for an External AI.
        #[arg(long)]
        ai_predictions: Option<PathBuf>,
        #[arg(long)]
        human_predictions: Option<PathBuf>,
    },
    /// Monte Carlo check of the student and question bounds.
    CalibrateSampling {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo false-win rate and power of the victory rule.
    CalibrateTest {
        #[command(flatten)]
        common: Common,
    },
    /// Verdict per replication for a ledger CSV.
    Adjudicate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Writes requests.jsonl for external predictors.
    ExportRequests {
        #[command(flatten)]
        common: Common,
    },
    /// Validates a response file; writes predictions_<role>.json.
    ImportPredictions {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long)]
        responses: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Ai,
    Human,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn resolve(common: &Common) -> Result<Resolved> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(r) = common.replications {
        config.replications = r;
    }
    config.resolve(path.parent().unwrap_or(Path::new(".")))
}

fn write(out: &Path, name: &str, contents: &[u8]) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(out, name, text.as_bytes())
}

fn read_table(path: &Path) -> Result<PredictionTable> {
    Ok(serde_json::from_str(&read_input(path)?)?)
}

#[derive(Serialize)]
struct PlanOutput {
    params: PlanParams,
    students_needed: u64,
    questions_needed: u64,
    total_responses: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase2: Option<PlanNumbers>,
}

#[derive(Serialize)]
struct ReplicationVerdict {
    replication: u64,
    estimates: RateEstimates,
    verdict: misconception_turing::stats::Verdict,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Plan { common, k, t, p_min, conf_delta } => {
            let resolved = common.config.is_some().then(|| resolve(&common)).transpose()?;
            let base = resolved.as_ref().and_then(|r| r.config.plan);
            let pick = |name: &str, cli: Option<f64>, cfg: Option<f64>| {
                cli.or(cfg).ok_or_else(|| Error::Config(format!("plan needs --{name} or a config plan section")))
            };
            let params = PlanParams {
                k: pick("k", k.map(f64::from), base.map(|p| p.k as f64))? as u32,
                t: pick("t", t.map(f64::from), base.map(|p| p.t as f64))? as u32,
                p_min: pick("p-min", p_min, base.map(|p| p.p_min))?,
                conf_delta: pick("conf-delta", conf_delta, base.map(|p| p.conf_delta))?,
            };
            let s = params.summary()?;
            let output = PlanOutput {
                params,
                students_needed: s.students_needed,
                questions_needed: s.questions_needed,
                total_responses: s.total_responses,
                phase2: resolved.as_ref().map(PlanNumbers::from_resolved),
            };
            println!("{}", serde_json::to_string_pretty(&output)?);
            write_json(&common.out, "plan.json", &output)
        }
        Command::Simulate { common, ai_predictions, human_predictions } => {
            let r = resolve(&common)?;
            let tables = ExternalTables {
                ai: ai_predictions.as_deref().map(read_table).transpose()?,
                human: human_predictions.as_deref().map(read_table).transpose()?,
            };
            let output = run_scenario(&r, common.threads, &tables)?;
            write(&common.out, "report.json", output.report.to_json().as_bytes())?;
            let mut csv = Vec::new();
            write_ledger_csv(&output.ledgers, &mut csv)?;
            write(&common.out, "ledger.csv", &csv)?;
            for (verdict, n) in &output.report.verdict_frequencies {
                println!("{verdict}: {n}");
            }
            Ok(())
        }
        Command::CalibrateSampling { common } => {
            let r = resolve(&common)?;
            let cal = calibrate_sampling(&r, common.threads)?;
            println!(
                "observation {:.4} [{:.4}, {:.4}]  coverage {:.4} [{:.4}, {:.4}]  target {:.4}",
                cal.observation.rate,
                cal.observation.low,
                cal.observation.high,
                cal.coverage.rate,
                cal.coverage.low,
                cal.coverage.high,
                cal.target
            );
            write_json(&common.out, "calibration_sampling.json", &cal)
        }
        Command::CalibrateTest { common } => {
            let r = resolve(&common)?;
            let cal = calibrate_test(&r, common.threads)?;
            for s in &cal.settings {
                println!(
                    "{:<12} AIWins {:.4}  HumanWins {:.4}",
                    s.name, s.ai_wins.rate, s.human_wins.rate
                );
            }
            write_json(&common.out, "calibration_test.json", &cal)
        }
        Command::Adjudicate { common, ledger } => {
            let params = match &common.config {
                Some(_) => resolve(&common)?.config.test.adjudication(),
                None => AdjudicationParams::default(),
            };
            params.validate()?;
            let rows = read_ledger_csv(read_input(&ledger)?.as_bytes())?;
            let mut by_rep: std::collections::BTreeMap<u64, Vec<ChoiceOutcome>> = Default::default();
            for row in &rows {
                by_rep.entry(row.replication).or_default().push(row.outcome()?);
            }
            let verdicts = by_rep
                .into_iter()
                .map(|(replication, outcomes)| {
                    let estimates = RateEstimates::from_outcomes(&outcomes)?;
                    let verdict = adjudicate(&estimates, &params);
                    println!("replication {replication}: {}", verdict.outcome);
                    Ok(ReplicationVerdict { replication, estimates, verdict })
                })
                .collect::<Result<Vec<_>>>()?;
            #[derive(Serialize)]
            struct Out<'a> {
                engine: &'a misconception_turing::experiment::EngineInfo,
                params: AdjudicationParams,
                replications: Vec<ReplicationVerdict>,
            }
            write_json(
                &common.out,
                "verdict.json",
                &Out { engine: &ENGINE, params, replications: verdicts },
            )
        }
        Command::ExportRequests { common } => {
            let r = resolve(&common)?;
            let requests = scenario_requests(&r)?;
            let mut buf = Vec::new();
            write_jsonl(&requests, &mut buf).map_err(|e| Error::io("requests.jsonl", e))?;
            write(&common.out, "requests.jsonl", &buf)?;
            println!("{} requests", requests.len());
            Ok(())
        }
        Command::ImportPredictions { common, role, responses } => {
            let r = resolve(&common)?;
            let table = scenario_predictions(&r, &read_input(&responses)?)?;
            let name = match role {
                RoleArg::Ai => "predictions_ai.json",
                RoleArg::Human => "predictions_human.json",
            };
            println!("{} predictions accepted", table.len());
            write_json(&common.out, name, &table)
        }
    }
}
