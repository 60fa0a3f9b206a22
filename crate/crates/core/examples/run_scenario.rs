//! Full scenario from a config file; writes report.json and ledger.csv.
//!
//!     cargo run --release --example run_scenario -- crates/core/examples/configs/scenario.json out

use std::path::{Path, PathBuf};

use misconception_turing::experiment::{run_scenario, write_ledger_csv, ExperimentConfig, ExternalTables};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/scenario.json").into()
    }));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out".into()));

    let resolved = ExperimentConfig::load(&config)?.resolve(config.parent().unwrap_or(Path::new(".")))?;
    let run = run_scenario(&resolved, 0, &ExternalTables::default())?;

    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("report.json"), run.report.to_json())?;
    write_ledger_csv(&run.ledgers, std::fs::File::create(out.join("ledger.csv"))?)?;

    for rep in &run.report.replications {
        match (&rep.estimates, &rep.verdict) {
            (Some(e), Some(v)) => println!(
                "rep {}: n = {:>4}  p_ai = {:.3}  p_human = {:.3}  {}",
                rep.replication, e.n, e.p_ai, e.p_human, v.outcome
            ),
            _ => println!("rep {}: no wrong answers", rep.replication),
        }
    }
    for note in &run.report.notes {
        println!("note: {note}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
