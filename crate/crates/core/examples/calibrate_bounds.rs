//! Monte Carlo check of the student and question bounds.
//!
//!     cargo run --release --example calibrate_bounds

use std::path::Path;

use misconception_turing::experiment::{calibrate_sampling, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/sampling.json");
    let r = ExperimentConfig::load(&path)?.resolve(path.parent().unwrap())?;
    let cal = calibrate_sampling(&r, 0)?;
    println!(
        "k = {}, t = {}, p_min = {}, conf_delta = {}  =>  N = {}, Q = {}",
        cal.k, cal.t, cal.p_min, cal.conf_delta, cal.students_needed, cal.questions_needed
    );
    println!("smallest per-student observation probability {:.4}", cal.min_observation_probability);
    for (what, p) in [("all of S_k observed", cal.observation), ("all of S_k covered", cal.coverage)] {
        println!(
            "{what}: {:.4}  95% [{:.4}, {:.4}]  target {:.2}",
            p.rate, p.low, p.high, cal.target
        );
    }
    Ok(())
}
