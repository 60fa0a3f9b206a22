//! Verdict from outcome counts.
//!
//!     cargo run --example adjudicate_counts -- 180 176 20 24 0 0.1

use misconception_turing::protocol::ChoiceOutcome;
use misconception_turing::stats::{adjudicate, AdjudicationParams, RateEstimates};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let counts = [get(0, 180.0), get(1, 176.0), get(2, 20.0), get(3, 24.0), get(4, 0.0)];
    let kinds = [
        ChoiceOutcome::Ai,
        ChoiceOutcome::Human,
        ChoiceOutcome::Random,
        ChoiceOutcome::Correct,
        ChoiceOutcome::Both,
    ];
    let outcomes: Vec<ChoiceOutcome> = kinds
        .iter()
        .zip(counts)
        .flat_map(|(&k, c)| std::iter::repeat_n(k, c as usize))
        .collect();
    let params = AdjudicationParams { sup_margin: get(5, 0.1), ..Default::default() };

    let est = RateEstimates::from_outcomes(&outcomes).expect("at least one trial");
    let v = adjudicate(&est, &params);
    println!("n = {}  p_ai = {:.4}  p_human = {:.4}  rho = {:.4}  sigma_d^2 = {:.4}", est.n, est.p_ai, est.p_human, est.rho, est.sigma_d_sq);
    for s in [&v.superiority_ai, &v.superiority_human] {
        match s.statistic {
            Some(z) => println!("superiority {:<5}  Z = {z:.3}  p = {:.2e}  pass = {}", s.role, s.p_value, s.pass),
            None => println!("superiority {:<5}  exact p = {:.2e}  pass = {}", s.role, s.p_value, s.pass),
        }
    }
    if let Some(eq) = v.equivalence {
        println!("TOST  lower {:.3}  upper {:.3}  equivalent = {}", eq.lower_statistic, eq.upper_statistic, eq.pass);
    }
    if let Some(m) = est.mcnemar {
        println!("McNemar discordant {}/{}  chi2 = {:?}", m.ai_only, m.human_only, m.chi_square);
    }
    println!("Z_diff = {:.3} vs {:.3}  ->  {}", v.z_diff, v.critical_value, v.outcome);
}
