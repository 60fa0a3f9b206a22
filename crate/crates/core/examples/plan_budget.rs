//! How many students, questions and Phase-2 responses a study needs.
//!
//!     cargo run --example plan_budget -- 10 2 0.05 0.05

use misconception_turing::plan::PlanParams;
use misconception_turing::stats::{required_n_equiv, required_n_sup};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.into());
    let params = PlanParams {
        k: arg(0, "10").parse().expect("k"),
        t: arg(1, "2").parse().expect("t"),
        p_min: arg(2, "0.05").parse().expect("p_min"),
        conf_delta: arg(3, "0.05").parse().expect("conf_delta"),
    };
    let s = params.summary().unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1)
    });
    println!("{params:?}");
    println!("students  N = {}", s.students_needed);
    println!("questions Q = {}", s.questions_needed);
    println!("budget  N*Q = {}", s.total_responses);

    // What the Phase-2 test itself needs at the usual margins.
    let n1 = required_n_equiv(0.6, 0.1, 0.05);
    let n2 = required_n_sup(0.1, 0.05);
    println!("n1 = {n1} (equivalence, sigma_d^2 = 0.6), n2 = {n2} (superiority)");
    println!("budget covers max(n1, n2): {}", s.total_responses >= n1.max(n2));
}
