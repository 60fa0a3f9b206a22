//! Why a student-blind distractor cannot beat `max P(m) * (1 - mastery)`,
//! and how far a conditioned one gets past it.

use misconception_turing::model::build_space;
use misconception_turing::predict::{expected_selection_rate, verify_unconditioned_ceiling};

fn main() {
    let space = build_space(&[("L2R", 0.5), ("AddFirst", 0.3), ("SignFlip", 0.2)], 0.1).unwrap();
    for m in space.misconceptions() {
        let rate = expected_selection_rate(m.id, &space).unwrap();
        println!("always target {:<9} -> selection rate {rate:.3}", m.label);
    }
    let c = verify_unconditioned_ceiling(&space);
    let who: Vec<String> = c.achievers.iter().map(|m| m.to_string()).collect();
    println!("ceiling {:.3} reached by {}", c.max_rate, who.join(", "));
    println!("conditioned oracle    -> selection rate {:.3}", 1.0 - space.mastery_rate());
}
