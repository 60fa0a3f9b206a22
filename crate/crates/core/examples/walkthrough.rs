//! The order-of-operations walkthrough: one student, one Phase-1 mistake,
//! one conditioned follow-up.
//!
//!     cargo run --example walkthrough

use misconception_turing::model::{arith_question, build_space, ArithExpr, MisconceptionId, StudentId, StudentProfile};
use misconception_turing::predict::{predict_distractor, PredictionInput, PredictorSpec};
use misconception_turing::protocol::{assemble_mcq, Phase1Record};
use misconception_turing::rng::stream;
use misconception_turing::simulate::{choose_mcq, BehaviorParams};

fn main() {
    let space = build_space(&[("L2R", 0.5), ("AddFirst", 0.3), ("SignFlip", 0.2)], 0.1).unwrap();
    let all: Vec<_> = space.ids().collect();

    let q = arith_question(&space, "q1", ArithExpr::new(1, 2, 3, 4), &all).unwrap();
    println!("Phase 1: {}  correct {}", q.payload, q.correct_answer);
    for m in space.misconceptions() {
        println!("  {:<9} -> {}", m.label, q.answer_map[&m.id]);
    }

    // A left-to-right student answers 13.
    let student = StudentProfile {
        id: StudentId(1),
        held: Some(MisconceptionId(1)),
        behavior: BehaviorParams::deterministic(),
    };
    let record = Phase1Record { student_id: student.id, question_id: q.id.clone(), given_answer: 13 };

    let f = arith_question(&space, "q1-f", ArithExpr::new(3, 4, 3, 7), &all).unwrap();
    let input = PredictionInput { request_id: "demo", record: &record, question: &q, followup: &f };
    let mut rng = stream(1, &[]);
    let ai = predict_distractor(&PredictorSpec::ConditionedOracle, &space, None, input, &mut rng).unwrap();
    let human = predict_distractor(&PredictorSpec::UnconditionedMode, &space, None, input, &mut rng).unwrap();
    let mcq = assemble_mcq(&f, ai, human, &mut rng).unwrap();

    println!("\nPhase 2: {}  correct {}", f.payload, f.correct_answer);
    for opt in mcq.displayed() {
        println!("  [{:>3}] {}", opt.content, opt.provenance);
    }
    println!("student picks: {}", choose_mcq(&student, &mcq, &f, &mut rng));
}
