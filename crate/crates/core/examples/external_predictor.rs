//! Round trip through the exchange files: export requests, answer them with
//! a predictor that only sees the request, import, and run.

use std::path::Path;

use misconception_turing::experiment::{run_scenario, scenario_predictions, scenario_requests, ExperimentConfig, ExternalTables};
use misconception_turing::model::Rule;
use misconception_turing::protocol::{write_jsonl, PredictionRequest, PredictionResponse};

/// Finds the rule that explains the Phase-1 answer and replays it.
fn answer(req: &PredictionRequest) -> PredictionResponse {
    let rule = Rule::ALL
        .into_iter()
        .find(|r| r.apply(&req.phase1_question) == req.phase1_answer)
        .unwrap_or(Rule::L2R);
    PredictionResponse {
        request_id: req.request_id.clone(),
        predicted_wrong_answer: rule.apply(&req.followup_question),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/external.json");
    let r = ExperimentConfig::load(&path)?.resolve(path.parent().unwrap())?;

    let requests = scenario_requests(&r)?;
    let mut first = Vec::new();
    write_jsonl(&requests[..1], &mut first)?;
    print!("{} requests, first:\n{}", requests.len(), String::from_utf8(first)?);

    let responses: Vec<_> = requests.iter().map(answer).collect();
    let mut text = Vec::new();
    write_jsonl(&responses, &mut text)?;
    let table = scenario_predictions(&r, std::str::from_utf8(&text)?)?;

    let run = run_scenario(&r, 0, &ExternalTables { ai: Some(table), human: None })?;
    for rep in &run.report.replications {
        let (e, v) = (rep.estimates.as_ref().unwrap(), rep.verdict.as_ref().unwrap());
        println!("p_ai = {:.3}  p_human = {:.3}  {}", e.p_ai, e.p_human, v.outcome);
    }
    Ok(())
}
