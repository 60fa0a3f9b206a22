//! Flat CSV form of the trial ledger.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::protocol::{ChoiceOutcome, TrialLedger};
use crate::{Error, Result};

pub const LEDGER_COLUMNS: [&str; 10] = [
    "trial_id",
    "replication",
    "student_id",
    "phase1_question_id",
    "phase1_answer",
    "inferred_misconception",
    "followup_question_id",
    "display_order",
    "choice_outcome",
    "tie_flag",
];

/// One ledger line. `display_order` lists option provenances top to bottom,
/// separated by `|`; `inferred_misconception` is empty when inference failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub trial_id: u64,
    pub replication: u64,
    pub student_id: String,
    pub phase1_question_id: String,
    pub phase1_answer: i64,
    pub inferred_misconception: String,
    pub followup_question_id: String,
    pub display_order: String,
    pub choice_outcome: String,
    pub tie_flag: bool,
}

impl LedgerRow {
    pub fn outcome(&self) -> Result<ChoiceOutcome> {
        self.choice_outcome.parse().map_err(|_| {
            Error::Config(format!(
                "trial {} of replication {}: unknown choice_outcome `{}`",
                self.trial_id, self.replication, self.choice_outcome
            ))
        })
    }
}

pub fn ledger_rows(ledger: &TrialLedger) -> impl Iterator<Item = LedgerRow> + '_ {
    ledger.trials.iter().map(|t| LedgerRow {
        trial_id: t.trial_id,
        replication: t.replication,
        student_id: t.source_record.student_id.to_string(),
        phase1_question_id: t.source_record.question_id.clone(),
        phase1_answer: t.source_record.given_answer,
        inferred_misconception: t
            .inferred_misconception
            .map(|m| m.to_string())
            .unwrap_or_default(),
        followup_question_id: t.followup_question_id.clone(),
        display_order: t
            .mcq
            .displayed()
            .map(|o| o.provenance.as_str())
            .collect::<Vec<_>>()
            .join("|"),
        choice_outcome: t.choice.map(|c| c.as_str().to_string()).unwrap_or_default(),
        tie_flag: t.tie_flag(),
    })
}

/// Writes all ledgers under a single header.
pub fn write_ledger_csv<W: Write>(ledgers: &[TrialLedger], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(LEDGER_COLUMNS)?;
    for ledger in ledgers {
        for row in ledger_rows(ledger) {
            w.serialize(row)?;
        }
    }
    w.flush().map_err(|e| Error::io("ledger.csv", e))?;
    Ok(())
}

pub fn read_ledger_csv<R: Read>(input: R) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != LEDGER_COLUMNS {
        return Err(Error::Config(format!(
            "ledger header {header:?} differs from {LEDGER_COLUMNS:?}"
        )));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
