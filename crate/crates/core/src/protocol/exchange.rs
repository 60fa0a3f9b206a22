//! Line-delimited JSON exchange with external predictors.
//!
//! Requests carry the Phase-1 observation and the follow-up payload. The
//! follow-up's correct answer is only present as a salted SHA-256 digest:
//! the importer, which knows the salt, can reject predictions equal to the
//! correct answer, while a predictor cannot look the answer up.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{request_id, Phase1Record, ProtocolError};
use crate::model::{ArithExpr, Question, StudentId};
use crate::predict::PredictionTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRequest {
    pub request_id: String,
    pub student_id: StudentId,
    pub phase1_question: ArithExpr,
    pub phase1_answer: i64,
    pub followup_question: ArithExpr,
    pub correct_answer_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionResponse {
    pub request_id: String,
    pub predicted_wrong_answer: i64,
}

/// Hex SHA-256 of `"{salt:016x}:{request_id}:{value}"`.
pub fn answer_hash(salt: u64, request_id: &str, value: i64) -> String {
    let digest = Sha256::digest(format!("{salt:016x}:{request_id}:{value}").as_bytes());
    hex::encode(digest)
}

/// One request per record; `followups[i]` must be the follow-up of `records[i]`.
pub fn export_requests(
    records: &[Phase1Record],
    questions: &[Question],
    followups: &[Question],
    replication: u64,
    salt: u64,
) -> Result<Vec<PredictionRequest>, ProtocolError> {
    assert_eq!(records.len(), followups.len(), "one follow-up per record");
    records
        .iter()
        .zip(followups)
        .enumerate()
        .map(|(i, (record, followup))| {
            let q = questions
                .iter()
                .find(|q| q.id == record.question_id)
                .ok_or_else(|| ProtocolError::UnknownQuestion(record.question_id.clone()))?;
            let id = request_id(replication, i);
            Ok(PredictionRequest {
                correct_answer_hash: answer_hash(salt, &id, followup.correct_answer),
                request_id: id,
                student_id: record.student_id,
                phase1_question: q.payload,
                phase1_answer: record.given_answer,
                followup_question: followup.payload,
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses one JSON value per non-blank line; line numbers are 1-based.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>, ProtocolError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ProtocolError::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| ProtocolError::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn parse_requests(text: &str) -> Result<Vec<PredictionRequest>, ProtocolError> {
    read_jsonl(text.as_bytes())
}

/// Validates a response file against the requests it answers: every request
/// needs exactly one prediction, and no prediction may hash to the correct answer.
pub fn import_predictions(
    requests: &[PredictionRequest],
    responses: &str,
    salt: u64,
) -> Result<PredictionTable, ProtocolError> {
    let known: BTreeSet<&str> = requests.iter().map(|r| r.request_id.as_str()).collect();
    let mut table = PredictionTable::new();
    for response in read_jsonl::<PredictionResponse, _>(responses.as_bytes())? {
        if !known.contains(response.request_id.as_str()) {
            return Err(ProtocolError::UnknownRequest(response.request_id));
        }
        if table
            .insert(response.request_id.clone(), response.predicted_wrong_answer)
            .is_some()
        {
            return Err(ProtocolError::DuplicateResponse(response.request_id));
        }
    }
    for request in requests {
        let value = *table
            .get(&request.request_id)
            .ok_or_else(|| ProtocolError::MissingPrediction(request.request_id.clone()))?;
        if answer_hash(salt, &request.request_id, value) == request.correct_answer_hash {
            return Err(ProtocolError::PredictedCorrectExternal {
                request_id: request.request_id.clone(),
            });
        }
    }
    Ok(table)
}
