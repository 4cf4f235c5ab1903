use serde::{Deserialize, Serialize};

use crate::align::CorpusEntry;
use crate::graph::GraphConfig;
use crate::model::{beam_decode, prepare, Model};
use crate::subtok::Vocabulary;

use super::{cer, partition_body_in_train, Partition, PipelineError};

/// How CER treats a `</identity>` prediction.
pub const KEEP_CER_POLICY: &str = "keep predictions are scored for CER against the decompiler name";

/// One evaluated identifier: only variables with a developer name appear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifierRecord {
    pub binary: String,
    pub function: String,
    pub placeholder: usize,
    pub gold: String,
    /// Predicted name; the decompiler name when `keep` is set.
    pub predicted: String,
    pub keep: bool,
    pub exact_match: bool,
    pub cer: f64,
    pub partition: Partition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub identifiers: usize,
    /// `None` when the row has no identifiers.
    pub accuracy: Option<f64>,
    pub cer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    /// `overall`, `body-in-train`, `body-not-in-train`.
    pub rows: Vec<ReportRow>,
    pub keep_cer_policy: String,
    pub records: Vec<IdentifierRecord>,
}

impl PredictionReport {
    pub fn from_records(records: Vec<IdentifierRecord>) -> Self {
        let row = |name: &str, filter: &dyn Fn(&IdentifierRecord) -> bool| {
            let chosen: Vec<&IdentifierRecord> = records.iter().filter(|r| filter(r)).collect();
            let n = chosen.len();
            let mean = |v: f64| (n > 0).then(|| v / n as f64);
            ReportRow {
                name: name.to_string(),
                identifiers: n,
                accuracy: mean(chosen.iter().filter(|r| r.exact_match).count() as f64),
                cer: mean(chosen.iter().map(|r| r.cer).sum()),
            }
        };
        let rows = vec![
            row("overall", &|_| true),
            row("body-in-train", &|r| r.partition == Partition::BodyInTrain),
            row("body-not-in-train", &|r| r.partition == Partition::BodyNotInTrain),
        ];
        PredictionReport {
            rows,
            keep_cer_policy: KEEP_CER_POLICY.to_string(),
            records,
        }
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn accuracy(&self) -> f64 {
        self.rows[0].accuracy.unwrap_or(0.0)
    }
}

/// Beam-decodes every test entry and scores identifiers that have a
/// developer name. A `keep` prediction is always a miss.
pub fn evaluate(
    model: &Model,
    vocab: &Vocabulary,
    test: &[CorpusEntry],
    train: &[CorpusEntry],
    beam_width: usize,
) -> Result<PredictionReport, PipelineError> {
    let partitions = partition_body_in_train(test, train);
    let mut records = Vec::new();
    for (entry, partition) in test.iter().zip(partitions) {
        let input = prepare(entry, vocab, GraphConfig::default())?;
        let predictions = beam_decode(model, vocab, &input, beam_width)?;
        for p in predictions {
            let row = &entry.table[&p.placeholder];
            let Some(gold) = &row.dev else { continue };
            records.push(IdentifierRecord {
                binary: entry.binary.clone(),
                function: entry.function.clone(),
                placeholder: p.placeholder,
                gold: gold.clone(),
                exact_match: !p.keep && p.name == *gold,
                cer: cer(gold, &p.name)?,
                predicted: p.name,
                keep: p.keep,
                partition,
            });
        }
    }
    Ok(PredictionReport::from_records(records))
}
