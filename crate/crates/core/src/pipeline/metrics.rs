use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::align::CorpusEntry;

use super::PipelineError;

/// Unit-cost edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character error rate: edit distance divided by the gold name's length.
pub fn cer(gold: &str, predicted: &str) -> Result<f64, PipelineError> {
    let len = gold.chars().count();
    if len == 0 {
        return Err(PipelineError::EmptyGold);
    }
    Ok(levenshtein(gold, predicted) as f64 / len as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    BodyInTrain,
    BodyNotInTrain,
}

/// Labels each test entry by whether its placeholder token stream occurs
/// verbatim in the training corpus.
pub fn partition_body_in_train(test: &[CorpusEntry], train: &[CorpusEntry]) -> Vec<Partition> {
    let seen: HashSet<String> = train.iter().map(|e| e.tokens.joined()).collect();
    test.iter()
        .map(|e| {
            if seen.contains(&e.tokens.joined()) {
                Partition::BodyInTrain
            } else {
                Partition::BodyNotInTrain
            }
        })
        .collect()
}
