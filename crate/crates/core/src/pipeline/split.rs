use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::align::CorpusEntry;

use super::{write_corpus, PipelineError};

/// Train/dev/test fractions; binaries are the unit of assignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitSpec {
    /// Normalizes three non-negative weights to fractions.
    pub fn from_ratios(train: f64, dev: f64, test: f64) -> Result<Self, PipelineError> {
        let parts = [train, dev, test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(PipelineError::Split(format!("ratios must be non-negative: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if total <= 0.0 || train <= 0.0 {
            return Err(PipelineError::Split("the training share must be positive".into()));
        }
        Ok(SplitSpec {
            train: train / total,
            dev: dev / total,
            test: test / total,
        })
    }
}

impl FromStr for SplitSpec {
    type Err = PipelineError;

    /// Parses `80,10,10`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PipelineError::Split(format!("{s:?}: {e}")))?;
        match parts[..] {
            [a, b, c] => SplitSpec::from_ratios(a, b, c),
            _ => Err(PipelineError::Split(format!("expected three ratios, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<CorpusEntry>,
    pub dev: Vec<CorpusEntry>,
    pub test: Vec<CorpusEntry>,
}

impl Splits {
    /// Writes `train.jsonl`, `dev.jsonl` and `test.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<[PathBuf; 3], PipelineError> {
        std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
        let paths = [dir.join("train.jsonl"), dir.join("dev.jsonl"), dir.join("test.jsonl")];
        for (path, part) in paths.iter().zip([&self.train, &self.dev, &self.test]) {
            write_corpus(path, part)?;
        }
        Ok(paths)
    }
}

fn binary_key(seed: u64, binary: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(binary.as_bytes());
    h.finalize().into()
}

/// Splits per binary. Binaries are ordered by a seeded hash of their id and
/// cut into train, dev and test runs; every non-zero share gets at least one
/// binary. Entries keep their corpus order inside each split.
pub fn split(corpus: &[CorpusEntry], spec: SplitSpec, seed: u64) -> Result<Splits, PipelineError> {
    let binaries: BTreeSet<&str> = corpus.iter().map(|e| e.binary.as_str()).collect();
    let mut order: Vec<&str> = binaries.into_iter().collect();
    order.sort_by_cached_key(|b| binary_key(seed, b));
    let n = order.len();
    let share = |f: f64| if f > 0.0 { ((n as f64 * f).round() as usize).max(1) } else { 0 };
    let (n_dev, n_test) = (share(spec.dev), share(spec.test));
    let needed = 1 + usize::from(n_dev > 0) + usize::from(n_test > 0);
    if n < needed || n_dev + n_test >= n {
        return Err(PipelineError::Split(format!(
            "{n} binaries cannot fill {needed} splits"
        )));
    }
    let n_train = n - n_dev - n_test;
    let mut assignment = BTreeMap::new();
    for (i, b) in order.into_iter().enumerate() {
        let part = if i < n_train {
            0
        } else if i < n_train + n_dev {
            1
        } else {
            2
        };
        assignment.insert(b, part);
    }
    let mut out = Splits::default();
    for e in corpus {
        let target = match assignment[e.binary.as_str()] {
            0 => &mut out.train,
            1 => &mut out.dev,
            _ => &mut out.test,
        };
        target.push(e.clone());
    }
    Ok(out)
}
