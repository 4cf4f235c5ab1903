use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{build_corpus_entry, generate_synthetic_pair, template_count, CorpusEntry, CorpusError};

use super::PipelineError;

/// Functions per synthetic binary.
const FUNCTIONS_PER_BINARY: usize = 5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedCorpus {
    pub entries: Vec<CorpusEntry>,
    /// Rejection reason to count.
    pub rejected: BTreeMap<String, usize>,
}

/// Draws `functions` synthetic pairs from the first `templates` templates and
/// aligns each into a corpus entry. Function `f` lives in binary `f / 5`.
pub fn gen_corpus(templates: usize, functions: usize, seed: u64) -> Result<GeneratedCorpus, PipelineError> {
    if templates == 0 || templates > template_count() {
        return Err(PipelineError::Config(format!(
            "templates must be in 1..={}, got {templates}",
            template_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GeneratedCorpus::default();
    for f in 0..functions {
        let template = rng.gen_range(0..templates);
        let pair_seed: u64 = rng.gen();
        let (stripped, debug, _) =
            generate_synthetic_pair(pair_seed, template).map_err(|e| PipelineError::Config(e.to_string()))?;
        let binary = format!("bin{:04}", f / FUNCTIONS_PER_BINARY);
        let function = format!("f{f:05}");
        match build_corpus_entry(&stripped, &debug, &binary, &function) {
            Ok(entry) => out.entries.push(entry),
            Err(CorpusError::Rejected(reason)) => *out.rejected.entry(reason.to_string()).or_default() += 1,
            Err(e) => return Err(PipelineError::Config(e.to_string())),
        }
    }
    out.entries
        .sort_by(|a, b| (&a.binary, &a.function).cmp(&(&b.binary, &b.function)));
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>, PipelineError> {
    let file = File::open(path).map_err(PipelineError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(PipelineError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|source| PipelineError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, entries: &[CorpusEntry]) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(PipelineError::io(path))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        let line = serde_json::to_string(e).expect("corpus entries serialize");
        writeln!(w, "{line}").map_err(PipelineError::io(path))?;
    }
    w.flush().map_err(PipelineError::io(path))
}

/// Texts the subword segmenter learns from: code, developer names, data
/// types, node names and function names.
pub fn vocabulary_corpus(entries: &[CorpusEntry]) -> Vec<String> {
    let mut corpus = Vec::new();
    for e in entries {
        corpus.push(e.tokens.joined());
        corpus.push(e.ast.function().to_string());
        corpus.extend(e.table.values().filter_map(|t| t.dev.clone()));
        for node in e.ast.preorder() {
            corpus.extend(node.dtype.clone());
            corpus.extend(node.name.clone());
        }
    }
    corpus
}

/// Keeps each entry with probability `rate` (seeded); never returns an empty
/// corpus from a non-empty one.
pub fn subsample(entries: &[CorpusEntry], rate: f64, seed: u64) -> Vec<CorpusEntry> {
    if rate >= 1.0 {
        return entries.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A4D_504C_4552_0000);
    let mut out: Vec<CorpusEntry> = entries.iter().filter(|_| rng.gen_bool(rate.max(0.0))).cloned().collect();
    if out.is_empty() && !entries.is_empty() {
        out.push(entries[rng.gen_range(0..entries.len())].clone());
    }
    out
}
