//! Inputs shared by the benchmarks.

use recname::graph::GraphConfig;
use recname::model::{prepare, EncoderKind, Model, ModelConfig, Prepared};
use recname::pipeline::{gen_corpus, vocabulary_corpus};
use recname::subtok::{train_segmenter, SpecialSet, Vocabulary};
use recname::CorpusEntry;

pub fn corpus(functions: usize) -> Vec<CorpusEntry> {
    gen_corpus(10, functions, 1).expect("synthetic corpus").entries
}

pub fn vocabulary(entries: &[CorpusEntry]) -> Vocabulary {
    train_segmenter(&vocabulary_corpus(entries), 4096, &SpecialSet::default()).expect("vocabulary")
}

/// A model at the default sizes, plus prepared inputs for `entries`.
pub fn model(entries: &[CorpusEntry], vocab: &Vocabulary, encoders: EncoderKind) -> (Model, Vec<Prepared>) {
    let model = Model::new(ModelConfig::default(), encoders, vocab, 1).expect("model");
    let inputs = entries
        .iter()
        .map(|e| prepare(e, vocab, GraphConfig::default()).expect("prepared entry"))
        .collect();
    (model, inputs)
}
