//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod ops;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use recname::align::{build_corpus_entry, generate_synthetic_pair, template_count, CorpusEntry};
use recname::ast::fixtures::{loop_with_debug_info, loop_without_debug_info};
use recname::ast::{Ast, AstNode, SyntacticType};
use recname::graph::GraphConfig;
use recname::model::{prepare, EncoderKind, Model, ModelConfig};
use recname::neuro::{ParamStore, Tape, Tensor, Var};
use recname::pipeline::vocabulary_corpus;
use recname::subtok::{train_segmenter, SpecialSet, Vocabulary};

pub const FD_EPSILON: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;

/// A scalar function of the parameters in `store`.
pub struct Instance {
    pub store: ParamStore,
    pub loss: Box<dyn Fn(&mut Tape) -> Var>,
}

fn evaluate(store: &ParamStore, loss: &dyn Fn(&mut Tape) -> Var) -> f64 {
    let mut tape = Tape::new(store);
    let l = loss(&mut tape);
    tape.value(l).item()
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between the tape's
/// gradient and central differences, over every scalar parameter or over
/// the sampled `(param index, offset)` coordinates.
pub fn gradient_error(instance: &Instance, coords: Option<&[(usize, usize)]>) -> f64 {
    let store = &instance.store;
    let analytic = {
        let mut tape = Tape::new(store);
        let l = (instance.loss)(&mut tape);
        tape.backward(l).expect("scalar loss")
    };
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = ids
                .iter()
                .enumerate()
                .flat_map(|(p, &id)| (0..store.get(id).data().len()).map(move |k| (p, k)))
                .collect();
            &all
        }
    };
    let mut work = store.clone();
    let (mut diff, mut a_norm, mut n_norm) = (0.0, 0.0, 0.0);
    for &(p, k) in coords {
        let id = ids[p];
        let a = analytic.dense(id, store).data()[k];
        let x = store.get(id).data()[k];
        work.get_mut(id).data_mut()[k] = x + FD_EPSILON;
        let plus = evaluate(&work, &*instance.loss);
        work.get_mut(id).data_mut()[k] = x - FD_EPSILON;
        let minus = evaluate(&work, &*instance.loss);
        work.get_mut(id).data_mut()[k] = x;
        let n = (plus - minus) / (2.0 * FD_EPSILON);
        diff += (a - n) * (a - n);
        a_norm += a * a;
        n_norm += n * n;
    }
    diff.sqrt() / a_norm.sqrt().max(n_norm.sqrt()).max(1e-12)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// `Σ v ⊙ r` for a fixed random `r`, so every output coordinate matters.
pub fn weighted_sum(tape: &mut Tape, v: Var, r: &Tensor) -> Var {
    let rv = tape.input(r.clone());
    let p = tape.mul(v, rv).unwrap();
    tape.sum(p)
}

/// Plain recursive edit distance, exponential and obviously correct.
pub fn levenshtein_recursive(a: &[char], b: &[char]) -> usize {
    match (a, b) {
        ([], _) => b.len(),
        (_, []) => a.len(),
        ([x, ra @ ..], [y, rb @ ..]) => {
            let sub = levenshtein_recursive(ra, rb) + usize::from(x != y);
            let del = levenshtein_recursive(ra, b) + 1;
            let ins = levenshtein_recursive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// All strings over `alphabet` of length `0..=max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn collect_accesses(node: &AstNode, out: &mut BTreeMap<String, BTreeSet<u64>>) {
    if node.kind == SyntacticType::Var {
        out.entry(node.name.clone().unwrap()).or_default().insert(node.addr);
    }
    for c in &node.children {
        collect_accesses(c, out);
    }
}

/// Expected alignment by exhaustive comparison: a stripped variable is named
/// iff exactly one variable on each side has its offset set; it is skipped
/// iff its set is shared on either side, unless it is a lone temporary.
pub fn brute_force_alignment(stripped: &Ast, debug: &Ast) -> (BTreeMap<String, String>, BTreeSet<String>) {
    let mut left = BTreeMap::new();
    collect_accesses(stripped.root(), &mut left);
    let mut right = BTreeMap::new();
    collect_accesses(debug.root(), &mut right);
    let mut mapping = BTreeMap::new();
    let mut skipped = BTreeSet::new();
    for (name, sig) in &left {
        let peers = left.values().filter(|s| *s == sig).count();
        let partners: Vec<&String> = right.iter().filter(|(_, s)| *s == sig).map(|(n, _)| n).collect();
        match (peers, partners.len()) {
            (1, 1) => {
                mapping.insert(name.clone(), partners[0].clone());
            }
            (1, 0) => {}
            _ => {
                skipped.insert(name.clone());
            }
        }
    }
    (mapping, skipped)
}

/// Preorder of node ids by explicit recursion.
pub fn preorder_ids(node: &AstNode, out: &mut Vec<usize>) {
    out.push(node.id);
    for c in &node.children {
        preorder_ids(c, out);
    }
}

pub fn loop_entry() -> CorpusEntry {
    build_corpus_entry(&loop_without_debug_info(), &loop_with_debug_info(), "bin", "loop").unwrap()
}

/// Aligned synthetic entries cycling through every template.
pub fn synthetic_entries(n: usize, seed: u64) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    let mut s = seed;
    while out.len() < n {
        let (a, b, _) = generate_synthetic_pair(s, s as usize % template_count()).unwrap();
        if let Ok(e) = build_corpus_entry(&a, &b, &format!("b{}", s / 5), &format!("f{s}")) {
            out.push(e);
        }
        s += 1;
    }
    out
}

pub fn vocab_for(entries: &[CorpusEntry], size: usize) -> Vocabulary {
    train_segmenter(&vocabulary_corpus(entries), size, &SpecialSet::default()).unwrap()
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 6,
        encoder_hidden: 8,
        decoder_hidden: 10,
        recurrent_layers: 2,
        ggnn_steps: 2,
        beam_width: 5,
        epochs: 1,
        intermediate_weight: 0.1,
    }
}

/// Full decoding loss of a small combined model on the two-identifier loop
/// entry, as a function of every model parameter.
pub fn decode_loss_instance(seed: u64) -> Instance {
    let entry = loop_entry();
    let vocab = vocab_for(std::slice::from_ref(&entry), 30);
    let config = ModelConfig {
        embed_dim: 4,
        encoder_hidden: 4,
        decoder_hidden: 6,
        ggnn_steps: 2,
        ..tiny_config()
    };
    let model = Model::new(config, EncoderKind::Both, &vocab, seed).unwrap();
    let input = prepare(&entry, &vocab, GraphConfig::default()).unwrap();
    assert_eq!(input.gold.len(), 2);
    Instance {
        store: model.params().clone(),
        loss: Box::new(move |t| model.loss(t, &input).unwrap()),
    }
}
