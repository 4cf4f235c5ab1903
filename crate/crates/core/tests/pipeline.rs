mod common;

use std::collections::BTreeSet;

use recname::align::TableEntry;
use recname::ast::{Token, TokenKind, TokenStream};
use recname::model::{EncoderKind, Model, ModelConfig};
use recname::neuro::{AdamConfig, Checkpoint};
use recname::pipeline::*;
use recname::subtok::Vocabulary;
use recname::CorpusEntry;

use common::{loop_entry, synthetic_entries, tiny_config, vocab_for};

fn with_binary(entries: &[CorpusEntry], per_binary: usize) -> Vec<CorpusEntry> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| CorpusEntry {
            binary: format!("bin{}", i / per_binary),
            function: format!("f{i}"),
            ..e.clone()
        })
        .collect()
}

fn options(model: ModelConfig, batch_size: usize) -> TrainOptions {
    TrainOptions {
        model,
        encoders: EncoderKind::Both,
        seed: 3,
        batch_size,
        adam: AdamConfig::default(),
    }
}

#[test]
fn ten_binaries_split_eight_one_one() {
    let corpus = with_binary(&synthetic_entries(30, 0), 3);
    let binaries = |part: &[CorpusEntry]| part.iter().map(|e| e.binary.clone()).collect::<BTreeSet<_>>();
    let spec: SplitSpec = "80,10,10".parse().unwrap();
    let s = split(&corpus, spec, 5).unwrap();
    let (train, dev, test) = (binaries(&s.train), binaries(&s.dev), binaries(&s.test));
    assert_eq!((train.len(), dev.len(), test.len()), (8, 1, 1));
    assert!(train.is_disjoint(&dev) && train.is_disjoint(&test) && dev.is_disjoint(&test));
    assert_eq!(s.train.len() + s.dev.len() + s.test.len(), corpus.len());
    for e in &corpus {
        let n = [&s.train, &s.dev, &s.test].iter().filter(|p| p.contains(e)).count();
        assert_eq!(n, 1);
    }
    assert_eq!(split(&corpus, spec, 5).unwrap(), s);
    assert_ne!(split(&corpus, spec, 6).unwrap(), s, "a different seed should move some binary");
}

#[test]
fn too_few_binaries_is_an_error() {
    let corpus = with_binary(&synthetic_entries(4, 0), 2);
    assert!(matches!(split(&corpus, SplitSpec::default(), 1), Err(PipelineError::Split(_))));
    let no_test = SplitSpec::from_ratios(50.0, 50.0, 0.0).unwrap();
    let s = split(&corpus, no_test, 1).unwrap();
    assert!(s.test.is_empty() && !s.dev.is_empty() && !s.train.is_empty());
    assert!("80,20".parse::<SplitSpec>().is_err());
    assert!("0,50,50".parse::<SplitSpec>().is_err());
}

#[test]
fn cer_examples() {
    assert_eq!(cer("size", "size").unwrap(), 0.0);
    assert_eq!(cer("ret", "buf").unwrap(), 1.0);
    assert_eq!(cer("filename", "fname").unwrap(), 0.375);
    assert_eq!(cer("ab", "abcd").unwrap(), 1.0);
    assert!(matches!(cer("", "x"), Err(PipelineError::EmptyGold)));
}

fn one_token_changed(entry: &CorpusEntry) -> CorpusEntry {
    let mut e = entry.clone();
    let pos = e.tokens.tokens.iter().position(|t| t.kind == TokenKind::Code && t.text == "0").unwrap();
    e.tokens.tokens[pos].text = "1".into();
    e
}

#[test]
fn body_in_train_labels() {
    let base = loop_entry();
    let mut renamed = base.clone();
    renamed.table.get_mut(&1).unwrap().dev = Some("counter".into());
    let train = vec![base.clone()];
    let labels = partition_body_in_train(&[renamed, one_token_changed(&base)], &train);
    assert_eq!(labels, vec![Partition::BodyInTrain, Partition::BodyNotInTrain]);
}

#[test]
fn injected_duplicates_are_counted_exactly() {
    let corpus = synthetic_entries(40, 1000);
    let distinct: Vec<CorpusEntry> = corpus
        .iter()
        .scan(BTreeSet::new(), |seen, e| Some(seen.insert(e.tokens.joined()).then(|| e.clone())))
        .flatten()
        .collect();
    assert!(distinct.len() >= 12);
    let (train, rest) = distinct.split_at(distinct.len() / 2);
    let k = 5;
    let mut test: Vec<CorpusEntry> = rest.to_vec();
    test.extend(train.iter().take(k).cloned());
    let labels = partition_body_in_train(&test, train);
    assert_eq!(labels.iter().filter(|l| **l == Partition::BodyInTrain).count(), k);
}

fn record(gold: &str, predicted: &str, keep: bool, partition: Partition) -> IdentifierRecord {
    IdentifierRecord {
        binary: "b".into(),
        function: "f".into(),
        placeholder: 1,
        gold: gold.into(),
        predicted: predicted.into(),
        keep,
        exact_match: !keep && gold == predicted,
        cer: cer(gold, predicted).unwrap(),
        partition,
    }
}

#[test]
fn two_of_three_names_recovered() {
    let p = Partition::BodyNotInTrain;
    let report = PredictionReport::from_records(vec![
        record("fd", "fd", false, p),
        record("size", "size", false, p),
        record("ret", "buf", false, p),
    ]);
    let overall = report.row("overall").unwrap();
    assert_eq!(overall.identifiers, 3);
    assert!((overall.accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((overall.cer.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(report.row("body-in-train").unwrap().accuracy, None);
    let json = serde_json::to_value(&report).unwrap();
    let names: Vec<&str> = json["rows"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["overall", "body-in-train", "body-not-in-train"]);
    assert_eq!(json["keep_cer_policy"], KEEP_CER_POLICY);
}

/// A combined model whose output layer always prefers `</identity>`.
fn always_keep(vocab: &Vocabulary) -> Model {
    let mut model = Model::new(tiny_config(), EncoderKind::Both, vocab, 1).unwrap();
    for name in ["decoder.blend.w", "decoder.embed"] {
        let id = model.params().id(name).unwrap();
        model.params_mut().get_mut(id).data_mut().fill(0.0);
    }
    let b = model.params().id("decoder.blend.b").unwrap();
    model.params_mut().get_mut(b).data_mut()[0] = 1.0;
    let e = model.params().id("decoder.embed").unwrap();
    model.params_mut().get_mut(e).row_mut(vocab.keep())[0] = 50.0;
    model
}

#[test]
fn keep_predictions_are_misses() {
    let test = synthetic_entries(8, 40);
    let vocab = vocab_for(&test, 200);
    let report = evaluate(&always_keep(&vocab), &vocab, &test, &[], 3).unwrap();
    let named: usize = test.iter().map(|e| e.named_count()).sum();
    assert_eq!(report.records.len(), named);
    assert!(report.records.iter().all(|r| r.keep && !r.exact_match));
    assert_eq!(report.accuracy(), 0.0);
    // CER of a keep is measured against the decompiler name.
    for r in &report.records {
        let entry = test.iter().find(|e| e.function == r.function).unwrap();
        let TableEntry { decomp, .. } = &entry.table[&r.placeholder];
        assert_eq!(&r.predicted, decomp);
        assert_eq!(r.cer, cer(&r.gold, decomp).unwrap());
    }
}

#[test]
fn report_aggregates_match_records() {
    let corpus = synthetic_entries(12, 70);
    let vocab = vocab_for(&corpus, 200);
    let (train, test) = corpus.split_at(6);
    let mut test = test.to_vec();
    test.push(train[0].clone());
    let model = Model::new(tiny_config(), EncoderKind::Both, &vocab, 5).unwrap();
    let report = evaluate(&model, &vocab, &test, train, 2).unwrap();
    for row in &report.rows {
        let chosen: Vec<&IdentifierRecord> = report
            .records
            .iter()
            .filter(|r| match row.name.as_str() {
                "body-in-train" => r.partition == Partition::BodyInTrain,
                "body-not-in-train" => r.partition == Partition::BodyNotInTrain,
                _ => true,
            })
            .collect();
        assert_eq!(row.identifiers, chosen.len());
        let hits = chosen.iter().filter(|r| r.exact_match).count();
        if !chosen.is_empty() {
            assert_eq!(row.accuracy, Some(hits as f64 / chosen.len() as f64));
        }
    }
    let in_train = &report.rows[1];
    assert_eq!(in_train.identifiers, train[0].named_count());
}

#[test]
fn one_example_one_epoch_one_update() {
    let entries = vec![loop_entry()];
    let vocab = vocab_for(&entries, 40);
    let out = train(&entries, &[], &vocab, &options(tiny_config(), 1)).unwrap();
    assert_eq!(out.log.len(), 1);
    assert_eq!(out.log[0].updates, 1);
    assert_eq!(out.log[0].dev_loss, None);
    assert_ne!(out.final_model.params(), Model::new(tiny_config(), EncoderKind::Both, &vocab, 3).unwrap().params());
}

#[test]
fn training_loss_falls_over_sixty_epochs() {
    let corpus = gen_corpus(10, 50, 2).unwrap().entries;
    let vocab = vocab_for(&corpus, 400);
    let model = ModelConfig {
        epochs: 60,
        ..tiny_config()
    };
    let out = train(&corpus, &corpus[..5], &vocab, &options(model, 16)).unwrap();
    assert_eq!(out.log.len(), 60);
    assert_eq!(out.log[59].updates, 60 * 4);
    assert!(out.log[59].train_loss < out.log[0].train_loss);
    let best = out.log.iter().map(|l| l.dev_loss.unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(out.log[out.best_epoch - 1].dev_loss, Some(best));
}

#[test]
fn ablation_arms_drop_an_encoder() {
    let entries = vec![loop_entry()];
    let vocab = vocab_for(&entries, 40);
    for (encoders, absent, present) in [
        (EncoderKind::Lexical, "graph.", "lexical."),
        (EncoderKind::Structural, "lexical.", "graph."),
    ] {
        let opts = TrainOptions {
            encoders,
            ..options(tiny_config(), 1)
        };
        let out = train(&entries, &[], &vocab, &opts).unwrap();
        let model = out.final_model;
        assert!(model.param_group(absent).is_empty());
        assert!(model.param_group("combine").is_empty());
        assert!(!model.param_group(present).is_empty());
    }
}

#[test]
fn divergence_names_the_batch() {
    let entries = synthetic_entries(3, 5);
    let vocab = vocab_for(&entries, 100);
    let opts = TrainOptions {
        adam: AdamConfig {
            lr: f64::INFINITY,
            ..AdamConfig::default()
        },
        ..options(tiny_config(), 1)
    };
    match train(&entries, &[], &vocab, &opts) {
        Err(PipelineError::Divergence { epoch: 1, batch: 1 }) => {}
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training with an infinite step should diverge"),
    }
}

#[test]
fn empty_training_set_is_rejected() {
    let vocab = vocab_for(&[loop_entry()], 40);
    assert!(matches!(
        train(&[], &[], &vocab, &options(tiny_config(), 1)),
        Err(PipelineError::EmptyCorpus(_))
    ));
}

#[test]
fn corpus_generation_is_seeded_and_sorted() {
    let a = gen_corpus(10, 23, 4).unwrap();
    assert_eq!(a, gen_corpus(10, 23, 4).unwrap());
    assert_ne!(a.entries, gen_corpus(10, 23, 5).unwrap().entries);
    let keys: Vec<(String, String)> = a.entries.iter().map(|e| (e.binary.clone(), e.function.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(a.entries.len() + a.rejected.values().sum::<usize>(), 23);
    assert_eq!(keys[0], ("bin0000".to_string(), "f00000".to_string()));
    assert!(a.entries.iter().all(|e| e.binary == format!("bin{:04}", e.function[1..].parse::<usize>().unwrap() / 5)));
    assert!(a.entries.iter().all(|e| e.check_consistency().is_ok()));
    assert!(gen_corpus(0, 5, 1).is_err());
    assert!(gen_corpus(11, 5, 1).is_err());
}

#[test]
fn corpus_file_round_trip_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let entries = gen_corpus(10, 7, 9).unwrap().entries;
    write_corpus(&path, &entries).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), entries);
    let text = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: BTreeSet<&str> = first.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, BTreeSet::from(["binary", "function", "tokens", "ast", "table"]));
    assert!(first["tokens"][0].as_array().unwrap().iter().all(|v| v.is_string()));
    let row = &first["table"]["1"];
    assert!(row["decomp"].is_string() && (row["dev"].is_string() || row["dev"].is_null()));

    std::fs::write(&path, format!("{}\nnot json\n", text.lines().next().unwrap())).unwrap();
    match read_corpus(&path) {
        Err(PipelineError::Json { line: 2, .. }) => {}
        other => panic!("expected a line-2 parse error, got {other:?}"),
    }
}

#[test]
fn subsample_keeps_a_seeded_fraction() {
    let corpus = synthetic_entries(40, 0);
    assert_eq!(subsample(&corpus, 1.0, 1), corpus);
    let half = subsample(&corpus, 0.5, 1);
    assert_eq!(half, subsample(&corpus, 0.5, 1));
    assert!(half.len() > 5 && half.len() < 35);
    assert!(half.iter().all(|e| corpus.contains(e)));
    assert_eq!(subsample(&corpus, 1e-9, 1).len(), 1);
}

#[test]
fn train_config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen_corpus(10, 20, 3).unwrap().entries;
    let parts = split(&corpus, SplitSpec::default(), 3).unwrap();
    parts.write(&dir.path().join("data")).unwrap();
    let config_path = dir.path().join("train.toml");
    std::fs::write(
        &config_path,
        r#"
train = "data/train.jsonl"
dev = "data/dev.jsonl"
out_dir = "run"
vocab_size = 300
seed = 4
batch_size = 8
encoder = "structural"

[model]
embed_dim = 6
encoder_hidden = 8
decoder_hidden = 10
ggnn_steps = 2
epochs = 2
"#,
    )
    .unwrap();
    let config = TrainConfig::load(&config_path).unwrap();
    assert_eq!(config.encoder, EncoderKind::Structural);
    assert_eq!(config.model.recurrent_layers, 2);
    assert_eq!(config.train, dir.path().join("data/train.jsonl"));
    let summary = run_training(&config).unwrap();
    assert_eq!(summary.train_entries, parts.train.len());
    let run = dir.path().join("run");
    let log = std::fs::read_to_string(run.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let vocab = Vocabulary::load(&run.join("vocab.json")).unwrap();
    let ck = Checkpoint::load(&run.join("final.json")).unwrap();
    let model = Model::from_checkpoint(&ck, &vocab).unwrap();
    assert_eq!(model.encoders(), EncoderKind::Structural);
    assert_eq!(ck.meta["epoch"], 2);
    let other = vocab_for(&[loop_entry()], 30);
    assert!(Model::from_checkpoint(&ck, &other).is_err());

    std::fs::write(&config_path, "train = \"a\"\nout_dir = \"b\"\nbogus = 1\n").unwrap();
    assert!(matches!(TrainConfig::load(&config_path), Err(PipelineError::Toml { .. })));
}

#[test]
fn loop_fixture_renders_to_golden_tokens() {
    let golden = include_str!("fixtures/loop_tokens.txt").trim();
    let entry = loop_entry();
    assert_eq!(entry.tokens.joined(), golden);
    let placeholders: Vec<&Token> = entry.tokens.tokens.iter().filter(|t| t.kind == TokenKind::Placeholder).collect();
    assert_eq!(placeholders.len(), 5);
    let _: &TokenStream = &entry.tokens;
}
