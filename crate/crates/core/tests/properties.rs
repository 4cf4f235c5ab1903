mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use recname::align::{build_corpus_entry, generate_synthetic_pair, template_count};
use recname::ast::{parse_ast, render_tokens, serialize_ast};
use recname::graph::{build_graph, EdgeType};
use recname::neuro::{ParamStore, Tape, Tensor};
use recname::pipeline::{cer, levenshtein, split, SplitSpec};
use recname::subtok::{train_segmenter, SpecialSet};

use common::{levenshtein_recursive, preorder_ids, synthetic_entries};

fn name() -> impl Strategy<Value = String> {
    "[a-zA-Z_]{1,12}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cer_identity_and_empty(g in name()) {
        prop_assert_eq!(cer(&g, &g).unwrap(), 0.0);
        prop_assert_eq!(cer(&g, "").unwrap(), 1.0);
    }

    #[test]
    fn levenshtein_is_a_metric(a in "[ab]{0,6}", b in "[ab]{0,6}", c in "[ab]{0,6}") {
        let d = levenshtein(&a, &b);
        prop_assert_eq!(d, levenshtein(&b, &a));
        prop_assert!(levenshtein(&a, &c) <= d + levenshtein(&b, &c));
        prop_assert_eq!(d == 0, a == b);
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        prop_assert_eq!(d, levenshtein_recursive(&ac, &bc));
    }

    #[test]
    fn cer_denominator_is_gold_length(g in name(), p in name()) {
        let c = cer(&g, &p).unwrap();
        prop_assert_eq!(c * g.chars().count() as f64, levenshtein(&g, &p) as f64);
        prop_assert_eq!(levenshtein(&g, &p), levenshtein(&p, &g));
    }

    #[test]
    fn segmentation_round_trips(words in prop::collection::vec(name(), 1..20), size in 52usize..200) {
        let vocab = train_segmenter(&words, size, &SpecialSet::default());
        let Ok(vocab) = vocab else {
            // Fewer slots than distinct characters.
            return Ok(());
        };
        prop_assert!(vocab.subtoken_count() <= size);
        for w in &words {
            let ids = vocab.encode_text(w);
            prop_assert!(!ids.contains(&vocab.unk()));
            prop_assert_eq!(&vocab.decode(&ids).unwrap(), w);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::new(rows, cols, data).unwrap());
        let y = tape.softmax_rows(x);
        for r in 0..rows {
            let row = tape.value(y).row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_partitions_by_binary(per_binary in 1usize..4, seed in any::<u64>()) {
        let corpus: Vec<_> = synthetic_entries(24, 0)
            .into_iter()
            .enumerate()
            .map(|(i, e)| recname::CorpusEntry { binary: format!("b{}", i / per_binary), ..e })
            .collect();
        let s = split(&corpus, SplitSpec::default(), seed).unwrap();
        prop_assert_eq!(s.train.len() + s.dev.len() + s.test.len(), corpus.len());
        let bins = |p: &[recname::CorpusEntry]| p.iter().map(|e| e.binary.clone()).collect::<BTreeSet<_>>();
        prop_assert!(bins(&s.train).is_disjoint(&bins(&s.dev)));
        prop_assert!(bins(&s.train).is_disjoint(&bins(&s.test)));
        prop_assert!(bins(&s.dev).is_disjoint(&bins(&s.test)));
        prop_assert!(!s.dev.is_empty() && !s.test.is_empty());
    }

    #[test]
    fn synthetic_pairs_survive_serialization_and_relabeling(seed in any::<u64>(), template in 0..template_count(), shift in 1usize..50) {
        let (stripped, debug, _) = generate_synthetic_pair(seed, template).unwrap();
        for ast in [&stripped, &debug] {
            prop_assert_eq!(&parse_ast(&serialize_ast(ast)).unwrap(), ast);
            let mut ids = Vec::new();
            preorder_ids(ast.root(), &mut ids);
            let walked: Vec<usize> = ast.preorder().map(|n| n.id).collect();
            prop_assert_eq!(&walked, &ids);
        }
        let n = stripped.node_count();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let relabeled = stripped.relabel(&perm).unwrap();
        prop_assert_eq!(render_tokens(&relabeled).unwrap(), render_tokens(&stripped).unwrap());
        if let Ok(entry) = build_corpus_entry(&stripped, &debug, "b", "f") {
            prop_assert!(entry.check_consistency().is_ok());
            let graph = build_graph(&entry.ast);
            for ty in EdgeType::all() {
                prop_assert_eq!(graph.count_edges(ty), graph.count_edges(ty.twin()));
            }
            prop_assert_eq!(graph.identifiers().len(), entry.table.len());
        }
    }
}
