use std::collections::BTreeMap;

use crate::align::CorpusEntry;
use crate::ast::{placeholder_index, TokenKind};
use crate::graph::{build_graph_with, CodeGraph, EdgeType, GraphConfig, Vertex, VertexId};
use crate::subtok::{TokenId, Vocabulary};

use super::{supernode_type_slot, ModelError};

/// Target subtokens for one identifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldName {
    /// Subtokens followed by `</i>`, or the single token `</identity>`.
    pub tokens: Vec<TokenId>,
    /// Decompiler temporary: no developer name exists.
    pub intermediate: bool,
}

/// Graph features in canonical order (AST preorder, then supernodes).
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    /// Type-embedding row per vertex.
    pub types: Vec<usize>,
    /// Data-type subtokens per vertex (empty: no data type).
    pub dtypes: Vec<Vec<TokenId>>,
    /// Name subtokens per vertex (empty: no name).
    pub names: Vec<Vec<TokenId>>,
    /// For each vertex, rows `src · 8 + edge_type` of incoming messages.
    pub incoming: Vec<Vec<usize>>,
    /// Original vertex id at each canonical position.
    pub vertex_ids: Vec<VertexId>,
    /// Placeholder number to canonical position of its supernode.
    pub supernodes: BTreeMap<usize, usize>,
}

/// Everything the network reads from one corpus entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub subtokens: Vec<TokenId>,
    /// Placeholder number to subtoken positions of its mentions.
    pub mentions: BTreeMap<usize, Vec<usize>>,
    pub graph: GraphInput,
    /// One per identifier, placeholder order.
    pub gold: Vec<GoldName>,
    /// Placeholder number to decompiler name.
    pub decomp: BTreeMap<usize, String>,
}

fn encode_words(vocab: &Vocabulary, text: &str) -> Vec<TokenId> {
    text.split_whitespace()
        .flat_map(|w| {
            let kind = if placeholder_index(w).is_some() {
                TokenKind::Placeholder
            } else {
                TokenKind::Code
            };
            vocab.encode(w, kind)
        })
        .collect()
}

pub fn graph_input(graph: &CodeGraph, vocab: &Vocabulary) -> Result<GraphInput, ModelError> {
    let order = graph.canonical_order();
    let mut position = vec![0; graph.vertex_count()];
    for (pos, &v) in order.iter().enumerate() {
        position[v] = pos;
    }
    let mut types = Vec::with_capacity(order.len());
    let mut dtypes = Vec::with_capacity(order.len());
    let mut names = Vec::with_capacity(order.len());
    for &v in order {
        match graph.vertex(v).expect("canonical order lists vertices") {
            Vertex::Node { kind, dtype, name } => {
                types.push(kind.index());
                dtypes.push(dtype.as_deref().map(|d| encode_words(vocab, d)).unwrap_or_default());
                names.push(name.as_deref().map(|n| encode_words(vocab, n)).unwrap_or_default());
            }
            Vertex::Supernode { identifier } => {
                types.push(supernode_type_slot());
                dtypes.push(Vec::new());
                names.push(vocab.encode(identifier, TokenKind::Placeholder));
            }
        }
    }
    let mut incoming = vec![Vec::new(); order.len()];
    for e in graph.edges() {
        incoming[position[e.dst]].push(position[e.src] * EdgeType::COUNT + e.ty.index());
    }
    let mut supernodes = BTreeMap::new();
    for (name, &v) in graph.identifier_supernode() {
        let k = placeholder_index(name).ok_or_else(|| ModelError::NotPlaceholder(name.clone()))?;
        supernodes.insert(k, position[v]);
    }
    Ok(GraphInput {
        types,
        dtypes,
        names,
        incoming,
        vertex_ids: order.to_vec(),
        supernodes,
    })
}

/// Decoder targets: developer names spelled in subtokens and closed by
/// `</i>`; temporaries get the lone `</identity>`.
pub fn gold_names(entry: &CorpusEntry, vocab: &Vocabulary) -> Vec<GoldName> {
    entry
        .table
        .values()
        .map(|e| match &e.dev {
            Some(name) => {
                let mut tokens = vocab.encode_text(name);
                tokens.push(vocab.end_name());
                GoldName {
                    tokens,
                    intermediate: false,
                }
            }
            None => GoldName {
                tokens: vec![vocab.keep()],
                intermediate: true,
            },
        })
        .collect()
}

pub fn prepare(entry: &CorpusEntry, vocab: &Vocabulary, graph_config: GraphConfig) -> Result<Prepared, ModelError> {
    let mut subtokens = Vec::new();
    let mut mentions: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for token in &entry.tokens.tokens {
        if token.kind == TokenKind::Placeholder {
            let k = placeholder_index(&token.text).ok_or_else(|| ModelError::NotPlaceholder(token.text.clone()))?;
            mentions.entry(k).or_default().push(subtokens.len());
        }
        subtokens.extend(vocab.encode(&token.text, token.kind));
    }
    if subtokens.is_empty() {
        return Err(ModelError::EmptyTokens);
    }
    let graph = graph_input(&build_graph_with(&entry.ast, graph_config), vocab)?;
    let table_ids: Vec<usize> = entry.table.keys().copied().collect();
    let lexical_ids: Vec<usize> = mentions.keys().copied().collect();
    let graph_ids: Vec<usize> = graph.supernodes.keys().copied().collect();
    if lexical_ids != table_ids {
        return Err(ModelError::IdentifierMismatch(lexical_ids, table_ids));
    }
    if graph_ids != table_ids {
        return Err(ModelError::IdentifierMismatch(graph_ids, table_ids));
    }
    Ok(Prepared {
        subtokens,
        mentions,
        graph,
        gold: gold_names(entry, vocab),
        decomp: entry.table.iter().map(|(&k, e)| (k, e.decomp.clone())).collect(),
    })
}
