//! Corpus generation by offset-signature alignment.
//!
//! A variable is identified across two decompilations of the same function
//! by the set of instruction offsets at which it is accessed. Decompiling with
//! and without debug information may change the tree shape, but not those
//! offsets, so equal signatures pair a decompiler name with a developer name.

mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ast::{placeholder, render_tokens, Ast, RenderError, SyntacticType, TokenStream};

pub use synth::{generate_synthetic_pair, template_count, GroundTruth, SynthError, TEMPLATE_NAMES};

/// Functions larger than this are dropped from the corpus.
pub const MAX_AST_NODES: usize = 300;

/// Offsets at which one variable is read or written.
pub type VariableSignature = BTreeSet<u64>;

pub fn extract_signatures(ast: &Ast) -> BTreeMap<String, VariableSignature> {
    let mut sigs: BTreeMap<String, VariableSignature> = BTreeMap::new();
    for node in ast.preorder().filter(|n| n.kind == SyntacticType::Var) {
        let name = node.name.clone().expect("var nodes are named");
        sigs.entry(name).or_default().insert(node.addr);
    }
    sigs
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// Name on the first side to the name on the second side.
    pub mapping: BTreeMap<String, String>,
    /// First-side names whose signature is shared with another variable on
    /// either side; these are left unnamed.
    pub skipped: BTreeSet<String>,
}

fn group_by_signature(
    sigs: &BTreeMap<String, VariableSignature>,
) -> BTreeMap<&VariableSignature, Vec<&str>> {
    let mut groups: BTreeMap<&VariableSignature, Vec<&str>> = BTreeMap::new();
    for (name, sig) in sigs {
        groups.entry(sig).or_default().push(name);
    }
    groups
}

/// Pairs variables of `stripped` with variables of `debug` by equal offset
/// signature. Variables with no partner are decompiler temporaries and
/// appear in neither output set.
pub fn align(stripped: &Ast, debug: &Ast) -> Alignment {
    let left = extract_signatures(stripped);
    let right = extract_signatures(debug);
    let right_groups = group_by_signature(&right);
    let mut out = Alignment::default();
    for (sig, names) in group_by_signature(&left) {
        let partners = right_groups.get(sig).map(Vec::as_slice).unwrap_or(&[]);
        match (names.as_slice(), partners) {
            ([only], [partner]) => {
                out.mapping.insert(only.to_string(), partner.to_string());
            }
            (_, []) if names.len() == 1 => {}
            _ => out.skipped.extend(names.iter().map(|n| n.to_string())),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub decomp: String,
    pub dev: Option<String>,
}

/// Placeholder number to decompiler and developer names.
pub type LookupTable = BTreeMap<usize, TableEntry>;

/// Replaces each variable with `VAR<k>`, numbering by first mention in
/// preorder. The table records the decompiler name behind each number.
pub fn insert_placeholders(ast: &Ast) -> (Ast, LookupTable) {
    let order = ast.variables_in_preorder();
    let numbering: BTreeMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i + 1))
        .collect();
    let renamed = ast.map_nodes(|n| {
        let mut m = n.clone();
        m.children.clear();
        if n.is_var() {
            let k = numbering[n.name.as_deref().expect("var nodes are named")];
            m.name = Some(placeholder(k));
        }
        m
    });
    let table = order
        .into_iter()
        .enumerate()
        .map(|(i, decomp)| (i + 1, TableEntry { decomp, dev: None }))
        .collect();
    (renamed, table)
}

/// One training example: placeholder code, placeholder AST and name table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub binary: String,
    pub function: String,
    pub tokens: TokenStream,
    pub ast: Ast,
    pub table: LookupTable,
}

impl CorpusEntry {
    /// Placeholder numbers in decoding order.
    pub fn placeholder_ids(&self) -> Vec<usize> {
        self.table.keys().copied().collect()
    }

    /// Checks that the tokens, the AST and the table use the same placeholder
    /// numbers.
    pub fn check_consistency(&self) -> Result<(), String> {
        let in_tokens: BTreeSet<usize> = self.tokens.placeholders().collect();
        let in_ast: BTreeSet<usize> = self
            .ast
            .collect_variables()
            .keys()
            .filter_map(|n| crate::ast::placeholder_index(n))
            .collect();
        let in_table: BTreeSet<usize> = self.table.keys().copied().collect();
        if in_tokens != in_table || in_ast != in_table {
            return Err(format!(
                "placeholder mismatch: tokens {in_tokens:?}, ast {in_ast:?}, table {in_table:?}"
            ));
        }
        Ok(())
    }

    pub fn named_count(&self) -> usize {
        self.table.values().filter(|e| e.dev.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    NoRenamedVars,
    TooLarge,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::NoRenamedVars => "no-renamed-vars",
            RejectReason::TooLarge => "too-large",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("function rejected: {0}")]
    Rejected(RejectReason),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Aligns, numbers and renders one function into a corpus entry.
pub fn build_corpus_entry(
    stripped: &Ast,
    debug: &Ast,
    binary: &str,
    function: &str,
) -> Result<CorpusEntry, CorpusError> {
    if stripped.node_count() > MAX_AST_NODES {
        return Err(CorpusError::Rejected(RejectReason::TooLarge));
    }
    let alignment = align(stripped, debug);
    if alignment.mapping.is_empty() {
        return Err(CorpusError::Rejected(RejectReason::NoRenamedVars));
    }
    let (ast, mut table) = insert_placeholders(stripped);
    for entry in table.values_mut() {
        entry.dev = alignment.mapping.get(&entry.decomp).cloned();
    }
    let tokens = render_tokens(&ast)?;
    Ok(CorpusEntry {
        binary: binary.to_string(),
        function: function.to_string(),
        tokens,
        ast,
        table,
    })
}
