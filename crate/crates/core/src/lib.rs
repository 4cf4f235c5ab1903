//! Variable-name recovery for decompiled code.
//!
//! The crate covers the whole path from paired decompiler output to predicted
//! names: [`align`] builds training entries by matching variables across two
//! decompilations, [`subtok`] segments code and names into subwords,
//! [`graph`] turns an AST into a typed graph, [`neuro`] provides tensors with
//! reverse-mode gradients, [`model`] holds the encoders and the decoder, and
//! [`pipeline`] ties them into splitting, training and evaluation.

pub mod align;
pub mod ast;
pub mod graph;
pub mod model;
pub mod neuro;
pub mod pipeline;
pub mod subtok;

pub use align::{build_corpus_entry, CorpusEntry, LookupTable, TableEntry};
pub use ast::{Ast, AstNode, SyntacticType, TokenKind, TokenStream};
pub use subtok::Vocabulary;
