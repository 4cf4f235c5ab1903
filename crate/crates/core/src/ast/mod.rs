//! Decompiler AST model, its JSON form, traversals and token rendering.

mod json;
mod node;
mod render;

pub use json::{parse_ast, serialize_ast, AstDocument, NodeRecord};
pub use node::{placeholder, placeholder_index, Ast, AstNode, NodeId, Preorder, SyntacticType};
pub use render::{
    render_tokens, render_tokens_with, RenderError, Token, TokenKind, TokenStream,
    DEFAULT_RESERVED,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AstError {
    #[error("malformed AST document at {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("AST integrity violation: {0}")]
    Integrity(String),
}

/// The two decompilations of the counting loop used throughout the docs and
/// tests: a `while` form with decompiler names and a `for` form carrying the
/// developer's names. Variable accesses sit at the same instruction offsets
/// in both.
pub mod fixtures {
    use super::{Ast, AstNode, SyntacticType as T};

    fn n(id: usize, kind: T, addr: u64) -> AstNode {
        AstNode::new(id, kind, addr)
    }

    fn var(id: usize, name: &str, addr: u64) -> AstNode {
        n(id, T::Var, addr).with_name(name)
    }

    fn num(id: usize, text: &str, addr: u64) -> AstNode {
        n(id, T::Num, addr).with_name(text)
    }

    /// `v1 = 0; while (v1 <= 9) { v2 += v1; ++v1; }`
    pub fn loop_without_debug_info() -> Ast {
        let root = n(0, T::Block, 0x492).with_children(vec![
            n(1, T::Asg, 0x492).with_children(vec![var(2, "v1", 0x492), num(3, "0", 0x492)]),
            n(4, T::While, 0x49B).with_children(vec![
                n(5, T::Sle, 0x4A9).with_children(vec![var(6, "v1", 0x4A5), num(7, "9", 0x4A5)]),
                n(8, T::Block, 0x49E).with_children(vec![
                    n(9, T::Expr, 0x49E).with_children(vec![n(10, T::AsgAdd, 0x49E)
                        .with_children(vec![var(11, "v2", 0x49E), var(12, "v1", 0x49E)])]),
                    n(13, T::PreInc, 0x4A1).with_children(vec![var(14, "v1", 0x4A1)]),
                ]),
            ]),
        ]);
        Ast::new("loop", root).expect("fixture is well formed")
    }

    /// `for (i = 0; i <= 9; ++i) { z += i; }`
    pub fn loop_with_debug_info() -> Ast {
        let root = n(0, T::For, 0x492).with_children(vec![
            n(1, T::Asg, 0x492).with_children(vec![var(2, "i", 0x492), num(3, "0", 0x492)]),
            n(4, T::Sle, 0x4A9).with_children(vec![var(5, "i", 0x4A5), num(6, "9", 0x4A5)]),
            n(7, T::PreInc, 0x4A1).with_children(vec![var(8, "i", 0x4A1)]),
            n(9, T::Block, 0x49E).with_children(vec![n(10, T::Expr, 0x49E).with_children(vec![
                n(11, T::AsgAdd, 0x49E).with_children(vec![var(12, "z", 0x49E), var(13, "i", 0x49E)]),
            ])]),
        ]);
        Ast::new("loop", root).expect("fixture is well formed")
    }
}
