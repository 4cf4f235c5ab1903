//! Pretty-printer standing in for the decompiler's code generator.
//!
//! Nested operator expressions are always parenthesised, so distinct trees
//! never print to the same token sequence.

use serde::{Deserialize, Serialize};

use super::{placeholder_index, Ast, AstNode, SyntacticType as T};

/// Decompiler-introduced names treated as atomic tokens by default.
pub const DEFAULT_RESERVED: &[&str] = &["result"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Code,
    Placeholder,
    Reserved,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

/// Serialized as a JSON array of `[text, kind]` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn placeholders(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Placeholder)
            .filter_map(|t| placeholder_index(&t.text))
    }

    /// Space-joined text, used for duplicate detection.
    pub fn joined(&self) -> String {
        self.texts().collect::<Vec<_>>().join(" ")
    }
}

impl Serialize for TokenStream {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.tokens.len()))?;
        for t in &self.tokens {
            seq.serialize_element(&(&t.text, t.kind))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TokenStream {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs: Vec<(String, TokenKind)> = Vec::deserialize(deserializer)?;
        Ok(TokenStream {
            tokens: pairs
                .into_iter()
                .map(|(text, kind)| Token { text, kind })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("cannot render unknown syntactic type(s): {}", .0.join(", "))]
    UnknownType(Vec<String>),
    #[error("node {id} ({kind}) has {found} children, expected {expected}")]
    Arity {
        id: usize,
        kind: String,
        expected: &'static str,
        found: usize,
    },
    #[error("node {id} ({kind}) is missing its name")]
    MissingName { id: usize, kind: String },
}

pub fn render_tokens(ast: &Ast) -> Result<TokenStream, RenderError> {
    render_tokens_with(ast, DEFAULT_RESERVED)
}

pub fn render_tokens_with(ast: &Ast, reserved: &[&str]) -> Result<TokenStream, RenderError> {
    let mut unknown: Vec<String> = ast
        .preorder()
        .filter_map(|n| match &n.kind {
            T::Other(tag) => Some(tag.clone()),
            _ => None,
        })
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(RenderError::UnknownType(unknown));
    }
    let mut r = Renderer {
        out: Vec::new(),
        reserved,
    };
    let root = ast.root();
    if root.kind == T::Block {
        if let Some(name) = root.name.as_deref() {
            r.code(name);
            r.code("(");
            r.code(")");
        }
    }
    r.stmt(root)?;
    Ok(TokenStream { tokens: r.out })
}

struct Renderer<'a> {
    out: Vec<Token>,
    reserved: &'a [&'a str],
}

fn arity(node: &AstNode, expected: &'static str, ok: bool) -> Result<(), RenderError> {
    if ok {
        Ok(())
    } else {
        Err(RenderError::Arity {
            id: node.id,
            kind: node.kind.tag().to_string(),
            expected,
            found: node.children.len(),
        })
    }
}

fn name_of(node: &AstNode) -> Result<&str, RenderError> {
    node.name.as_deref().ok_or_else(|| RenderError::MissingName {
        id: node.id,
        kind: node.kind.tag().to_string(),
    })
}

fn binary_op(kind: &T) -> Option<&'static str> {
    Some(match kind {
        T::Asg => "=",
        T::AsgAdd => "+=",
        T::AsgSub => "-=",
        T::AsgMul => "*=",
        T::AsgOr => "|=",
        T::AsgAnd => "&=",
        T::Add => "+",
        T::Sub => "-",
        T::Mul => "*",
        T::Div => "/",
        T::Mod => "%",
        T::BAnd => "&",
        T::BOr => "|",
        T::Xor => "^",
        T::Shl => "<<",
        T::Shr => ">>",
        T::LAnd => "&&",
        T::LOr => "||",
        T::Eq => "==",
        T::Ne => "!=",
        T::Slt => "<",
        T::Sle => "<=",
        T::Sgt => ">",
        T::Sge => ">=",
        _ => return None,
    })
}

fn prefix_op(kind: &T) -> Option<&'static str> {
    Some(match kind {
        T::PreInc => "++",
        T::PreDec => "--",
        T::LNot => "!",
        T::BNot => "~",
        T::Neg => "-",
        T::Ptr => "*",
        T::Ref => "&",
        _ => return None,
    })
}

/// Operands of these need parentheses when nested inside another operator.
fn is_compound(kind: &T) -> bool {
    binary_op(kind).is_some() || matches!(kind, T::Tern | T::Cast)
}

impl Renderer<'_> {
    fn code(&mut self, text: &str) {
        self.out.push(Token {
            text: text.to_string(),
            kind: TokenKind::Code,
        });
    }

    fn ident(&mut self, text: &str) {
        let kind = if placeholder_index(text).is_some() {
            TokenKind::Placeholder
        } else if self.reserved.contains(&text) {
            TokenKind::Reserved
        } else {
            TokenKind::Code
        };
        self.out.push(Token {
            text: text.to_string(),
            kind,
        });
    }

    fn dtype(&mut self, dtype: &str) {
        for piece in dtype.split_whitespace() {
            self.code(piece);
        }
    }

    fn stmt(&mut self, node: &AstNode) -> Result<(), RenderError> {
        let c = &node.children;
        match node.kind {
            T::Block => {
                self.code("{");
                for child in c {
                    self.stmt(child)?;
                }
                self.code("}");
            }
            T::If => {
                arity(node, "2 or 3", c.len() == 2 || c.len() == 3)?;
                self.code("if");
                self.code("(");
                self.expr(&c[0])?;
                self.code(")");
                self.stmt(&c[1])?;
                if let Some(otherwise) = c.get(2) {
                    self.code("else");
                    self.stmt(otherwise)?;
                }
            }
            T::While => {
                arity(node, "2", c.len() == 2)?;
                self.code("while");
                self.code("(");
                self.expr(&c[0])?;
                self.code(")");
                self.stmt(&c[1])?;
            }
            T::Do => {
                arity(node, "2", c.len() == 2)?;
                self.code("do");
                self.stmt(&c[0])?;
                self.code("while");
                self.code("(");
                self.expr(&c[1])?;
                self.code(")");
                self.code(";");
            }
            T::For => {
                arity(node, "4", c.len() == 4)?;
                self.code("for");
                self.code("(");
                self.expr(&c[0])?;
                self.code(";");
                self.expr(&c[1])?;
                self.code(";");
                self.expr(&c[2])?;
                self.code(")");
                self.stmt(&c[3])?;
            }
            T::Return => {
                arity(node, "0 or 1", c.len() <= 1)?;
                self.code("return");
                if let Some(value) = c.first() {
                    self.expr(value)?;
                }
                self.code(";");
            }
            T::Break | T::Continue => {
                arity(node, "0", c.is_empty())?;
                self.code(node.kind.tag());
                self.code(";");
            }
            T::Expr => {
                arity(node, "1", c.len() == 1)?;
                self.expr(&c[0])?;
                self.code(";");
            }
            _ => {
                self.expr(node)?;
                self.code(";");
            }
        }
        Ok(())
    }

    fn operand(&mut self, node: &AstNode) -> Result<(), RenderError> {
        if is_compound(&node.kind) {
            self.code("(");
            self.expr(node)?;
            self.code(")");
            Ok(())
        } else {
            self.expr(node)
        }
    }

    fn expr(&mut self, node: &AstNode) -> Result<(), RenderError> {
        let c = &node.children;
        if let Some(op) = binary_op(&node.kind) {
            arity(node, "2", c.len() == 2)?;
            self.operand(&c[0])?;
            self.code(op);
            return self.operand(&c[1]);
        }
        if let Some(op) = prefix_op(&node.kind) {
            arity(node, "1", c.len() == 1)?;
            self.code(op);
            return self.operand(&c[0]);
        }
        match node.kind {
            T::PostInc | T::PostDec => {
                arity(node, "1", c.len() == 1)?;
                self.operand(&c[0])?;
                self.code(if node.kind == T::PostInc { "++" } else { "--" });
            }
            T::Var => self.ident(name_of(node)?),
            T::Num | T::Obj => self.code(name_of(node)?),
            T::Str => {
                let text = name_of(node)?;
                self.code(&format!("\"{text}\""));
            }
            T::Idx => {
                arity(node, "2", c.len() == 2)?;
                self.operand(&c[0])?;
                self.code("[");
                self.expr(&c[1])?;
                self.code("]");
            }
            T::MemPtr | T::MemRef => {
                arity(node, "1", c.len() == 1)?;
                self.operand(&c[0])?;
                self.code(if node.kind == T::MemPtr { "->" } else { "." });
                self.code(name_of(node)?);
            }
            T::Call => {
                arity(node, "at least 1", !c.is_empty())?;
                self.operand(&c[0])?;
                self.code("(");
                for (i, arg) in c[1..].iter().enumerate() {
                    if i > 0 {
                        self.code(",");
                    }
                    self.expr(arg)?;
                }
                self.code(")");
            }
            T::Cast => {
                arity(node, "1", c.len() == 1)?;
                self.code("(");
                self.dtype(node.dtype.as_deref().unwrap_or("void"));
                self.code(")");
                self.operand(&c[0])?;
            }
            T::Tern => {
                arity(node, "3", c.len() == 3)?;
                self.operand(&c[0])?;
                self.code("?");
                self.operand(&c[1])?;
                self.code(":");
                self.operand(&c[2])?;
            }
            // Statements in expression position (for-loop slots holding a
            // block, for instance) fall back to statement rendering.
            _ => self.stmt(node)?,
        }
        Ok(())
    }
}
