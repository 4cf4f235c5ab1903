use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::AstError;

/// Syntactic tag of a decompiler AST node.
///
/// The known variants follow the decompiler's ctree naming (`asgadd`, `sle`,
/// `preinc`, ...). Tags outside the known set are carried through as
/// [`SyntacticType::Other`] so that foreign documents still load; the renderer
/// rejects them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SyntacticType {
    Block,
    If,
    For,
    While,
    Do,
    Return,
    Break,
    Continue,
    Expr,
    Asg,
    AsgAdd,
    AsgSub,
    AsgMul,
    AsgOr,
    AsgAnd,
    PreInc,
    PreDec,
    PostInc,
    PostDec,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    BAnd,
    BOr,
    Xor,
    Shl,
    Shr,
    LAnd,
    LOr,
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    LNot,
    BNot,
    Neg,
    Ptr,
    Ref,
    Idx,
    MemPtr,
    MemRef,
    Call,
    Cast,
    Tern,
    Num,
    Str,
    Obj,
    Var,
    Other(String),
}

const KNOWN: &[(SyntacticType, &str)] = &[
    (SyntacticType::Block, "block"),
    (SyntacticType::If, "if"),
    (SyntacticType::For, "for"),
    (SyntacticType::While, "while"),
    (SyntacticType::Do, "do"),
    (SyntacticType::Return, "return"),
    (SyntacticType::Break, "break"),
    (SyntacticType::Continue, "continue"),
    (SyntacticType::Expr, "expr"),
    (SyntacticType::Asg, "asg"),
    (SyntacticType::AsgAdd, "asgadd"),
    (SyntacticType::AsgSub, "asgsub"),
    (SyntacticType::AsgMul, "asgmul"),
    (SyntacticType::AsgOr, "asgor"),
    (SyntacticType::AsgAnd, "asgand"),
    (SyntacticType::PreInc, "preinc"),
    (SyntacticType::PreDec, "predec"),
    (SyntacticType::PostInc, "postinc"),
    (SyntacticType::PostDec, "postdec"),
    (SyntacticType::Add, "add"),
    (SyntacticType::Sub, "sub"),
    (SyntacticType::Mul, "mul"),
    (SyntacticType::Div, "div"),
    (SyntacticType::Mod, "mod"),
    (SyntacticType::BAnd, "band"),
    (SyntacticType::BOr, "bor"),
    (SyntacticType::Xor, "xor"),
    (SyntacticType::Shl, "shl"),
    (SyntacticType::Shr, "shr"),
    (SyntacticType::LAnd, "land"),
    (SyntacticType::LOr, "lor"),
    (SyntacticType::Eq, "eq"),
    (SyntacticType::Ne, "ne"),
    (SyntacticType::Slt, "slt"),
    (SyntacticType::Sle, "sle"),
    (SyntacticType::Sgt, "sgt"),
    (SyntacticType::Sge, "sge"),
    (SyntacticType::LNot, "lnot"),
    (SyntacticType::BNot, "bnot"),
    (SyntacticType::Neg, "neg"),
    (SyntacticType::Ptr, "ptr"),
    (SyntacticType::Ref, "ref"),
    (SyntacticType::Idx, "idx"),
    (SyntacticType::MemPtr, "memptr"),
    (SyntacticType::MemRef, "memref"),
    (SyntacticType::Call, "call"),
    (SyntacticType::Cast, "cast"),
    (SyntacticType::Tern, "tern"),
    (SyntacticType::Num, "num"),
    (SyntacticType::Str, "str"),
    (SyntacticType::Obj, "obj"),
    (SyntacticType::Var, "var"),
];

impl SyntacticType {
    pub fn from_tag(tag: &str) -> Self {
        KNOWN
            .iter()
            .find(|(_, t)| *t == tag)
            .map(|(k, _)| k.clone())
            .unwrap_or_else(|| SyntacticType::Other(tag.to_string()))
    }

    pub fn tag(&self) -> &str {
        match self {
            SyntacticType::Other(tag) => tag,
            known => KNOWN
                .iter()
                .find(|(k, _)| k == known)
                .map(|(_, t)| *t)
                .expect("every known variant has a tag"),
        }
    }

    /// Dense index of a known tag; every unknown tag shares the slot after the
    /// last known one.
    pub fn index(&self) -> usize {
        KNOWN
            .iter()
            .position(|(k, _)| k == self)
            .unwrap_or(KNOWN.len())
    }

    /// Number of embedding slots needed to cover [`SyntacticType::index`].
    pub fn slot_count() -> usize {
        KNOWN.len() + 1
    }

    pub fn known() -> impl Iterator<Item = &'static SyntacticType> {
        KNOWN.iter().map(|(k, _)| k)
    }
}

impl fmt::Display for SyntacticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: SyntacticType,
    /// Data type text such as `char *`, when the decompiler knows it.
    pub dtype: Option<String>,
    /// Function name on the root, literal text on constants, variable name or
    /// placeholder on `var` nodes, member name on `memptr`/`memref`.
    pub name: Option<String>,
    /// Offset of the instruction the node was generated from.
    pub addr: u64,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn new(id: NodeId, kind: SyntacticType, addr: u64) -> Self {
        AstNode {
            id,
            kind,
            dtype: None,
            name: None,
            addr,
            children: Vec::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_dtype(mut self, dtype: impl Into<String>) -> Self {
        self.dtype = Some(dtype.into());
        self
    }

    pub fn with_children(mut self, children: Vec<AstNode>) -> Self {
        self.children = children;
        self
    }

    pub fn is_var(&self) -> bool {
        self.kind == SyntacticType::Var
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(AstNode::count).sum::<usize>()
    }
}

/// One decompiled function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ast {
    function: String,
    root: AstNode,
    node_count: usize,
}

impl Ast {
    /// Builds an AST, checking that node ids are unique and dense and that every
    /// `var` node carries a name.
    pub fn new(function: impl Into<String>, root: AstNode) -> Result<Self, AstError> {
        let node_count = root.count();
        let mut seen = vec![false; node_count];
        let mut stack = vec![&root];
        while let Some(node) = stack.pop() {
            if node.id >= node_count {
                return Err(AstError::Integrity(format!(
                    "node id {} outside dense range 0..{}",
                    node.id, node_count
                )));
            }
            if std::mem::replace(&mut seen[node.id], true) {
                return Err(AstError::Integrity(format!("duplicate node id {}", node.id)));
            }
            if node.is_var() && node.name.as_deref().map_or(true, str::is_empty) {
                return Err(AstError::Integrity(format!(
                    "var node {} has no name",
                    node.id
                )));
            }
            stack.extend(node.children.iter());
        }
        Ok(Ast {
            function: function.into(),
            root,
            node_count,
        })
    }

    pub fn function(&self) -> &str {
        &self.function
    }

    pub fn root(&self) -> &AstNode {
        &self.root
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Parent before children, siblings in stored order.
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder {
            stack: vec![&self.root],
        }
    }

    /// Variable name to the ids of every `var` node carrying it.
    pub fn collect_variables(&self) -> BTreeMap<String, BTreeSet<NodeId>> {
        let mut vars: BTreeMap<String, BTreeSet<NodeId>> = BTreeMap::new();
        for node in self.preorder().filter(|n| n.is_var()) {
            let name = node.name.clone().expect("var nodes are named");
            vars.entry(name).or_default().insert(node.id);
        }
        vars
    }

    /// Distinct variable names in order of first mention during a preorder walk.
    pub fn variables_in_preorder(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut order = Vec::new();
        for node in self.preorder().filter(|n| n.is_var()) {
            let name = node.name.as_deref().expect("var nodes are named");
            if seen.insert(name) {
                order.push(name.to_string());
            }
        }
        order
    }

    /// Rebuilds the tree with every node passed through `f`; ids and shape
    /// are preserved.
    pub fn map_nodes(&self, mut f: impl FnMut(&AstNode) -> AstNode) -> Ast {
        fn go(node: &AstNode, f: &mut impl FnMut(&AstNode) -> AstNode) -> AstNode {
            let mut out = f(node);
            out.children = node.children.iter().map(|c| go(c, f)).collect();
            out
        }
        Ast {
            function: self.function.clone(),
            root: go(&self.root, &mut f),
            node_count: self.node_count,
        }
    }

    /// Relabels node ids through `perm` (old id -> new id), keeping the tree
    /// shape and child order.
    pub fn relabel(&self, perm: &[NodeId]) -> Result<Ast, AstError> {
        if perm.len() != self.node_count {
            return Err(AstError::Integrity(format!(
                "permutation has {} entries for {} nodes",
                perm.len(),
                self.node_count
            )));
        }
        let relabeled = self.map_nodes(|n| {
            let mut m = n.clone();
            m.children.clear();
            m.id = perm[n.id];
            m
        });
        Ast::new(relabeled.function, relabeled.root)
    }
}

pub struct Preorder<'a> {
    stack: Vec<&'a AstNode>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = &'a AstNode;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// Placeholder text for variable number `k` (1-based).
pub fn placeholder(k: usize) -> String {
    format!("VAR{k}")
}

/// Parses `VAR<k>` back into `k`.
pub fn placeholder_index(text: &str) -> Option<usize> {
    let digits = text.strip_prefix("VAR")?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}
