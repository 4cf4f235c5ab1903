//! Typed graph over an AST for the structural encoder.
//!
//! Vertices are the AST nodes (vertex id = node id) followed by one supernode
//! per distinct identifier, in first-mention preorder. Four edge kinds are
//! added, each with a reverse twin, giving eight edge types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::ast::{Ast, SyntacticType};

pub type VertexId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    ParentChild,
    FunctionNameToIdentifier,
    SuccessorTerminal,
    SupernodeLink,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [
        EdgeKind::ParentChild,
        EdgeKind::FunctionNameToIdentifier,
        EdgeKind::SuccessorTerminal,
        EdgeKind::SupernodeLink,
    ];

    fn tag(self) -> &'static str {
        match self {
            EdgeKind::ParentChild => "parent-child",
            EdgeKind::FunctionNameToIdentifier => "function-name-to-identifier",
            EdgeKind::SuccessorTerminal => "successor-terminal",
            EdgeKind::SupernodeLink => "supernode-link",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeType {
    pub kind: EdgeKind,
    pub reverse: bool,
}

impl EdgeType {
    pub const COUNT: usize = 8;

    pub const fn forward(kind: EdgeKind) -> Self {
        EdgeType { kind, reverse: false }
    }

    pub const fn backward(kind: EdgeKind) -> Self {
        EdgeType { kind, reverse: true }
    }

    pub fn all() -> impl Iterator<Item = EdgeType> {
        EdgeKind::ALL
            .into_iter()
            .flat_map(|k| [EdgeType::forward(k), EdgeType::backward(k)])
    }

    /// Dense index in `0..8`.
    pub fn index(self) -> usize {
        EdgeKind::ALL.iter().position(|&k| k == self.kind).unwrap() * 2 + self.reverse as usize
    }

    pub fn twin(self) -> Self {
        EdgeType {
            kind: self.kind,
            reverse: !self.reverse,
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.tag())?;
        if self.reverse {
            f.write_str("-reverse")?;
        }
        Ok(())
    }
}

impl Serialize for EdgeType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    #[serde(rename = "type")]
    pub ty: EdgeType,
}

/// What a vertex stands for; the structural encoder builds its initial
/// state from these fields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Vertex {
    Node {
        kind: SyntacticType,
        dtype: Option<String>,
        name: Option<String>,
    },
    Supernode {
        identifier: String,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphConfig {
    /// Send root-to-identifier edges to every mention instead of the supernode.
    pub per_mention_function_edges: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("vertex {vertex} is not in a graph of {count} vertices")]
    UnknownVertex { vertex: VertexId, count: usize },
}

#[derive(Clone, Debug)]
pub struct CodeGraph {
    node_count: usize,
    root: VertexId,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    identifiers: Vec<String>,
    identifier_supernode: BTreeMap<String, VertexId>,
    /// Vertex ids in AST preorder, followed by the supernodes.
    order: Vec<VertexId>,
}

pub fn build_graph(ast: &Ast) -> CodeGraph {
    build_graph_with(ast, GraphConfig::default())
}

pub fn build_graph_with(ast: &Ast, config: GraphConfig) -> CodeGraph {
    let n = ast.node_count();
    let identifiers = ast.variables_in_preorder();
    let identifier_supernode: BTreeMap<String, VertexId> = identifiers
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), n + i))
        .collect();

    let mut vertices = vec![None; n];
    let mut order = Vec::with_capacity(n + identifiers.len());
    let mut forward = Vec::new();
    let mut leaves = Vec::new();
    let mut mentions = Vec::new();
    let root = ast.root().id;
    for node in ast.preorder() {
        order.push(node.id);
        let name = if node.id == root {
            node.name.clone().or_else(|| Some(ast.function().to_string()))
        } else {
            node.name.clone()
        };
        vertices[node.id] = Some(Vertex::Node {
            kind: node.kind.clone(),
            dtype: node.dtype.clone(),
            name,
        });
        for child in &node.children {
            forward.push((node.id, child.id, EdgeKind::ParentChild));
        }
        if node.is_leaf() {
            leaves.push(node.id);
        }
        if node.is_var() {
            let name = node.name.as_deref().expect("var nodes are named");
            mentions.push((node.id, identifier_supernode[name]));
        }
    }
    if config.per_mention_function_edges {
        forward.extend(mentions.iter().map(|&(m, _)| (root, m, EdgeKind::FunctionNameToIdentifier)));
    } else {
        forward.extend((n..n + identifiers.len()).map(|s| (root, s, EdgeKind::FunctionNameToIdentifier)));
    }
    forward.extend(leaves.windows(2).map(|w| (w[0], w[1], EdgeKind::SuccessorTerminal)));
    forward.extend(mentions.iter().map(|&(m, s)| (m, s, EdgeKind::SupernodeLink)));

    let mut edges = Vec::with_capacity(forward.len() * 2);
    for (src, dst, kind) in forward {
        edges.push(Edge { src, dst, ty: EdgeType::forward(kind) });
        edges.push(Edge { src: dst, dst: src, ty: EdgeType::backward(kind) });
    }
    let mut vertices: Vec<Vertex> = vertices
        .into_iter()
        .map(|v| v.expect("node ids are dense"))
        .collect();
    vertices.extend(identifiers.iter().map(|name| Vertex::Supernode {
        identifier: name.clone(),
    }));
    order.extend(n..n + identifiers.len());
    CodeGraph {
        node_count: n,
        root,
        vertices,
        edges,
        identifiers,
        identifier_supernode,
        order,
    }
}

impl CodeGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn vertex(&self, v: VertexId) -> Option<&Vertex> {
        self.vertices.get(v)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Edges in construction order: each forward edge is followed by its
    /// reverse twin, and construction walks the AST in preorder.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Identifier names in first-mention preorder.
    pub fn identifiers(&self) -> &[String] {
        &self.identifiers
    }

    pub fn supernode(&self, identifier: &str) -> Option<VertexId> {
        self.identifier_supernode.get(identifier).copied()
    }

    pub fn identifier_supernode(&self) -> &BTreeMap<String, VertexId> {
        &self.identifier_supernode
    }

    /// AST vertices in preorder, then supernodes. Iterating in this order
    /// makes computations independent of how node ids were assigned.
    pub fn canonical_order(&self) -> &[VertexId] {
        &self.order
    }

    /// Targets of `edge_type` edges leaving `vertex`.
    pub fn adjacency(&self, vertex: VertexId, edge_type: EdgeType) -> Result<BTreeSet<VertexId>, GraphError> {
        if vertex >= self.vertices.len() {
            return Err(GraphError::UnknownVertex {
                vertex,
                count: self.vertices.len(),
            });
        }
        Ok(self
            .edges
            .iter()
            .filter(|e| e.src == vertex && e.ty == edge_type)
            .map(|e| e.dst)
            .collect())
    }

    pub fn count_edges(&self, edge_type: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.ty == edge_type).count()
    }

    /// One JSON object per edge: `{"src":..,"dst":..,"type":..}`.
    pub fn edges_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&serde_json::to_string(e).expect("edges serialize"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::insert_placeholders;
    use crate::ast::fixtures::loop_with_debug_info;
    use crate::ast::{AstNode, SyntacticType as T};

    fn single_assignment() -> Ast {
        let root = AstNode::new(0, T::Asg, 0).with_children(vec![
            AstNode::new(1, T::Var, 0).with_name("VAR1"),
            AstNode::new(2, T::Num, 0).with_name("0"),
        ]);
        Ast::new("f", root).unwrap()
    }

    #[test]
    fn eight_edge_types() {
        let all: BTreeSet<usize> = EdgeType::all().map(EdgeType::index).collect();
        assert_eq!(all, (0..8).collect());
        assert!(EdgeType::all().all(|t| t.twin().twin() == t && t.twin() != t));
    }

    #[test]
    fn single_statement_edges() {
        let g = build_graph(&single_assignment());
        assert_eq!(g.vertex_count(), 4);
        let fwd = |k| g.count_edges(EdgeType::forward(k));
        assert_eq!(fwd(EdgeKind::ParentChild), 2);
        assert_eq!(fwd(EdgeKind::FunctionNameToIdentifier), 1);
        assert_eq!(fwd(EdgeKind::SuccessorTerminal), 1);
        assert_eq!(fwd(EdgeKind::SupernodeLink), 1);
        assert_eq!(g.edges().len(), 10);
        assert_eq!(
            g.adjacency(1, EdgeType::forward(EdgeKind::SuccessorTerminal)).unwrap(),
            [2].into_iter().collect()
        );
    }

    #[test]
    fn no_identifiers() {
        let root = AstNode::new(0, T::Block, 0).with_children(vec![AstNode::new(1, T::Return, 0)]);
        let g = build_graph(&Ast::new("f", root).unwrap());
        assert_eq!(g.vertex_count(), 2);
        assert!(g.identifiers().is_empty());
        assert_eq!(g.count_edges(EdgeType::forward(EdgeKind::FunctionNameToIdentifier)), 0);
    }

    #[test]
    fn loop_mentions() {
        let (ast, _) = insert_placeholders(&loop_with_debug_info());
        let g = build_graph(&ast);
        assert_eq!(g.vertex_count(), 14 + 2);
        let i = g.supernode("VAR1").unwrap();
        let z = g.supernode("VAR2").unwrap();
        let back = EdgeType::backward(EdgeKind::SupernodeLink);
        assert_eq!(g.adjacency(i, back).unwrap(), [2, 5, 8, 13].into_iter().collect());
        assert_eq!(g.adjacency(z, back).unwrap().len(), 1);
        assert!(g.adjacency(3, EdgeType::forward(EdgeKind::ParentChild)).unwrap().is_empty());
        assert!(matches!(g.adjacency(99, back), Err(GraphError::UnknownVertex { .. })));
        let root_out = g
            .adjacency(g.root(), EdgeType::forward(EdgeKind::FunctionNameToIdentifier))
            .unwrap();
        assert_eq!(root_out, [i, z].into_iter().collect());
        assert!(matches!(
            g.vertex(g.root()),
            Some(Vertex::Node { name: Some(n), .. }) if n == "loop"
        ));
    }

    #[test]
    fn per_mention_function_edges() {
        let (ast, _) = insert_placeholders(&loop_with_debug_info());
        let config = GraphConfig {
            per_mention_function_edges: true,
        };
        let g = build_graph_with(&ast, config);
        assert_eq!(g.count_edges(EdgeType::forward(EdgeKind::FunctionNameToIdentifier)), 5);
    }

    #[test]
    fn edge_dump() {
        let g = build_graph(&single_assignment());
        let first = g.edges_jsonl().lines().next().unwrap().to_string();
        assert_eq!(first, r#"{"src":0,"dst":1,"type":"parent-child"}"#);
        assert_eq!(g.edges_jsonl().lines().count(), 10);
    }
}
