//! JSON form of an AST: a flat node list with child ids.
//!
//! ```json
//! {"function": "f", "nodes": [{"id": 0, "type": "block", "dtype": null,
//!   "name": "f", "addr": 1170, "children": [1]}, ...], "root": 0}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Ast, AstError, AstNode, NodeId, SyntacticType};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstDocument {
    pub function: String,
    pub nodes: Vec<NodeRecord>,
    pub root: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub kind: String,
    pub dtype: Option<String>,
    pub name: Option<String>,
    pub addr: u64,
    pub children: Vec<NodeId>,
}

fn malformed(path: impl Into<String>, message: impl Into<String>) -> AstError {
    AstError::Malformed {
        path: path.into(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, AstError> {
    obj.get(key)
        .ok_or_else(|| malformed(format!("{path}.{key}"), "missing field"))
}

fn as_index(value: &Value, path: &str) -> Result<usize, AstError> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| malformed(path, "expected a non-negative integer"))
}

fn opt_string(value: &Value, path: &str) -> Result<Option<String>, AstError> {
    match value {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(s.clone())),
        _ => Err(malformed(path, "expected a string or null")),
    }
}

impl AstDocument {
    /// Decodes a document from a JSON value, naming the offending path on
    /// failure.
    pub fn from_value(value: &Value) -> Result<Self, AstError> {
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("$", "expected an object"))?;
        let function = field(obj, "$", "function")?
            .as_str()
            .ok_or_else(|| malformed("$.function", "expected a string"))?
            .to_string();
        let root = as_index(field(obj, "$", "root")?, "$.root")?;
        let raw_nodes = field(obj, "$", "nodes")?
            .as_array()
            .ok_or_else(|| malformed("$.nodes", "expected an array"))?;
        let mut nodes = Vec::with_capacity(raw_nodes.len());
        for (i, raw) in raw_nodes.iter().enumerate() {
            let path = format!("$.nodes[{i}]");
            let n = raw
                .as_object()
                .ok_or_else(|| malformed(&path, "expected an object"))?;
            let kind = field(n, &path, "type")?
                .as_str()
                .ok_or_else(|| malformed(format!("{path}.type"), "expected a string"))?
                .to_string();
            let children = field(n, &path, "children")?
                .as_array()
                .ok_or_else(|| malformed(format!("{path}.children"), "expected an array"))?
                .iter()
                .enumerate()
                .map(|(j, c)| as_index(c, &format!("{path}.children[{j}]")))
                .collect::<Result<Vec<_>, _>>()?;
            nodes.push(NodeRecord {
                id: as_index(field(n, &path, "id")?, &format!("{path}.id"))?,
                kind,
                dtype: match n.get("dtype") {
                    Some(v) => opt_string(v, &format!("{path}.dtype"))?,
                    None => None,
                },
                name: match n.get("name") {
                    Some(v) => opt_string(v, &format!("{path}.name"))?,
                    None => None,
                },
                addr: field(n, &path, "addr")?
                    .as_u64()
                    .ok_or_else(|| malformed(format!("{path}.addr"), "expected a non-negative integer"))?,
                children,
            });
        }
        Ok(AstDocument { function, nodes, root })
    }

    /// Assembles the owned tree. Rejects duplicate ids, dangling child
    /// references, shared children, cycles and unreachable nodes.
    pub fn into_ast(self) -> Result<Ast, AstError> {
        let mut by_id: BTreeMap<NodeId, NodeRecord> = BTreeMap::new();
        for record in self.nodes {
            let id = record.id;
            if by_id.insert(id, record).is_some() {
                return Err(AstError::Integrity(format!("duplicate node id {id}")));
            }
        }
        if !by_id.contains_key(&self.root) {
            return Err(AstError::Integrity(format!("root id {} not among nodes", self.root)));
        }
        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for record in by_id.values() {
            for &child in &record.children {
                if !by_id.contains_key(&child) {
                    return Err(AstError::Integrity(format!(
                        "node {} references missing child {child}",
                        record.id
                    )));
                }
                if let Some(prev) = parent.insert(child, record.id) {
                    return Err(AstError::Integrity(format!(
                        "node {child} has two parents ({prev} and {})",
                        record.id
                    )));
                }
            }
        }
        if parent.contains_key(&self.root) {
            return Err(AstError::Integrity(format!("root {} has a parent", self.root)));
        }

        fn build(
            id: NodeId,
            by_id: &mut BTreeMap<NodeId, NodeRecord>,
        ) -> Result<AstNode, AstError> {
            let record = by_id
                .remove(&id)
                .ok_or_else(|| AstError::Integrity(format!("node {id} reached twice (cycle)")))?;
            let children = record
                .children
                .iter()
                .map(|&c| build(c, by_id))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AstNode {
                id,
                kind: SyntacticType::from_tag(&record.kind),
                dtype: record.dtype,
                name: record.name,
                addr: record.addr,
                children,
            })
        }

        let root = build(self.root, &mut by_id)?;
        if let Some(orphan) = by_id.keys().next() {
            return Err(AstError::Integrity(format!(
                "node {orphan} is unreachable from the root"
            )));
        }
        Ast::new(self.function, root)
    }

    /// Canonical document for an AST: nodes sorted by id.
    pub fn from_ast(ast: &Ast) -> Self {
        let mut nodes: Vec<NodeRecord> = ast
            .preorder()
            .map(|n| NodeRecord {
                id: n.id,
                kind: n.kind.tag().to_string(),
                dtype: n.dtype.clone(),
                name: n.name.clone(),
                addr: n.addr,
                children: n.children.iter().map(|c| c.id).collect(),
            })
            .collect();
        nodes.sort_by_key(|n| n.id);
        AstDocument {
            function: ast.function().to_string(),
            nodes,
            root: ast.root().id,
        }
    }
}

pub fn parse_ast(serialized: &str) -> Result<Ast, AstError> {
    let value: Value = serde_json::from_str(serialized)
        .map_err(|e| malformed(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    AstDocument::from_value(&value)?.into_ast()
}

pub fn serialize_ast(ast: &Ast) -> String {
    serde_json::to_string(&AstDocument::from_ast(ast)).expect("AST documents always serialize")
}

impl Serialize for Ast {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AstDocument::from_ast(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Ast {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        AstDocument::from_value(&value)
            .and_then(AstDocument::into_ast)
            .map_err(serde::de::Error::custom)
    }
}
