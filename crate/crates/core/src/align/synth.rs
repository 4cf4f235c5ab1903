//! Synthetic stand-in for "decompile twice": each template describes a small
//! C function and emits two trees for it, one as a decompiler would print it
//! from a stripped binary and one as it would print it with debug info.
//!
//! The pair keeps every variable's access offsets, but the two trees are free
//! to differ in shape (`while` versus `for`, inverted conditionals) and the
//! stripped side may carry temporaries with no source counterpart.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{Ast, AstNode, SyntacticType as T};

const DIALECTS: usize = 4;
const TEMP_RATE: f64 = 0.45;
const COLLISION_RATE: f64 = 0.08;
const LOOP_FLIP_RATE: f64 = 0.5;
const INVERT_RATE: f64 = 0.5;
const GUARD_RATE: f64 = 0.5;

// Address slots reserved for the generic rewrites.
const GUARD: usize = 0;
const TEMP_STORE: usize = 20;
const COLLIDE: usize = 21;
const RET: usize = 22;
const SLOTS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("unknown template id {0} (library has {1})")]
    UnknownTemplate(usize, usize),
}

/// What the generator knows about a pair; used to score the aligner.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub template: usize,
    pub dialect: usize,
    /// Stripped-side name to developer name, for every variable that exists in
    /// the source and does not collide.
    pub mapping: BTreeMap<String, String>,
    /// Decompiler-introduced variables with no developer name.
    pub temporaries: BTreeSet<String>,
    /// Stripped-side names injected with a shared signature.
    pub collided: BTreeSet<String>,
    /// Whether the two trees differ by more than a renaming.
    pub divergent: bool,
}

struct Role {
    dev: [&'static str; DIALECTS],
    arg: bool,
    /// Printed as the decompiler's `result` instead of a numbered name.
    reserved: bool,
    stripped_dtype: &'static str,
    debug_dtype: &'static str,
}

const fn arg(dev: [&'static str; DIALECTS], s: &'static str, d: &'static str) -> Role {
    Role { dev, arg: true, reserved: false, stripped_dtype: s, debug_dtype: d }
}

const fn local(dev: [&'static str; DIALECTS], s: &'static str, d: &'static str) -> Role {
    Role { dev, arg: false, reserved: false, stripped_dtype: s, debug_dtype: d }
}

const fn result(dev: [&'static str; DIALECTS], s: &'static str, d: &'static str) -> Role {
    Role { dev, arg: false, reserved: true, stripped_dtype: s, debug_dtype: d }
}

struct Body {
    stmts: Vec<AstNode>,
    ret: AstNode,
}

struct Template {
    functions: [&'static str; DIALECTS],
    roles: &'static [Role],
    loops: bool,
    branches: bool,
    build: fn(&Side) -> Body,
}

const COLLISION_NAMES: [(&str, &str); DIALECTS] =
    [("saved", "prev"), ("old", "last"), ("backup", "orig"), ("keep", "held")];

/// Names of the template library, in template-id order.
pub const TEMPLATE_NAMES: &[&str] = &[
    "mean_of",
    "copy_string",
    "file_mmap",
    "list_length",
    "find_max",
    "read_file",
    "fill_buffer",
    "hash_string",
    "swap_values",
    "clamp_value",
];

pub fn template_count() -> usize {
    LIBRARY.len()
}

static LIBRARY: &[Template] = &[
    Template {
        functions: ["mean_of", "average", "array_mean", "avg_values"],
        roles: &[
            arg(["arr", "values", "data", "nums"], "_DWORD *", "int *"),
            arg(["n", "count", "len", "size"], "int", "int"),
            local(["sum", "total", "acc", "running"], "int", "int"),
            local(["i", "idx", "j", "k"], "int", "int"),
        ],
        loops: true,
        branches: false,
        build: mean_of,
    },
    Template {
        functions: ["copy_string", "str_copy", "mystrcopy", "copy_chars"],
        roles: &[
            arg(["dst", "dest", "destAddr", "out"], "char *", "char *"),
            arg(["src", "source", "srcAddr", "in"], "const char *", "char *"),
            local(["p", "cur", "ptr", "cursor"], "char *", "char *"),
        ],
        loops: false,
        branches: false,
        build: copy_string,
    },
    Template {
        functions: ["file_mmap", "map_file", "mmap_fd", "load_mapping"],
        roles: &[
            arg(["fd", "file", "handle", "desc"], "int", "int"),
            arg(["size", "len", "length", "nbytes"], "unsigned int", "size_t"),
            local(["buf", "ret", "addr", "mem"], "void *", "void *"),
        ],
        loops: false,
        branches: false,
        build: file_mmap,
    },
    Template {
        functions: ["list_length", "count_nodes", "list_size", "length_of"],
        roles: &[
            arg(["head", "list", "first", "root"], "_QWORD *", "struct node *"),
            local(["node", "cur", "it", "p"], "_QWORD *", "struct node *"),
            result(["count", "n", "len", "size"], "unsigned int", "int"),
        ],
        loops: true,
        branches: false,
        build: list_length,
    },
    Template {
        functions: ["find_max", "max_value", "array_max", "largest"],
        roles: &[
            arg(["arr", "values", "data", "items"], "_DWORD *", "int *"),
            arg(["len", "n", "count", "size"], "int", "int"),
            result(["best", "max", "maxval", "top"], "int", "int"),
            local(["i", "j", "idx", "k"], "int", "int"),
        ],
        loops: true,
        branches: false,
        build: find_max,
    },
    Template {
        functions: ["read_file", "load_file", "slurp", "read_all"],
        roles: &[
            arg(["path", "filename", "name", "fname"], "const char *", "char *"),
            arg(["buf", "data", "out", "dest"], "void *", "void *"),
            arg(["len", "size", "maxlen", "cap"], "size_t", "size_t"),
            local(["fd", "file", "handle", "f"], "int", "int"),
            local(["n", "got", "nread", "bytes_read"], "__int64", "ssize_t"),
        ],
        loops: false,
        branches: true,
        build: read_file,
    },
    Template {
        functions: ["fill_buffer", "memset_bytes", "set_all", "clear_buffer"],
        roles: &[
            arg(["ptr", "buf", "dst", "s"], "_BYTE *", "char *"),
            arg(["value", "c", "byte", "fill"], "char", "int"),
            arg(["size", "n", "len", "count"], "int", "size_t"),
            local(["i", "k", "pos", "idx"], "int", "size_t"),
        ],
        loops: true,
        branches: false,
        build: fill_buffer,
    },
    Template {
        functions: ["hash_string", "djb_hash", "str_hash", "hash_key"],
        roles: &[
            arg(["str", "s", "key", "text"], "char *", "const char *"),
            local(["hash", "h", "value", "acc"], "unsigned int", "unsigned long"),
            local(["c", "ch", "cur", "byte"], "char", "int"),
        ],
        loops: false,
        branches: false,
        build: hash_string,
    },
    Template {
        functions: ["swap_values", "swap", "exchange", "swap_ints"],
        roles: &[
            arg(["a", "x", "lhs", "first"], "_DWORD *", "int *"),
            arg(["b", "y", "rhs", "second"], "_DWORD *", "int *"),
            local(["tmp", "t", "saved", "temp"], "int", "int"),
        ],
        loops: false,
        branches: false,
        build: swap_values,
    },
    Template {
        functions: ["clamp_value", "clamp", "bound", "limit_range"],
        roles: &[
            arg(["x", "value", "v", "input"], "int", "int"),
            arg(["lo", "min", "low", "floor"], "int", "int"),
            arg(["hi", "max", "high", "ceil"], "int", "int"),
            result(["r", "res", "out", "clamped"], "int", "int"),
        ],
        loops: false,
        branches: true,
        build: clamp_value,
    },
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum LoopForm {
    For,
    While,
}

struct Plan {
    dialect: usize,
    slots: [u64; SLOTS],
    stripped_loop: LoopForm,
    debug_loop: LoopForm,
    invert: bool,
    guard: bool,
    temp: bool,
    collide: bool,
    constant: u64,
}

/// One of the two decompilations being emitted.
struct Side<'a> {
    debug: bool,
    plan: &'a Plan,
    names: Vec<String>,
    dtypes: Vec<&'static str>,
}

impl Side<'_> {
    fn at(&self, slot: usize) -> u64 {
        self.plan.slots[slot]
    }

    fn v(&self, role: usize, slot: usize) -> AstNode {
        AstNode::new(0, T::Var, self.at(slot))
            .with_name(self.names[role].clone())
            .with_dtype(self.dtypes[role])
    }

    fn num(&self, text: impl Into<String>, slot: usize) -> AstNode {
        AstNode::new(0, T::Num, self.at(slot)).with_name(text).with_dtype("int")
    }

    fn op(&self, kind: T, slot: usize, children: Vec<AstNode>) -> AstNode {
        AstNode::new(0, kind, self.at(slot)).with_children(children)
    }

    fn call(&self, callee: &str, dtype: &str, slot: usize, args: Vec<AstNode>) -> AstNode {
        let mut children = vec![AstNode::new(0, T::Obj, self.at(slot)).with_name(callee)];
        children.extend(args);
        AstNode::new(0, T::Call, self.at(slot))
            .with_dtype(dtype)
            .with_children(children)
    }

    fn stmt(&self, e: AstNode) -> AstNode {
        AstNode::new(0, T::Expr, e.addr).with_children(vec![e])
    }

    fn block(&self, slot: usize, stmts: Vec<AstNode>) -> AstNode {
        self.op(T::Block, slot, stmts)
    }

    /// `init; cond; step` loop, printed as `for` or as `init; while`
    /// depending on the side.
    fn counting_loop(
        &self,
        init: AstNode,
        cond: AstNode,
        step: AstNode,
        body: Vec<AstNode>,
        jump_slot: usize,
        body_slot: usize,
    ) -> Vec<AstNode> {
        let form = if self.debug { self.plan.debug_loop } else { self.plan.stripped_loop };
        match form {
            LoopForm::For => {
                let addr = init.addr;
                vec![AstNode::new(0, T::For, addr).with_children(vec![
                    init,
                    cond,
                    step,
                    self.block(body_slot, body),
                ])]
            }
            LoopForm::While => {
                let mut body = body;
                body.push(step);
                vec![
                    init,
                    self.op(T::While, jump_slot, vec![cond, self.block(body_slot, body)]),
                ]
            }
        }
    }

    /// `if (cond) then else otherwise`; the debug side may print the negated
    /// condition with swapped branches.
    fn if_else(&self, slot: usize, cond: AstNode, then: Vec<AstNode>, otherwise: Vec<AstNode>) -> AstNode {
        let (then_slot, else_slot) = (slot, slot);
        if self.debug && self.plan.invert {
            let addr = cond.addr;
            let negated = AstNode::new(0, T::LNot, addr).with_children(vec![cond]);
            self.op(
                T::If,
                slot,
                vec![negated, self.block(else_slot, otherwise), self.block(then_slot, then)],
            )
        } else {
            self.op(T::If, slot, vec![cond, self.block(then_slot, then), self.block(else_slot, otherwise)])
        }
    }

    fn guard(&self, cond: AstNode) -> Option<AstNode> {
        self.plan.guard.then(|| {
            let ret = self.op(T::Return, GUARD, vec![self.num("0", GUARD)]);
            self.op(T::If, GUARD, vec![cond, ret])
        })
    }
}

fn mean_of(s: &Side) -> Body {
    let (arr, n, acc, i) = (0, 1, 2, 3);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::Sle, GUARD, vec![s.v(n, GUARD), s.num("0", GUARD)]))
        .into_iter()
        .collect();
    stmts.push(s.op(T::Asg, 1, vec![s.v(acc, 1), s.num("0", 1)]));
    stmts.extend(s.counting_loop(
        s.op(T::Asg, 2, vec![s.v(i, 2), s.num("0", 2)]),
        s.op(T::Slt, 8, vec![s.v(i, 7), s.v(n, 7)]),
        s.op(T::PreInc, 6, vec![s.v(i, 6)]),
        vec![s.stmt(s.op(
            T::AsgAdd,
            4,
            vec![s.v(acc, 4), s.op(T::Idx, 3, vec![s.v(arr, 3), s.v(i, 3)])],
        ))],
        5,
        4,
    ));
    Body {
        stmts,
        ret: s.op(T::Div, RET, vec![s.v(acc, RET), s.v(n, RET)]),
    }
}

fn copy_string(s: &Side) -> Body {
    let (dst, src, p) = (0, 1, 2);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::LNot, GUARD, vec![s.v(src, GUARD)]))
        .into_iter()
        .collect();
    stmts.push(s.op(T::Asg, 1, vec![s.v(p, 1), s.v(dst, 1)]));
    stmts.push(s.op(
        T::While,
        2,
        vec![
            s.op(T::Ptr, 2, vec![s.v(src, 2)]),
            s.block(
                3,
                vec![
                    s.op(
                        T::Asg,
                        3,
                        vec![s.op(T::Ptr, 3, vec![s.v(p, 3)]), s.op(T::Ptr, 3, vec![s.v(src, 3)])],
                    ),
                    s.op(T::PreInc, 4, vec![s.v(p, 4)]),
                    s.op(T::PreInc, 5, vec![s.v(src, 5)]),
                ],
            ),
        ],
    ));
    stmts.push(s.op(T::Asg, 6, vec![s.op(T::Ptr, 6, vec![s.v(p, 6)]), s.num("0", 6)]));
    Body {
        stmts,
        ret: s.op(T::Sub, RET, vec![s.v(p, RET), s.v(dst, RET)]),
    }
}

fn file_mmap(s: &Side) -> Body {
    let (fd, size, buf) = (0, 1, 2);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::Eq, GUARD, vec![s.v(size, GUARD), s.num("0", GUARD)]))
        .into_iter()
        .collect();
    let prot = s.plan.constant % 3 + 1;
    stmts.push(s.op(
        T::Asg,
        3,
        vec![
            s.v(buf, 3),
            s.call(
                "mmap",
                "void *",
                3,
                vec![
                    s.num("0", 3),
                    s.v(size, 1),
                    s.num(prot.to_string(), 3),
                    s.num("2", 3),
                    s.v(fd, 2),
                    s.num("0", 3),
                ],
            ),
        ],
    ));
    stmts.push(s.op(
        T::If,
        5,
        vec![
            s.op(T::Eq, 5, vec![s.v(buf, 4), s.num("-1", 4)]),
            s.block(
                6,
                vec![
                    s.stmt(s.call("perror", "void", 6, vec![AstNode::new(0, T::Str, s.at(6)).with_name("mmap")])),
                    s.stmt(s.call("exit", "void", 7, vec![s.num("1", 7)])),
                ],
            ),
        ],
    ));
    Body { stmts, ret: s.v(buf, RET) }
}

fn list_length(s: &Side) -> Body {
    let (head, node, count) = (0, 1, 2);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::LNot, GUARD, vec![s.v(head, GUARD)]))
        .into_iter()
        .collect();
    stmts.push(s.op(T::Asg, 1, vec![s.v(count, 1), s.num("0", 1)]));
    let next = AstNode::new(0, T::MemPtr, s.at(5))
        .with_name("next")
        .with_children(vec![s.v(node, 5)]);
    stmts.extend(s.counting_loop(
        s.op(T::Asg, 2, vec![s.v(node, 2), s.v(head, 2)]),
        s.v(node, 3),
        s.op(T::Asg, 5, vec![s.v(node, 5), next]),
        vec![s.op(T::PreInc, 4, vec![s.v(count, 4)])],
        6,
        4,
    ));
    Body { stmts, ret: s.v(count, RET) }
}

fn find_max(s: &Side) -> Body {
    let (arr, len, best, i) = (0, 1, 2, 3);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::Sle, GUARD, vec![s.v(len, GUARD), s.num("0", GUARD)]))
        .into_iter()
        .collect();
    stmts.push(s.op(
        T::Asg,
        1,
        vec![s.v(best, 1), s.op(T::Idx, 1, vec![s.v(arr, 1), s.num("0", 1)])],
    ));
    let update = s.op(
        T::If,
        4,
        vec![
            s.op(
                T::Sgt,
                4,
                vec![s.op(T::Idx, 3, vec![s.v(arr, 3), s.v(i, 3)]), s.v(best, 4)],
            ),
            s.block(
                6,
                vec![s.op(
                    T::Asg,
                    6,
                    vec![s.v(best, 6), s.op(T::Idx, 5, vec![s.v(arr, 5), s.v(i, 5)])],
                )],
            ),
        ],
    );
    stmts.extend(s.counting_loop(
        s.op(T::Asg, 2, vec![s.v(i, 2), s.num("1", 2)]),
        s.op(T::Slt, 9, vec![s.v(i, 8), s.v(len, 8)]),
        s.op(T::PreInc, 7, vec![s.v(i, 7)]),
        vec![update],
        10,
        3,
    ));
    Body { stmts, ret: s.v(best, RET) }
}

fn read_file(s: &Side) -> Body {
    let (path, buf, len, fd, n) = (0, 1, 2, 3, 4);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::LNot, GUARD, vec![s.v(buf, GUARD)]))
        .into_iter()
        .collect();
    let flags = (s.plan.constant % 4).to_string();
    stmts.push(s.op(
        T::Asg,
        2,
        vec![s.v(fd, 2), s.call("open", "int", 2, vec![s.v(path, 1), s.num(flags, 2)])],
    ));
    stmts.push(s.if_else(
        4,
        s.op(T::Slt, 4, vec![s.v(fd, 3), s.num("0", 3)]),
        vec![s.op(T::Asg, 5, vec![s.v(n, 5), s.num("-1", 5)])],
        vec![
            s.op(
                T::Asg,
                9,
                vec![
                    s.v(n, 9),
                    s.call("read", "ssize_t", 9, vec![s.v(fd, 6), s.v(buf, 7), s.v(len, 8)]),
                ],
            ),
            s.stmt(s.call("close", "int", 10, vec![s.v(fd, 10)])),
        ],
    ));
    Body { stmts, ret: s.v(n, RET) }
}

fn fill_buffer(s: &Side) -> Body {
    let (ptr, value, size, i) = (0, 1, 2, 3);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::LNot, GUARD, vec![s.v(ptr, GUARD)]))
        .into_iter()
        .collect();
    stmts.extend(s.counting_loop(
        s.op(T::Asg, 1, vec![s.v(i, 1), s.num("0", 1)]),
        s.op(T::Slt, 6, vec![s.v(i, 5), s.v(size, 5)]),
        s.op(T::PreInc, 4, vec![s.v(i, 4)]),
        vec![s.op(
            T::Asg,
            3,
            vec![s.op(T::Idx, 3, vec![s.v(ptr, 3), s.v(i, 3)]), s.v(value, 2)],
        )],
        7,
        3,
    ));
    Body { stmts, ret: s.v(ptr, RET) }
}

fn hash_string(s: &Side) -> Body {
    let (text, hash, c) = (0, 1, 2);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::LNot, GUARD, vec![s.v(text, GUARD)]))
        .into_iter()
        .collect();
    let seed = ["5381", "0", "7", "31"][(s.plan.constant % 4) as usize];
    stmts.push(s.op(T::Asg, 1, vec![s.v(hash, 1), s.num(seed, 1)]));
    stmts.push(s.op(T::Asg, 2, vec![s.v(c, 2), s.op(T::Ptr, 2, vec![s.v(text, 2)])]));
    stmts.push(s.op(
        T::While,
        3,
        vec![
            s.v(c, 3),
            s.block(
                5,
                vec![
                    s.op(
                        T::Asg,
                        5,
                        vec![
                            s.v(hash, 5),
                            s.op(
                                T::Add,
                                4,
                                vec![s.op(T::Mul, 4, vec![s.v(hash, 4), s.num("33", 4)]), s.v(c, 4)],
                            ),
                        ],
                    ),
                    s.op(T::PreInc, 6, vec![s.v(text, 6)]),
                    s.op(T::Asg, 7, vec![s.v(c, 7), s.op(T::Ptr, 7, vec![s.v(text, 7)])]),
                ],
            ),
        ],
    ));
    Body { stmts, ret: s.v(hash, RET) }
}

fn swap_values(s: &Side) -> Body {
    let (a, b, tmp) = (0, 1, 2);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::Eq, GUARD, vec![s.v(a, GUARD), s.v(b, GUARD)]))
        .into_iter()
        .collect();
    stmts.push(s.op(T::Asg, 1, vec![s.v(tmp, 1), s.op(T::Ptr, 1, vec![s.v(a, 1)])]));
    stmts.push(s.op(
        T::Asg,
        2,
        vec![s.op(T::Ptr, 2, vec![s.v(a, 2)]), s.op(T::Ptr, 2, vec![s.v(b, 2)])],
    ));
    stmts.push(s.op(T::Asg, 3, vec![s.op(T::Ptr, 3, vec![s.v(b, 3)]), s.v(tmp, 3)]));
    Body { stmts, ret: s.v(tmp, RET) }
}

fn clamp_value(s: &Side) -> Body {
    let (x, lo, hi, r) = (0, 1, 2, 3);
    let mut stmts: Vec<AstNode> = s
        .guard(s.op(T::Sgt, GUARD, vec![s.v(lo, GUARD), s.v(hi, GUARD)]))
        .into_iter()
        .collect();
    let inner = s.op(
        T::If,
        5,
        vec![
            s.op(T::Sgt, 5, vec![s.v(x, 4), s.v(hi, 4)]),
            s.block(6, vec![s.op(T::Asg, 6, vec![s.v(r, 6), s.v(hi, 6)])]),
            s.block(7, vec![s.op(T::Asg, 7, vec![s.v(r, 7), s.v(x, 7)])]),
        ],
    );
    stmts.push(s.if_else(
        2,
        s.op(T::Slt, 2, vec![s.v(x, 1), s.v(lo, 1)]),
        vec![s.op(T::Asg, 3, vec![s.v(r, 3), s.v(lo, 3)])],
        vec![inner],
    ));
    Body { stmts, ret: s.v(r, RET) }
}

fn renumber(node: &mut AstNode, next: &mut usize) {
    node.id = *next;
    *next += 1;
    for child in &mut node.children {
        renumber(child, next);
    }
}

/// Generates the (stripped, debug) decompilations of one function drawn from
/// template `template_id`, plus the generator's own record of which names
/// correspond. Deterministic in `(seed, template_id)`.
pub fn generate_synthetic_pair(
    seed: u64,
    template_id: usize,
) -> Result<(Ast, Ast, GroundTruth), SynthError> {
    let template = LIBRARY
        .get(template_id)
        .ok_or(SynthError::UnknownTemplate(template_id, LIBRARY.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (template_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));

    let mut slots = [0u64; SLOTS];
    let mut addr = 0x400 + 0x10 * rng.gen_range(0..0x200u64);
    for slot in &mut slots {
        addr += rng.gen_range(2..8);
        *slot = addr;
    }
    let stripped_loop = if rng.gen_bool(0.5) { LoopForm::For } else { LoopForm::While };
    let flip = template.loops && rng.gen_bool(LOOP_FLIP_RATE);
    let debug_loop = match (stripped_loop, flip) {
        (form, false) => form,
        (LoopForm::For, true) => LoopForm::While,
        (LoopForm::While, true) => LoopForm::For,
    };
    let plan = Plan {
        dialect: rng.gen_range(0..DIALECTS),
        slots,
        stripped_loop,
        debug_loop,
        invert: template.branches && rng.gen_bool(INVERT_RATE),
        guard: rng.gen_bool(GUARD_RATE),
        temp: rng.gen_bool(TEMP_RATE),
        collide: rng.gen_bool(COLLISION_RATE),
        constant: rng.gen_range(0..1000),
    };

    // Decompiler naming: a1.. for arguments, v1.. for locals, in role order.
    let mut args = 0;
    let mut locals = 0;
    let mut decomp_names = Vec::with_capacity(template.roles.len());
    for role in template.roles {
        let name = if role.arg {
            args += 1;
            format!("a{args}")
        } else if role.reserved {
            "result".to_string()
        } else {
            locals += 1;
            format!("v{locals}")
        };
        decomp_names.push(name);
    }
    let mut next_local = || {
        locals += 1;
        format!("v{locals}")
    };
    let temp_name = next_local();
    let collide_names = (next_local(), next_local());

    let stripped_side = Side {
        debug: false,
        plan: &plan,
        names: decomp_names.clone(),
        dtypes: template.roles.iter().map(|r| r.stripped_dtype).collect(),
    };
    let debug_side = Side {
        debug: true,
        plan: &plan,
        names: template.roles.iter().map(|r| r.dev[plan.dialect].to_string()).collect(),
        dtypes: template.roles.iter().map(|r| r.debug_dtype).collect(),
    };
    let dev_collide = COLLISION_NAMES[plan.dialect];

    let emit = |side: &Side, collide: (&str, &str)| -> AstNode {
        let Body { mut stmts, ret } = (template.build)(side);
        if plan.collide {
            let var = |name: &str| {
                AstNode::new(0, T::Var, side.at(COLLIDE)).with_name(name).with_dtype("int")
            };
            stmts.push(side.op(T::Asg, COLLIDE, vec![var(collide.0), var(collide.1)]));
        }
        if !side.debug && plan.temp {
            let tmp = |slot: usize| {
                AstNode::new(0, T::Var, side.at(slot))
                    .with_name(temp_name.clone())
                    .with_dtype("__int64")
            };
            stmts.push(side.op(T::Asg, TEMP_STORE, vec![tmp(TEMP_STORE), ret]));
            stmts.push(side.op(T::Return, RET, vec![tmp(RET)]));
        } else {
            stmts.push(side.op(T::Return, RET, vec![ret]));
        }
        let mut root = AstNode::new(0, T::Block, side.at(1))
            .with_name(template.functions[plan.dialect])
            .with_children(stmts);
        renumber(&mut root, &mut 0);
        root
    };

    let function = template.functions[plan.dialect];
    let stripped = Ast::new(function, emit(&stripped_side, (&collide_names.0, &collide_names.1)))
        .expect("templates produce well-formed trees");
    let debug = Ast::new(function, emit(&debug_side, dev_collide))
        .expect("templates produce well-formed trees");

    let mut truth = GroundTruth {
        template: template_id,
        dialect: plan.dialect,
        divergent: plan.temp || plan.invert || plan.stripped_loop != plan.debug_loop,
        ..GroundTruth::default()
    };
    for (decomp, role) in decomp_names.iter().zip(template.roles) {
        truth.mapping.insert(decomp.clone(), role.dev[plan.dialect].to_string());
    }
    if plan.temp {
        truth.temporaries.insert(temp_name);
    }
    if plan.collide {
        truth.collided.insert(collide_names.0);
        truth.collided.insert(collide_names.1);
    }
    Ok((stripped, debug, truth))
}
