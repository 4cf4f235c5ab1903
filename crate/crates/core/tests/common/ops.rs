//! Random instances of every differentiable op and both recurrent cells.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recname::neuro::{gru_cell, lstm_cell, GruParams, LstmParams, ParamStore, Tape, Var};

use super::{random_tensor, weighted_sum, Instance};

pub type Builder = fn(&mut ChaCha8Rng) -> Instance;

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..5)
}

fn param(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize) -> recname::neuro::ParamId {
    store.insert(name, random_tensor(rng, rows, cols, 1.0))
}

macro_rules! unary {
    ($name:ident, $scale:expr, |$t:ident, $a:ident| $body:expr) => {
        fn $name(rng: &mut ChaCha8Rng) -> Instance {
            let (m, n) = (dim(rng), dim(rng));
            let mut store = ParamStore::new();
            let a = store.insert("a", random_tensor(rng, m, n, $scale));
            let probe = {
                let mut tape = Tape::new(&store);
                let $t = &mut tape;
                let $a = $t.param(a);
                let out: Var = $body;
                $t.shape(out)
            };
            let r = random_tensor(rng, probe.0, probe.1, 1.0);
            Instance {
                store,
                loss: Box::new(move |$t: &mut Tape| {
                    let $a = $t.param(a);
                    let out: Var = $body;
                    weighted_sum($t, out, &r)
                }),
            }
        }
    };
}

unary!(scale, 1.0, |t, a| t.scale(a, -1.7));
unary!(sigmoid, 3.0, |t, a| t.sigmoid(a));
unary!(tanh, 3.0, |t, a| t.tanh(a));
unary!(softmax_rows, 3.0, |t, a| t.softmax_rows(a));
unary!(mean_rows, 1.0, |t, a| t.mean_rows(a).unwrap());
unary!(sum, 1.0, |t, a| t.sum(a));

fn reshape(rng: &mut ChaCha8Rng) -> Instance {
    let (m, n) = (dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, n);
    let r = random_tensor(rng, n, m, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let a = t.param(a);
            let out = t.reshape(a, n, m).unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn binary(rng: &mut ChaCha8Rng, which: usize) -> Instance {
    let (m, n) = (dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, n);
    let b = param(&mut store, rng, "b", m, n);
    let r = random_tensor(rng, m, n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let out = match which {
                0 => t.add(a, b),
                1 => t.sub(a, b),
                _ => t.mul(a, b),
            }
            .unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn add(rng: &mut ChaCha8Rng) -> Instance {
    binary(rng, 0)
}

fn sub(rng: &mut ChaCha8Rng) -> Instance {
    binary(rng, 1)
}

fn mul(rng: &mut ChaCha8Rng) -> Instance {
    binary(rng, 2)
}

fn add_row(rng: &mut ChaCha8Rng) -> Instance {
    let (m, n) = (dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, n);
    let b = param(&mut store, rng, "b", 1, n);
    let r = random_tensor(rng, m, n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let out = t.add_row(a, b).unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn matmul(rng: &mut ChaCha8Rng) -> Instance {
    let (m, k, n) = (dim(rng), dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, k);
    let b = param(&mut store, rng, "b", k, n);
    let r = random_tensor(rng, m, n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let out = t.matmul(a, b).unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn matmul_t(rng: &mut ChaCha8Rng) -> Instance {
    let (m, k, n) = (dim(rng), dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, k);
    let b = param(&mut store, rng, "b", n, k);
    let r = random_tensor(rng, m, n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let out = t.matmul_t(a, b).unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn concat(rng: &mut ChaCha8Rng, cols: bool) -> Instance {
    let m = dim(rng);
    let sizes: Vec<usize> = (0..3).map(|_| dim(rng)).collect();
    let mut store = ParamStore::new();
    let parts: Vec<_> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let (rows, c) = if cols { (m, s) } else { (s, m) };
            param(&mut store, rng, &format!("p{i}"), rows, c)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let r = if cols {
        random_tensor(rng, m, total, 1.0)
    } else {
        random_tensor(rng, total, m, 1.0)
    };
    Instance {
        store,
        loss: Box::new(move |t| {
            let vars: Vec<Var> = parts.iter().map(|&p| t.param(p)).collect();
            let out = if cols {
                t.concat_cols(&vars)
            } else {
                t.concat_rows(&vars)
            }
            .unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn concat_cols(rng: &mut ChaCha8Rng) -> Instance {
    concat(rng, true)
}

fn concat_rows(rng: &mut ChaCha8Rng) -> Instance {
    concat(rng, false)
}

fn slice(rng: &mut ChaCha8Rng, cols: bool) -> Instance {
    let (m, n) = (dim(rng) + 1, dim(rng) + 1);
    let extent = if cols { n } else { m };
    let start = rng.gen_range(0..extent);
    let len = rng.gen_range(1..=extent - start);
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, n);
    let r = if cols {
        random_tensor(rng, m, len, 1.0)
    } else {
        random_tensor(rng, len, n, 1.0)
    };
    Instance {
        store,
        loss: Box::new(move |t| {
            let a = t.param(a);
            let out = if cols {
                t.slice_cols(a, start, len)
            } else {
                t.slice_rows(a, start, len)
            }
            .unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn slice_cols(rng: &mut ChaCha8Rng) -> Instance {
    slice(rng, true)
}

fn slice_rows(rng: &mut ChaCha8Rng) -> Instance {
    slice(rng, false)
}

fn gather(rng: &mut ChaCha8Rng) -> Instance {
    let (m, n) = (dim(rng), dim(rng));
    let rows: Vec<usize> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..m)).collect();
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, n);
    let r = random_tensor(rng, rows.len(), n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let a = t.param(a);
            let out = t.gather(a, &rows).unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn segment_mean(rng: &mut ChaCha8Rng) -> Instance {
    let (m, n) = (dim(rng), dim(rng));
    let segments: Vec<Vec<usize>> = (0..rng.gen_range(1..5))
        .map(|_| (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..m)).collect())
        .collect();
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", m, n);
    let r = random_tensor(rng, segments.len(), n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let a = t.param(a);
            let out = t.segment_mean(a, segments.clone()).unwrap();
            weighted_sum(t, out, &r)
        }),
    }
}

fn cross_entropy(rng: &mut ChaCha8Rng) -> Instance {
    let (m, v) = (dim(rng), dim(rng) + 1);
    let targets: Vec<usize> = (0..m).map(|_| rng.gen_range(0..v)).collect();
    let weights: Vec<f64> = (0..m).map(|_| *[1.0, 0.1, 0.5].choose(rng).unwrap()).collect();
    let mut store = ParamStore::new();
    let a = store.insert("logits", random_tensor(rng, m, v, 3.0));
    Instance {
        store,
        loss: Box::new(move |t| {
            let a = t.param(a);
            t.cross_entropy(a, &targets, &weights).unwrap()
        }),
    }
}

/// Three random ops chained, sharing one parameter twice.
fn composition(rng: &mut ChaCha8Rng) -> Instance {
    let n = dim(rng);
    let mut store = ParamStore::new();
    let a = param(&mut store, rng, "a", n, n);
    let b = param(&mut store, rng, "b", n, n);
    let ops: Vec<usize> = (0..3).map(|_| rng.gen_range(0..6)).collect();
    let r = random_tensor(rng, n, n, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (a, b) = (t.param(a), t.param(b));
            let mut x = a;
            for &op in &ops {
                x = match op {
                    0 => t.matmul(x, b).unwrap(),
                    1 => t.tanh(x),
                    2 => t.sigmoid(x),
                    3 => t.softmax_rows(x),
                    4 => t.mul(x, a).unwrap(),
                    _ => t.matmul_t(x, a).unwrap(),
                };
            }
            weighted_sum(t, x, &r)
        }),
    }
}

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        let t = store.get(id);
        let fresh = random_tensor(rng, t.rows(), t.cols(), 0.8);
        *store.get_mut(id) = fresh;
    }
}

fn lstm(rng: &mut ChaCha8Rng) -> Instance {
    let (input, hidden, rows) = (dim(rng), 4, dim(rng));
    let mut store = ParamStore::new();
    let p = LstmParams::new(&mut store, "cell", input, hidden, &mut ChaCha8Rng::seed_from_u64(rng.gen()));
    let x = store.insert_zeros("x", rows, input);
    let h = store.insert_zeros("h", rows, hidden);
    let c = store.insert_zeros("c", rows, hidden);
    randomize(&mut store, rng);
    let rh = random_tensor(rng, rows, hidden, 1.0);
    let rc = random_tensor(rng, rows, hidden, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (xv, hv, cv) = (t.param(x), t.param(h), t.param(c));
            let (h1, c1) = lstm_cell(t, xv, hv, cv, &p).unwrap();
            let a = weighted_sum(t, h1, &rh);
            let b = weighted_sum(t, c1, &rc);
            t.add(a, b).unwrap()
        }),
    }
}

fn gru(rng: &mut ChaCha8Rng) -> Instance {
    let (input, hidden, rows) = (dim(rng), dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let p = GruParams::new(&mut store, "cell", input, hidden, &mut ChaCha8Rng::seed_from_u64(rng.gen()));
    let x = store.insert_zeros("x", rows, input);
    let h = store.insert_zeros("h", rows, hidden);
    randomize(&mut store, rng);
    let r = random_tensor(rng, rows, hidden, 1.0);
    Instance {
        store,
        loss: Box::new(move |t| {
            let (xv, hv) = (t.param(x), t.param(h));
            let h1 = gru_cell(t, xv, hv, &p).unwrap();
            weighted_sum(t, h1, &r)
        }),
    }
}

pub const OPS: &[(&str, Builder)] = &[
    ("matmul", matmul),
    ("matmul_t", matmul_t),
    ("add", add),
    ("sub", sub),
    ("mul", mul),
    ("add_row", add_row),
    ("scale", scale),
    ("sigmoid", sigmoid),
    ("tanh", tanh),
    ("concat_cols", concat_cols),
    ("concat_rows", concat_rows),
    ("slice_cols", slice_cols),
    ("slice_rows", slice_rows),
    ("reshape", reshape),
    ("gather", gather),
    ("segment_mean", segment_mean),
    ("mean_rows", mean_rows),
    ("softmax_rows", softmax_rows),
    ("sum", sum),
    ("cross_entropy", cross_entropy),
    ("composition", composition),
];

pub const CELLS: &[(&str, Builder)] = &[("lstm_cell", lstm), ("gru_cell", gru)];
