use rand_chacha::ChaCha8Rng;

use super::{NeuroError, ParamId, ParamStore, Tape, Var};

/// `y = x · W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: store.insert_glorot(&format!("{name}.w"), input, output, rng),
            b: store.insert_zeros(&format!("{name}.b"), 1, output),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, NeuroError> {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

/// LSTM weights with gate blocks laid out as `[input, forget, cell, output]`.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        LstmParams {
            wx: store.insert_glorot(&format!("{name}.wx"), input, 4 * hidden, rng),
            wh: store.insert_glorot(&format!("{name}.wh"), hidden, 4 * hidden, rng),
            b: store.insert_zeros(&format!("{name}.b"), 1, 4 * hidden),
            hidden,
        }
    }

    /// `x · Wx + b` for every row of `x` at once; feed rows of the result to
    /// [`lstm_step`].
    pub fn project_inputs(&self, tape: &mut Tape, x: Var) -> Result<Var, NeuroError> {
        let (wx, b) = (tape.param(self.wx), tape.param(self.b));
        let xw = tape.matmul(x, wx)?;
        tape.add_row(xw, b)
    }
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_cell(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var), NeuroError> {
    let xp = p.project_inputs(tape, x)?;
    lstm_step(tape, xp, h_prev, c_prev, p)
}

/// LSTM step from an already projected input `x · Wx + b`.
pub fn lstm_step(tape: &mut Tape, xp: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var), NeuroError> {
    let n = p.hidden;
    let wh = tape.param(p.wh);
    let hw = tape.matmul(h_prev, wh)?;
    let gates = tape.add(xp, hw)?;
    let i = tape.slice_cols(gates, 0, n)?;
    let f = tape.slice_cols(gates, n, n)?;
    let g = tape.slice_cols(gates, 2 * n, n)?;
    let o = tape.slice_cols(gates, 3 * n, n)?;
    let (i, f, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.sigmoid(o));
    let g = tape.tanh(g);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// GRU weights: input blocks `[update, reset, candidate]`.
#[derive(Clone, Debug)]
pub struct GruParams {
    pub wx: ParamId,
    pub uzr: ParamId,
    pub uh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl GruParams {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        GruParams {
            wx: store.insert_glorot(&format!("{name}.wx"), input, 3 * hidden, rng),
            uzr: store.insert_glorot(&format!("{name}.uzr"), hidden, 2 * hidden, rng),
            uh: store.insert_glorot(&format!("{name}.uh"), hidden, hidden, rng),
            b: store.insert_zeros(&format!("{name}.b"), 1, 3 * hidden),
            hidden,
        }
    }
}

/// GRU update `h + z ⊙ (ĥ − h)`; rows of `x` and `h_prev` are independent,
/// so a whole set of nodes can be updated in one call.
pub fn gru_cell(tape: &mut Tape, x: Var, h_prev: Var, p: &GruParams) -> Result<Var, NeuroError> {
    let n = p.hidden;
    let (wx, uzr, uh, b) = (tape.param(p.wx), tape.param(p.uzr), tape.param(p.uh), tape.param(p.b));
    let xw = tape.matmul(x, wx)?;
    let xp = tape.add_row(xw, b)?;
    let hu = tape.matmul(h_prev, uzr)?;
    let xz = tape.slice_cols(xp, 0, n)?;
    let hz = tape.slice_cols(hu, 0, n)?;
    let z = tape.add(xz, hz)?;
    let z = tape.sigmoid(z);
    let xr = tape.slice_cols(xp, n, n)?;
    let hr = tape.slice_cols(hu, n, n)?;
    let r = tape.add(xr, hr)?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h_prev)?;
    let rhu = tape.matmul(rh, uh)?;
    let xh = tape.slice_cols(xp, 2 * n, n)?;
    let cand = tape.add(xh, rhu)?;
    let cand = tape.tanh(cand);
    let delta = tape.sub(cand, h_prev)?;
    let step = tape.mul(z, delta)?;
    tape.add(h_prev, step)
}
