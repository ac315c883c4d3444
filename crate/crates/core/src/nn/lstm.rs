//! LSTM cell, unidirectional layers and bidirectional layers with exact
//! backpropagation through time.
//!
//! Gate blocks are fused into one `4H × (H + I)` weight matrix acting on
//! `[h_prev; x_t]`, in the order forget, input, candidate, output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::mat::{gemm, View, ViewMut};
use super::params::{prefixed, Params};
use crate::error::{FitError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    pub input: usize,
    /// Row-major `4H × (H + I)`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams { hidden, input, w: vec![0.0; 4 * hidden * (hidden + input)], b: vec![0.0; 4 * hidden] }
    }

    /// Uniform ±1/√(H + I) weights, zero biases except forget-gate biases of 1.
    pub fn init<R: Rng + ?Sized>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let mut p = LstmParams::zeros(hidden, input);
        let bound = 1.0 / ((hidden + input).max(1) as f64).sqrt();
        for v in p.w.iter_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        p.b[..hidden].fill(1.0);
        p
    }

    fn width(&self) -> usize {
        self.hidden + self.input
    }

    fn w_h(&self) -> View<'_> {
        View::cols_of(&self.w, 4 * self.hidden, self.width(), 0, self.hidden)
    }

    fn w_x(&self) -> View<'_> {
        View::cols_of(&self.w, 4 * self.hidden, self.width(), self.hidden, self.input)
    }
}

impl Params for LstmParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.w, &self.b]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w, &mut self.b]
    }
    fn names(&self) -> Vec<String> {
        vec!["w".into(), "b".into()]
    }
    fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.hidden, self.input)
    }
}

/// Time-major batch of sequences: value `(t, b, d)` at `(t * batch + b) * dim + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq {
    pub len: usize,
    pub batch: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Seq {
    pub fn zeros(len: usize, batch: usize, dim: usize) -> Self {
        Seq { len, batch, dim, data: vec![0.0; len * batch * dim] }
    }

    pub fn new(len: usize, batch: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * batch * dim {
            return Err(FitError::dims(format!(
                "sequence buffer of {} values, expected {len}x{batch}x{dim}",
                data.len()
            )));
        }
        Ok(Seq { len, batch, dim, data })
    }

    /// Single sequence from per-step vectors.
    pub fn from_steps(steps: &[Vec<f64>]) -> Result<Self> {
        let dim = steps.first().map_or(0, Vec::len);
        if steps.iter().any(|s| s.len() != dim) {
            return Err(FitError::dims("steps differ in width"));
        }
        Seq::new(steps.len(), 1, dim, steps.concat())
    }

    pub fn step(&self, t: usize) -> &[f64] {
        let n = self.batch * self.dim;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, b: usize, d: usize) -> f64 {
        self.data[(t * self.batch + b) * self.dim + d]
    }

    /// Same sequences with time reversed.
    pub fn reversed(&self) -> Seq {
        let n = self.batch * self.dim;
        let mut data = Vec::with_capacity(self.data.len());
        for t in (0..self.len).rev() {
            data.extend_from_slice(&self.data[t * n..(t + 1) * n]);
        }
        Seq { data, ..*self }
    }
}

/// Forward-pass record of a run of LSTM steps.
#[derive(Debug, Clone)]
struct StepCache {
    len: usize,
    batch: usize,
    x: Vec<f64>,
    /// `h_0 .. h_L`, each `batch × H`.
    h: Vec<f64>,
    c: Vec<f64>,
    /// Post-nonlinearity gate values `f, i, c̃, o`, `L·batch × 4H`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn run_steps(p: &LstmParams, x: &[f64], len: usize, batch: usize, h0: &[f64], c0: &[f64]) -> StepCache {
    let (hd, rows) = (p.hidden, len * batch);
    let g4 = 4 * hd;
    let mut gates = Vec::with_capacity(rows * g4);
    for _ in 0..rows {
        gates.extend_from_slice(&p.b);
    }
    gemm(1.0, View::new(x, rows, p.input), p.w_x().t(), 1.0, ViewMut::new(&mut gates, rows, g4));
    let bh = batch * hd;
    let mut h = vec![0.0; (len + 1) * bh];
    let mut c = vec![0.0; (len + 1) * bh];
    h[..bh].copy_from_slice(h0);
    c[..bh].copy_from_slice(c0);
    let mut tanh_c = vec![0.0; rows * hd];
    for t in 0..len {
        let g = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        let (h_prev, h_rest) = h.split_at_mut((t + 1) * bh);
        let h_prev = &h_prev[t * bh..];
        gemm(1.0, View::new(h_prev, batch, hd), p.w_h().t(), 1.0, ViewMut::new(g, batch, g4));
        let (c_prev, c_rest) = c.split_at_mut((t + 1) * bh);
        let c_prev = &c_prev[t * bh..];
        for b in 0..batch {
            let gb = &mut g[b * g4..(b + 1) * g4];
            for k in 0..hd {
                let f = sigmoid(gb[k]);
                let i = sigmoid(gb[hd + k]);
                let cc = gb[2 * hd + k].tanh();
                let o = sigmoid(gb[3 * hd + k]);
                gb[k] = f;
                gb[hd + k] = i;
                gb[2 * hd + k] = cc;
                gb[3 * hd + k] = o;
                let cn = f * c_prev[b * hd + k] + i * cc;
                let tc = cn.tanh();
                c_rest[b * hd + k] = cn;
                tanh_c[(t * batch + b) * hd + k] = tc;
                h_rest[b * hd + k] = o * tc;
            }
        }
    }
    StepCache { len, batch, x: x.to_vec(), h, c, gates, tanh_c }
}

/// Gradients of a run of steps. `dh_out` holds the loss gradient of each
/// emitted `h_t`; `dh_last`/`dc_last` seed the final state. Returns
/// `(dx, dh_0, dc_0)` and accumulates into `grads`.
fn backprop_steps(
    p: &LstmParams,
    cache: &StepCache,
    dh_out: &[f64],
    dh_last: &[f64],
    dc_last: &[f64],
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (hd, batch, len) = (p.hidden, cache.batch, cache.len);
    let (g4, bh, rows) = (4 * hd, batch * hd, len * batch);
    let mut dgates = vec![0.0; rows * g4];
    let mut dh_next = dh_last.to_vec();
    let mut dc_next = dc_last.to_vec();
    for t in (0..len).rev() {
        let gt = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
        let dg = &mut dgates[t * batch * g4..(t + 1) * batch * g4];
        let c_prev = &cache.c[t * bh..(t + 1) * bh];
        let tc = &cache.tanh_c[t * bh..(t + 1) * bh];
        for b in 0..batch {
            for k in 0..hd {
                let j = b * hd + k;
                let gb = &gt[b * g4..];
                let (f, i, cc, o) = (gb[k], gb[hd + k], gb[2 * hd + k], gb[3 * hd + k]);
                let dh = dh_out[t * bh + j] + dh_next[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
                let db = &mut dg[b * g4..];
                db[k] = dc * c_prev[j] * f * (1.0 - f);
                db[hd + k] = dc * cc * i * (1.0 - i);
                db[2 * hd + k] = dc * i * (1.0 - cc * cc);
                db[3 * hd + k] = dh * tc[j] * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
        }
        gemm(1.0, View::new(dg, batch, g4), p.w_h(), 0.0, ViewMut::new(&mut dh_next, batch, hd));
    }
    let width = p.width();
    gemm(
        1.0,
        View::new(&dgates, rows, g4).t(),
        View::new(&cache.h[..rows * hd], rows, hd),
        1.0,
        ViewMut::cols_of(&mut grads.w, g4, width, 0, hd),
    );
    gemm(
        1.0,
        View::new(&dgates, rows, g4).t(),
        View::new(&cache.x, rows, p.input),
        1.0,
        ViewMut::cols_of(&mut grads.w, g4, width, hd, p.input),
    );
    for row in dgates.chunks(g4) {
        for (g, d) in grads.b.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; rows * p.input];
    gemm(1.0, View::new(&dgates, rows, g4), p.w_x(), 0.0, ViewMut::new(&mut dx, rows, p.input));
    (dx, dh_next, dc_next)
}

/// Cache of a single cell step.
#[derive(Debug, Clone)]
pub struct CellCache {
    inner: StepCache,
}

impl CellCache {
    /// Gate activations `(f, i, c̃, o)`.
    pub fn gates(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let h = self.inner.gates.len() / 4;
        let g = &self.inner.gates;
        (&g[..h], &g[h..2 * h], &g[2 * h..3 * h], &g[3 * h..])
    }
}

/// One LSTM step: `c_t = f⊙c_prev + i⊙c̃`, `h_t = o⊙tanh(c_t)`.
pub fn lstm_cell_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    if x.len() != p.input || h_prev.len() != p.hidden || c_prev.len() != p.hidden {
        return Err(FitError::dims(format!(
            "cell with hidden {} and input {} given x {}, h {}, c {}",
            p.hidden,
            p.input,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let inner = run_steps(p, x, 1, 1, h_prev, c_prev);
    let h = inner.h[p.hidden..].to_vec();
    let c = inner.c[p.hidden..].to_vec();
    Ok((h, c, CellCache { inner }))
}

/// Gradients of one cell step given `dL/dh_t` and `dL/dc_t`.
/// Returns `(param grads, dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    p: &LstmParams,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
) -> Result<(LstmParams, Vec<f64>, Vec<f64>, Vec<f64>)> {
    if dh.len() != p.hidden || dc.len() != p.hidden || cache.inner.gates.len() != 4 * p.hidden {
        return Err(FitError::dims("cell gradient does not match the cell"));
    }
    let mut grads = p.zeros_like();
    let (dx, dh0, dc0) = backprop_steps(p, &cache.inner, &vec![0.0; p.hidden], dh, dc, &mut grads);
    Ok((grads, dx, dh0, dc0))
}

/// Cache of a unidirectional layer pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    reverse: bool,
    inner: StepCache,
}

/// Runs a layer from zero state, left to right or (with `reverse`) right to
/// left. Output step `t` is the hidden state after reading input step `t`.
pub fn lstm_forward(p: &LstmParams, seq: &Seq, reverse: bool) -> Result<(Seq, LstmCache)> {
    if seq.len == 0 {
        return Err(FitError::InvalidArgument("empty sequence".into()));
    }
    if seq.dim != p.input {
        return Err(FitError::dims(format!("input width {} for an LSTM expecting {}", seq.dim, p.input)));
    }
    let zero = vec![0.0; seq.batch * p.hidden];
    let ordered = if reverse { seq.reversed() } else { seq.clone() };
    let inner = run_steps(p, &ordered.data, seq.len, seq.batch, &zero, &zero);
    let out = Seq {
        len: seq.len,
        batch: seq.batch,
        dim: p.hidden,
        data: inner.h[seq.batch * p.hidden..].to_vec(),
    };
    let out = if reverse { out.reversed() } else { out };
    Ok((out, LstmCache { reverse, inner }))
}

/// BPTT through a layer. Accumulates into `grads`, returns the input gradient.
pub fn lstm_backward(p: &LstmParams, cache: &LstmCache, dout: &Seq, grads: &mut LstmParams) -> Result<Seq> {
    let c = &cache.inner;
    if dout.len != c.len || dout.batch != c.batch || dout.dim != p.hidden {
        return Err(FitError::dims(format!(
            "upstream {}x{}x{} does not match cached {}x{}x{}",
            dout.len, dout.batch, dout.dim, c.len, c.batch, p.hidden
        )));
    }
    let ordered = if cache.reverse { dout.reversed() } else { dout.clone() };
    let zero = vec![0.0; c.batch * p.hidden];
    let (dx, _, _) = backprop_steps(p, c, &ordered.data, &zero, &zero, grads);
    let dx = Seq { len: c.len, batch: c.batch, dim: p.input, data: dx };
    Ok(if cache.reverse { dx.reversed() } else { dx })
}

/// Forward and backward LSTMs over the same input, concatenated per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstm {
    pub fn init<R: Rng + ?Sized>(hidden: usize, input: usize, rng: &mut R) -> Self {
        BiLstm { fwd: LstmParams::init(hidden, input, rng), bwd: LstmParams::init(hidden, input, rng) }
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        BiLstm { fwd: LstmParams::zeros(hidden, input), bwd: LstmParams::zeros(hidden, input) }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn input(&self) -> usize {
        self.fwd.input
    }
}

impl Params for BiLstm {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.fwd.slices();
        v.extend(self.bwd.slices());
        v
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.fwd.slices_mut();
        v.extend(self.bwd.slices_mut());
        v
    }
    fn names(&self) -> Vec<String> {
        prefixed("fwd", self.fwd.names()).chain(prefixed("bwd", self.bwd.names())).collect()
    }
    fn zeros_like(&self) -> Self {
        BiLstm { fwd: self.fwd.zeros_like(), bwd: self.bwd.zeros_like() }
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

/// Bidirectional layer; output step `t` is `[h_fwd_t; h_bwd_t]`.
pub fn bilstm_forward(layer: &BiLstm, seq: &Seq) -> Result<(Seq, BiLstmCache)> {
    if layer.fwd.hidden != layer.bwd.hidden || layer.fwd.input != layer.bwd.input {
        return Err(FitError::dims("forward and backward directions differ in shape"));
    }
    let (hf, cf) = lstm_forward(&layer.fwd, seq, false)?;
    let (hb, cb) = lstm_forward(&layer.bwd, seq, true)?;
    let hd = layer.hidden();
    let mut out = Seq::zeros(seq.len, seq.batch, 2 * hd);
    for ((dst, a), b) in out.data.chunks_mut(2 * hd).zip(hf.data.chunks(hd)).zip(hb.data.chunks(hd)) {
        dst[..hd].copy_from_slice(a);
        dst[hd..].copy_from_slice(b);
    }
    Ok((out, BiLstmCache { fwd: cf, bwd: cb }))
}

/// Exact BPTT through both directions. Returns parameter and input gradients.
pub fn bptt_backward(layer: &BiLstm, cache: &BiLstmCache, dout: &Seq) -> Result<(BiLstm, Seq)> {
    let hd = layer.hidden();
    if dout.dim != 2 * hd {
        return Err(FitError::dims(format!("upstream width {} for a bidirectional layer of {}", dout.dim, 2 * hd)));
    }
    let mut df = Seq::zeros(dout.len, dout.batch, hd);
    let mut db = Seq::zeros(dout.len, dout.batch, hd);
    for ((src, a), b) in dout.data.chunks(2 * hd).zip(df.data.chunks_mut(hd)).zip(db.data.chunks_mut(hd)) {
        a.copy_from_slice(&src[..hd]);
        b.copy_from_slice(&src[hd..]);
    }
    let mut grads = layer.zeros_like();
    let mut dx = lstm_backward(&layer.fwd, &cache.fwd, &df, &mut grads.fwd)?;
    let dxb = lstm_backward(&layer.bwd, &cache.bwd, &db, &mut grads.bwd)?;
    for (a, b) in dx.data.iter_mut().zip(&dxb.data) {
        *a += b;
    }
    Ok((grads, dx))
}
