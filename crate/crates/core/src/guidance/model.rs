//! Causal self-attention policy/value model with manual backpropagation.
//!
//! Parameters live in one flat `Vec<f64>` addressed through an offset table,
//! which keeps the SGD step, L2 penalty, serialization and finite-difference
//! checks trivial. The input sequence is `[BOS, state..., parent, sibling]`
//! where parent/sibling of the pending slot are appended as extra features
//! and absent ones encode as a reserved padding id.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{entropy, ReplayEntry};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    /// L2 coefficient (xi in the loss).
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub entropy_term_enabled: bool,
    /// Arity of each vocabulary token id, used to recover the parent/sibling
    /// features from a raw id sequence.
    pub arities: Vec<u8>,
}

impl ModelConfig {
    pub fn for_vocab_arities(arities: Vec<u8>, max_length: usize) -> Self {
        Self {
            vocab_size: arities.len(),
            embed_dim: 64,
            layers: 2,
            heads: 4,
            max_seq_len: max_length + 3,
            l2_coeff: 1e-4,
            learning_rate: 1e-3,
            momentum: 0.0,
            entropy_term_enabled: true,
            arities,
        }
    }

    fn shape(&self) -> Shape {
        assert_eq!(self.embed_dim % self.heads, 0, "embed_dim must divide by heads");
        assert_eq!(self.arities.len(), self.vocab_size);
        let v = self.vocab_size;
        let d = self.embed_dim;
        let hid = 4 * d;
        let in_vocab = v + 2; // + PAD + BOS
        let o_tok = 0;
        let o_pos = o_tok + in_vocab * d;
        let o_layers = o_pos + self.max_seq_len * d;
        // per layer: wq wk wv wo (d*d each), w1 (hid*d), b1, w2 (d*hid), b2
        let layer_stride = 4 * d * d + hid * d + hid + d * hid + d;
        let o_wpol = o_layers + self.layers * layer_stride;
        let o_bpol = o_wpol + v * d;
        let o_wval = o_bpol + v;
        let o_bval = o_wval + d;
        let n = o_bval + 1;
        Shape {
            v,
            d,
            hid,
            heads: self.heads,
            hd: d / self.heads,
            layers: self.layers,
            o_pos,
            o_layers,
            layer_stride,
            o_wpol,
            o_bpol,
            o_wval,
            o_bval,
            n,
        }
    }
}

#[derive(Clone, Copy)]
struct Shape {
    v: usize,
    d: usize,
    hid: usize,
    heads: usize,
    hd: usize,
    layers: usize,
    o_pos: usize,
    o_layers: usize,
    layer_stride: usize,
    o_wpol: usize,
    o_bpol: usize,
    o_wval: usize,
    o_bval: usize,
    n: usize,
}

impl Shape {
    fn layer(&self, l: usize) -> LayerOffsets {
        let base = self.o_layers + l * self.layer_stride;
        let dd = self.d * self.d;
        LayerOffsets {
            wq: base,
            wk: base + dd,
            wv: base + 2 * dd,
            wo: base + 3 * dd,
            w1: base + 4 * dd,
            b1: base + 4 * dd + self.hid * self.d,
            w2: base + 4 * dd + self.hid * self.d + self.hid,
            b2: base + 4 * dd + self.hid * self.d + self.hid + self.d * self.hid,
        }
    }
}

#[derive(Clone, Copy)]
struct LayerOffsets {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValueOutput {
    pub p: Vec<f64>,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainStats {
    pub mean_loss: f64,
    pub mean_entropy: f64,
    pub skipped_non_finite: bool,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("state of length {0} does not fit max_seq_len {1}")]
    StateTooLong(usize, usize),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint version {0} is not supported")]
    BadVersion(u32),
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    theta: Vec<f64>,
}

/// Report of one analytic-vs-finite-difference gradient comparison.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct PolicyValueModel {
    pub cfg: ModelConfig,
    theta: Vec<f64>,
    velocity: Vec<f64>,
}

// y += W x for row-major W: (n_out x n_in)
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let n_in = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &w[i * n_in..(i + 1) * n_in];
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        *yi += s;
    }
}

// dx += W^T dy ; gw += dy (outer) x
fn matvec_back(w: &[f64], gw: &mut [f64], x: &[f64], dy: &[f64], dx: &mut [f64]) {
    let n_in = x.len();
    for (i, &dyi) in dy.iter().enumerate() {
        if dyi == 0.0 {
            continue;
        }
        let row = &w[i * n_in..(i + 1) * n_in];
        let grow = &mut gw[i * n_in..(i + 1) * n_in];
        for j in 0..n_in {
            grow[j] += dyi * x[j];
            dx[j] += dyi * row[j];
        }
    }
}

struct Cache {
    ids: Vec<usize>,
    // per layer: input x, q/k/v, attention weights (heads*T*T), post-attention
    // residual x_mid, tanh activations h; plus the final x
    xs: Vec<Vec<f64>>,
    qs: Vec<Vec<f64>>,
    ks: Vec<Vec<f64>>,
    vs: Vec<Vec<f64>>,
    atts: Vec<Vec<f64>>,
    x_mids: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    p: Vec<f64>,
    value: f64,
    mask: Vec<bool>,
}

impl PolicyValueModel {
    pub fn init<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Self {
        let sh = cfg.shape();
        let normal = Normal::new(0.0, 0.02).unwrap();
        let mut theta: Vec<f64> = (0..sh.n).map(|_| normal.sample(rng)).collect();
        // biases start at zero
        for l in 0..sh.layers {
            let off = sh.layer(l);
            theta[off.b1..off.b1 + sh.hid].fill(0.0);
            theta[off.b2..off.b2 + sh.d].fill(0.0);
        }
        theta[sh.o_bpol..sh.o_bpol + sh.v].fill(0.0);
        theta[sh.o_bval] = 0.0;
        let velocity = vec![0.0; sh.n];
        Self { cfg, theta, velocity }
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Parent and sibling ids of the pending slot, recovered from the raw id
    /// sequence via the arity table. `None` encodes as the padding id.
    fn parent_sibling_ids(&self, state: &[usize]) -> (Option<usize>, Option<usize>) {
        let ar = |id: usize| self.cfg.arities[id] as i64;
        let n = state.len();
        if n == 0 {
            return (None, None);
        }
        if ar(state[n - 1]) > 0 {
            return (Some(state[n - 1]), None);
        }
        let mut counter: i64 = 0;
        for i in (0..n).rev() {
            counter += ar(state[i]) - 1;
            if counter == 0 {
                return (Some(state[i]), Some(state[i + 1]));
            }
        }
        (None, None)
    }

    fn input_ids(&self, state: &[usize]) -> Result<Vec<usize>, ModelError> {
        if state.len() + 3 > self.cfg.max_seq_len {
            return Err(ModelError::StateTooLong(state.len(), self.cfg.max_seq_len));
        }
        let pad = self.cfg.vocab_size;
        let bos = self.cfg.vocab_size + 1;
        let (parent, sibling) = self.parent_sibling_ids(state);
        let mut ids = Vec::with_capacity(state.len() + 3);
        ids.push(bos);
        ids.extend_from_slice(state);
        ids.push(parent.unwrap_or(pad));
        ids.push(sibling.unwrap_or(pad));
        Ok(ids)
    }

    /// Deterministic policy/value evaluation of a state under a legality
    /// mask. Masked-out tokens receive probability exactly zero.
    pub fn forward(&self, state: &[usize], mask: &[bool]) -> Result<PolicyValueOutput, ModelError> {
        let cache = self.forward_cached(state, mask)?;
        Ok(PolicyValueOutput { p: cache.p, v: cache.value })
    }

    fn forward_cached(&self, state: &[usize], mask: &[bool]) -> Result<Cache, ModelError> {
        assert_eq!(mask.len(), self.cfg.vocab_size);
        assert!(mask.iter().any(|&m| m), "all-false legality mask");
        let sh = self.cfg.shape();
        let ids = self.input_ids(state)?;
        let t_len = ids.len();
        let d = sh.d;

        let mut x = vec![0.0; t_len * d];
        for (t, &id) in ids.iter().enumerate() {
            let emb = &self.theta[id * d..(id + 1) * d];
            let pos = &self.theta[sh.o_pos + t * d..sh.o_pos + (t + 1) * d];
            for j in 0..d {
                x[t * d + j] = emb[j] + pos[j];
            }
        }

        let mut xs = Vec::with_capacity(sh.layers + 1);
        let mut qs = Vec::with_capacity(sh.layers);
        let mut ks = Vec::with_capacity(sh.layers);
        let mut vs = Vec::with_capacity(sh.layers);
        let mut atts = Vec::with_capacity(sh.layers);
        let mut x_mids = Vec::with_capacity(sh.layers);
        let mut hs = Vec::with_capacity(sh.layers);

        for l in 0..sh.layers {
            let off = sh.layer(l);
            xs.push(x.clone());
            let mut q = vec![0.0; t_len * d];
            let mut k = vec![0.0; t_len * d];
            let mut v = vec![0.0; t_len * d];
            for t in 0..t_len {
                let xt = &x[t * d..(t + 1) * d];
                matvec_acc(&self.theta[off.wq..off.wq + d * d], xt, &mut q[t * d..(t + 1) * d]);
                matvec_acc(&self.theta[off.wk..off.wk + d * d], xt, &mut k[t * d..(t + 1) * d]);
                matvec_acc(&self.theta[off.wv..off.wv + d * d], xt, &mut v[t * d..(t + 1) * d]);
            }
            let scale = 1.0 / (sh.hd as f64).sqrt();
            let mut att = vec![0.0; sh.heads * t_len * t_len];
            let mut ctx = vec![0.0; t_len * d];
            for h in 0..sh.heads {
                let hoff = h * sh.hd;
                for t in 0..t_len {
                    let qt = &q[t * d + hoff..t * d + hoff + sh.hd];
                    let row = &mut att[(h * t_len + t) * t_len..(h * t_len + t + 1) * t_len];
                    let mut maxs = f64::NEG_INFINITY;
                    for u in 0..=t {
                        let ku = &k[u * d + hoff..u * d + hoff + sh.hd];
                        let s: f64 = qt.iter().zip(ku).map(|(a, b)| a * b).sum::<f64>() * scale;
                        row[u] = s;
                        maxs = maxs.max(s);
                    }
                    let mut z = 0.0;
                    for u in 0..=t {
                        row[u] = (row[u] - maxs).exp();
                        z += row[u];
                    }
                    for u in 0..=t {
                        row[u] /= z;
                        let vu = &v[u * d + hoff..u * d + hoff + sh.hd];
                        for j in 0..sh.hd {
                            ctx[t * d + hoff + j] += row[u] * vu[j];
                        }
                    }
                }
            }
            for t in 0..t_len {
                let ct = &ctx[t * d..(t + 1) * d];
                let mut out = vec![0.0; d];
                matvec_acc(&self.theta[off.wo..off.wo + d * d], ct, &mut out);
                for j in 0..d {
                    x[t * d + j] += out[j];
                }
            }
            // `ctx` is recomputable from att and v; we keep att and v only.
            x_mids.push(x.clone());
            let mut h_all = vec![0.0; t_len * sh.hid];
            for t in 0..t_len {
                let xt = x[t * d..(t + 1) * d].to_vec();
                let mut pre = self.theta[off.b1..off.b1 + sh.hid].to_vec();
                matvec_acc(&self.theta[off.w1..off.w1 + sh.hid * d], &xt, &mut pre);
                for j in 0..sh.hid {
                    h_all[t * sh.hid + j] = pre[j].tanh();
                }
                let mut mlp = self.theta[off.b2..off.b2 + d].to_vec();
                matvec_acc(
                    &self.theta[off.w2..off.w2 + d * sh.hid],
                    &h_all[t * sh.hid..(t + 1) * sh.hid],
                    &mut mlp,
                );
                for j in 0..d {
                    x[t * d + j] += mlp[j];
                }
            }
            qs.push(q);
            ks.push(k);
            vs.push(v);
            atts.push(att);
            hs.push(h_all);
        }
        xs.push(x.clone());

        let xf = &x[(t_len - 1) * d..t_len * d];
        let mut logits = self.theta[sh.o_bpol..sh.o_bpol + sh.v].to_vec();
        matvec_acc(&self.theta[sh.o_wpol..sh.o_wpol + sh.v * d], xf, &mut logits);
        let mut p = vec![0.0; sh.v];
        let maxl = logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for i in 0..sh.v {
            if mask[i] {
                p[i] = (logits[i] - maxl).exp();
                z += p[i];
            }
        }
        for v in &mut p {
            *v /= z;
        }
        let mut u = self.theta[sh.o_bval];
        u += self.theta[sh.o_wval..sh.o_wval + d]
            .iter()
            .zip(xf)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        let value = 1.0 / (1.0 + (-u).exp());

        Ok(Cache {
            ids,
            xs,
            qs,
            ks,
            vs,
            atts,
            x_mids,
            hs,
            p,
            value,
            mask: mask.to_vec(),
        })
    }

    /// Loss of one replay entry:
    /// `(z - v)^2 - pi^T log p [+ entropy of p] + xi * ||theta||^2`.
    pub fn loss(&self, entry: &ReplayEntry) -> Result<f64, ModelError> {
        let cache = self.forward_cached(&entry.state, &entry.mask)?;
        Ok(self.loss_from_cache(&cache, entry))
    }

    fn loss_from_cache(&self, cache: &Cache, entry: &ReplayEntry) -> f64 {
        let eps = 1e-12;
        let mut l = (entry.z - cache.value) * (entry.z - cache.value);
        for (pi, p) in entry.pi.iter().zip(&cache.p) {
            if *pi > 0.0 {
                l -= pi * p.max(eps).ln();
            }
        }
        if self.cfg.entropy_term_enabled {
            l += entropy(&cache.p);
        }
        let l2: f64 = self.theta.iter().map(|t| t * t).sum();
        l + self.cfg.l2_coeff * l2
    }

    /// Loss and dense gradient for one entry.
    pub fn loss_and_grad(&self, entry: &ReplayEntry) -> Result<(f64, Vec<f64>), ModelError> {
        let sh = self.cfg.shape();
        let mut grad = vec![0.0; sh.n];
        let cache = self.forward_cached(&entry.state, &entry.mask)?;
        let loss = self.loss_from_cache(&cache, entry);
        self.backward(&cache, entry, &mut grad);
        for (g, t) in grad.iter_mut().zip(&self.theta) {
            *g += 2.0 * self.cfg.l2_coeff * t;
        }
        Ok((loss, grad))
    }

    fn backward(&self, cache: &Cache, entry: &ReplayEntry, grad: &mut [f64]) {
        let sh = self.cfg.shape();
        let d = sh.d;
        let t_len = cache.ids.len();
        let eps = 1e-12;

        // gradient at the policy logits
        let h_p = entropy(&cache.p);
        let mut dlogits = vec![0.0; sh.v];
        for i in 0..sh.v {
            if !cache.mask[i] {
                continue;
            }
            let p = cache.p[i];
            dlogits[i] = p - entry.pi[i];
            if self.cfg.entropy_term_enabled {
                dlogits[i] += -p * (p.max(eps).ln() + h_p);
            }
        }
        // gradient at the value pre-activation
        let v = cache.value;
        let du = 2.0 * (v - entry.z) * v * (1.0 - v);

        let xf = &cache.xs[sh.layers][(t_len - 1) * d..t_len * d];
        let mut dx = vec![0.0; t_len * d];
        {
            let dxf = &mut dx[(t_len - 1) * d..t_len * d];
            matvec_back(
                &self.theta[sh.o_wpol..sh.o_wpol + sh.v * d],
                &mut grad[sh.o_wpol..sh.o_wpol + sh.v * d],
                xf,
                &dlogits,
                dxf,
            );
            for i in 0..sh.v {
                grad[sh.o_bpol + i] += dlogits[i];
            }
            for j in 0..d {
                grad[sh.o_wval + j] += du * xf[j];
                dxf[j] += du * self.theta[sh.o_wval + j];
            }
            grad[sh.o_bval] += du;
        }

        for l in (0..sh.layers).rev() {
            let off = sh.layer(l);
            let x_mid = &cache.x_mids[l];
            let h_all = &cache.hs[l];
            // MLP backward (residual: dx flows through unchanged as well)
            let mut dx_mid = dx.clone();
            for t in 0..t_len {
                let dmlp = &dx[t * d..(t + 1) * d];
                if dmlp.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let ht = &h_all[t * sh.hid..(t + 1) * sh.hid];
                let mut dh = vec![0.0; sh.hid];
                matvec_back(
                    &self.theta[off.w2..off.w2 + d * sh.hid],
                    &mut grad[off.w2..off.w2 + d * sh.hid],
                    ht,
                    dmlp,
                    &mut dh,
                );
                for j in 0..d {
                    grad[off.b2 + j] += dmlp[j];
                }
                let mut dpre = vec![0.0; sh.hid];
                for j in 0..sh.hid {
                    dpre[j] = dh[j] * (1.0 - ht[j] * ht[j]);
                }
                let xt = &x_mid[t * d..(t + 1) * d];
                matvec_back(
                    &self.theta[off.w1..off.w1 + sh.hid * d],
                    &mut grad[off.w1..off.w1 + sh.hid * d],
                    xt,
                    &dpre,
                    &mut dx_mid[t * d..(t + 1) * d],
                );
                for j in 0..sh.hid {
                    grad[off.b1 + j] += dpre[j];
                }
            }
            // attention backward
            let x_in = &cache.xs[l];
            let q = &cache.qs[l];
            let k = &cache.ks[l];
            let vv = &cache.vs[l];
            let att = &cache.atts[l];
            // recompute ctx from att and v
            let mut ctx = vec![0.0; t_len * d];
            for h in 0..sh.heads {
                let hoff = h * sh.hd;
                for t in 0..t_len {
                    let row = &att[(h * t_len + t) * t_len..(h * t_len + t + 1) * t_len];
                    for u in 0..=t {
                        let vu = &vv[u * d + hoff..u * d + hoff + sh.hd];
                        for j in 0..sh.hd {
                            ctx[t * d + hoff + j] += row[u] * vu[j];
                        }
                    }
                }
            }
            let mut dx_in = dx_mid.clone();
            let mut dctx = vec![0.0; t_len * d];
            for t in 0..t_len {
                let dout = &dx_mid[t * d..(t + 1) * d];
                if dout.iter().all(|&v| v == 0.0) {
                    continue;
                }
                matvec_back(
                    &self.theta[off.wo..off.wo + d * d],
                    &mut grad[off.wo..off.wo + d * d],
                    &ctx[t * d..(t + 1) * d],
                    dout,
                    &mut dctx[t * d..(t + 1) * d],
                );
            }
            let scale = 1.0 / (sh.hd as f64).sqrt();
            let mut dq = vec![0.0; t_len * d];
            let mut dk = vec![0.0; t_len * d];
            let mut dv = vec![0.0; t_len * d];
            for h in 0..sh.heads {
                let hoff = h * sh.hd;
                for t in 0..t_len {
                    let row = &att[(h * t_len + t) * t_len..(h * t_len + t + 1) * t_len];
                    let dctx_t = &dctx[t * d + hoff..t * d + hoff + sh.hd];
                    if dctx_t.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let mut da = vec![0.0; t + 1];
                    for u in 0..=t {
                        let vu = &vv[u * d + hoff..u * d + hoff + sh.hd];
                        let mut s = 0.0;
                        for j in 0..sh.hd {
                            s += dctx_t[j] * vu[j];
                            dv[u * d + hoff + j] += row[u] * dctx_t[j];
                        }
                        da[u] = s;
                    }
                    let inner: f64 = (0..=t).map(|u| row[u] * da[u]).sum();
                    for u in 0..=t {
                        let ds = row[u] * (da[u] - inner);
                        if ds == 0.0 {
                            continue;
                        }
                        let qt = &q[t * d + hoff..t * d + hoff + sh.hd];
                        let ku = &k[u * d + hoff..u * d + hoff + sh.hd];
                        for j in 0..sh.hd {
                            dq[t * d + hoff + j] += ds * ku[j] * scale;
                            dk[u * d + hoff + j] += ds * qt[j] * scale;
                        }
                    }
                }
            }
            for t in 0..t_len {
                let xt = &x_in[t * d..(t + 1) * d];
                let dxt = &mut dx_in[t * d..(t + 1) * d];
                matvec_back(
                    &self.theta[off.wq..off.wq + d * d],
                    &mut grad[off.wq..off.wq + d * d],
                    xt,
                    &dq[t * d..(t + 1) * d],
                    dxt,
                );
                matvec_back(
                    &self.theta[off.wk..off.wk + d * d],
                    &mut grad[off.wk..off.wk + d * d],
                    xt,
                    &dk[t * d..(t + 1) * d],
                    dxt,
                );
                matvec_back(
                    &self.theta[off.wv..off.wv + d * d],
                    &mut grad[off.wv..off.wv + d * d],
                    xt,
                    &dv[t * d..(t + 1) * d],
                    dxt,
                );
            }
            dx = dx_in;
        }

        for (t, &id) in cache.ids.iter().enumerate() {
            for j in 0..d {
                grad[id * d + j] += dx[t * d + j];
                grad[sh.o_pos + t * d + j] += dx[t * d + j];
            }
        }
    }

    /// One gradient-descent update on the mean loss over the batch. A
    /// non-finite loss skips the update and is flagged in the stats.
    pub fn train_step(&mut self, batch: &[ReplayEntry]) -> Result<TrainStats, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let sh = self.cfg.shape();
        let mut grad = vec![0.0; sh.n];
        let mut total_loss = 0.0;
        let mut total_entropy = 0.0;
        for entry in batch {
            let (loss, g) = self.loss_and_grad(entry)?;
            total_loss += loss;
            let out = self.forward(&entry.state, &entry.mask)?;
            total_entropy += entropy(&out.p);
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let n = batch.len() as f64;
        let mean_loss = total_loss / n;
        let mean_entropy = total_entropy / n;
        if !mean_loss.is_finite() {
            return Ok(TrainStats { mean_loss, mean_entropy, skipped_non_finite: true });
        }
        let lr = self.cfg.learning_rate;
        let mu = self.cfg.momentum;
        for i in 0..sh.n {
            let g = grad[i] / n;
            self.velocity[i] = mu * self.velocity[i] + g;
            self.theta[i] -= lr * self.velocity[i];
        }
        Ok(TrainStats { mean_loss, mean_entropy, skipped_non_finite: false })
    }

    /// Compares the analytic gradient against central finite differences at
    /// `coords`, returning one report per coordinate.
    pub fn gradient_check(&self, entry: &ReplayEntry, coords: &[usize]) -> Vec<GradCheckReport> {
        let (_, grad) = self.loss_and_grad(entry).expect("grad");
        let mut reports = Vec::with_capacity(coords.len());
        let mut probe = self.clone();
        for &c in coords {
            let h = 1e-5 * (1.0 + self.theta[c].abs());
            probe.theta[c] = self.theta[c] + h;
            let fp = probe.loss(entry).expect("loss+");
            probe.theta[c] = self.theta[c] - h;
            let fm = probe.loss(entry).expect("loss-");
            probe.theta[c] = self.theta[c];
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grad[c];
            let denom = analytic.abs().max(numeric.abs());
            // below ~1e-9 the difference is finite-difference noise
            let rel_error = if (analytic - numeric).abs() < 1e-9 {
                0.0
            } else {
                (analytic - numeric).abs() / denom
            };
            reports.push(GradCheckReport { coord: c, analytic, numeric, rel_error });
        }
        reports
    }

    /// Versioned JSON checkpoint; loading restores bitwise-identical
    /// behavior (shortest round-trip float formatting).
    pub fn save(&self) -> String {
        serde_json::to_string(&Checkpoint {
            version: 1,
            config: self.cfg.clone(),
            theta: self.theta.clone(),
        })
        .expect("checkpoint serialization")
    }

    pub fn load(text: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        if ck.version != 1 {
            return Err(ModelError::BadVersion(ck.version));
        }
        let sh = ck.config.shape();
        if ck.theta.len() != sh.n {
            return Err(ModelError::BadCheckpoint(format!(
                "expected {} parameters, found {}",
                sh.n,
                ck.theta.len()
            )));
        }
        let velocity = vec![0.0; sh.n];
        Ok(Self { cfg: ck.config, theta: ck.theta, velocity })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn tiny_cfg(vocab: usize) -> ModelConfig {
        // arity table shaped like the standard library prefix
        let arities: Vec<u8> = (0..vocab).map(|i| if i < 2 { 2 } else if i < 4 { 1 } else { 0 }).collect();
        ModelConfig {
            vocab_size: vocab,
            embed_dim: 16,
            layers: 2,
            heads: 2,
            max_seq_len: 16,
            l2_coeff: 1e-4,
            learning_rate: 5e-2,
            momentum: 0.0,
            entropy_term_enabled: true,
            arities,
        }
    }

    fn entry(vocab: usize) -> ReplayEntry {
        let mut pi = vec![0.0; vocab];
        pi[0] = 0.5;
        pi[4] = 0.5;
        let mut mask = vec![true; vocab];
        mask[1] = false;
        ReplayEntry { state: vec![0, 4], pi, z: 0.75, mask }
    }

    #[test]
    fn forward_is_a_masked_simplex() {
        let mut rng = substream(1, "model", 0);
        let m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        let e = entry(6);
        let out = m.forward(&e.state, &e.mask).unwrap();
        let sum: f64 = out.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(out.p[1], 0.0);
        assert!(out.p.iter().all(|&p| p >= 0.0));
        assert!(out.v > 0.0 && out.v < 1.0);
    }

    #[test]
    fn single_legal_token_is_one_hot() {
        let mut rng = substream(2, "model", 0);
        let m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        let mut mask = vec![false; 6];
        mask[3] = true;
        let out = m.forward(&[0, 4], &mask).unwrap();
        assert_eq!(out.p[3], 1.0);
        assert_eq!(out.p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = substream(3, "model", 0);
        let m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        let e = entry(6);
        let a = m.forward(&e.state, &e.mask).unwrap();
        let b = m.forward(&e.state, &e.mask).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversize_state_rejected() {
        let mut rng = substream(4, "model", 0);
        let m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        let state = vec![4usize; 20];
        assert!(m.forward(&state, &vec![true; 6]).is_err());
    }

    #[test]
    fn loss_vanishes_at_perfect_prediction() {
        // analytic case: uniform p, one-hot pi, v == z, xi = 0
        // L = -log p_target + H(uniform) = 2 log K
        let mut rng = substream(5, "model", 0);
        let mut cfg = tiny_cfg(6);
        cfg.l2_coeff = 0.0;
        let m = PolicyValueModel::init(cfg, &mut rng);
        let mut e = entry(6);
        e.mask = vec![true; 6];
        e.pi = vec![0.0; 6];
        e.pi[2] = 1.0;
        let out = m.forward(&e.state, &e.mask).unwrap();
        e.z = out.v;
        let l = m.loss(&e).unwrap();
        // with a random init p is near-uniform; exact value needs exact p
        let expected: f64 =
            -out.p[2].ln() + out.p.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_ablation_removes_exactly_that_term() {
        let mut rng = substream(6, "model", 0);
        let mut cfg = tiny_cfg(6);
        cfg.l2_coeff = 0.0;
        let m_on = PolicyValueModel::init(cfg.clone(), &mut rng);
        let mut m_off = m_on.clone();
        m_off.cfg.entropy_term_enabled = false;
        let e = entry(6);
        let out = m_on.forward(&e.state, &e.mask).unwrap();
        let h: f64 = out.p.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
        let diff = m_on.loss(&e).unwrap() - m_off.loss(&e).unwrap();
        assert!((diff - h).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = substream(7, "model", 0);
        let m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        let e = entry(6);
        let sh = m.cfg.shape();
        // probe every parameter family
        let coords = vec![
            3,
            sh.o_pos + 5,
            sh.layer(0).wq + 7,
            sh.layer(0).wo + 11,
            sh.layer(0).w1 + 13,
            sh.layer(0).b1 + 2,
            sh.layer(1).w2 + 17,
            sh.layer(1).b2 + 3,
            sh.layer(1).wk + 19,
            sh.layer(1).wv + 23,
            sh.o_wpol + 29,
            sh.o_bpol + 1,
            sh.o_wval + 4,
            sh.o_bval,
        ];
        for r in m.gradient_check(&e, &coords) {
            assert!(
                r.rel_error < 1e-5,
                "coord {}: analytic {} vs numeric {} (rel {})",
                r.coord,
                r.analytic,
                r.numeric,
                r.rel_error
            );
        }
    }

    #[test]
    fn overfits_one_repeated_entry() {
        let mut rng = substream(8, "model", 0);
        let mut cfg = tiny_cfg(6);
        cfg.l2_coeff = 0.0;
        let mut m = PolicyValueModel::init(cfg, &mut rng);
        let mut e = entry(6);
        e.pi = vec![0.0; 6];
        e.pi[4] = 1.0; // one-hot target: every loss term can reach zero
        let initial = m.loss(&e).unwrap();
        let mut last = initial;
        for _ in 0..200 {
            last = m.train_step(std::slice::from_ref(&e)).unwrap().mean_loss;
        }
        assert!(last <= 0.05 * initial, "initial {initial}, final {last}");
    }

    #[test]
    fn empty_batch_is_a_usage_error() {
        let mut rng = substream(9, "model", 0);
        let mut m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        assert!(matches!(m.train_step(&[]), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let mut rng = substream(10, "model", 0);
        let m = PolicyValueModel::init(tiny_cfg(6), &mut rng);
        let e = entry(6);
        let restored = PolicyValueModel::load(&m.save()).unwrap();
        assert_eq!(
            m.forward(&e.state, &e.mask).unwrap(),
            restored.forward(&e.state, &e.mask).unwrap()
        );
    }
}
