//! History encoders with hand-written reverse passes.
//!
//! Tensor slots 0 and 1 of a ranker hold the item embeddings and item biases;
//! encoder parameters follow from slot 2 in the order laid out below.

use rand_distr::{Distribution, Normal, Uniform};

use super::config::EncoderKind;
use super::params::{axpy, dot, matvec, matvec_t_acc, outer_acc, sigmoid, Params, Tensor};
use crate::rng::Rng;
use crate::types::ItemId;

pub(crate) const ITEM_EMB: usize = 0;
pub(crate) const ITEM_BIAS: usize = 1;

// Gated recurrent unit.
const W_R: usize = 2;
const U_R: usize = 3;
const B_R: usize = 4;
const W_U: usize = 5;
const U_U: usize = 6;
const B_U: usize = 7;
const W_N: usize = 8;
const U_N: usize = 9;
const B_N: usize = 10;

// Single-head attention.
const POS: usize = 2;
const W_Q: usize = 3;
const W_K: usize = 4;
const W_V: usize = 5;

pub(crate) fn init_encoder(
    kind: EncoderKind,
    dim: usize,
    max_len: usize,
    init_scale: f64,
    rng: &mut Rng,
) -> Vec<Tensor> {
    let bound = 1.0 / (dim as f64).sqrt();
    let mut uniform = |name, rows, cols| {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut t = Tensor::zeros(name, rows, cols);
        t.data.iter_mut().for_each(|v| *v = dist.sample(rng));
        t
    };
    match kind {
        EncoderKind::MeanPool => Vec::new(),
        EncoderKind::GatedRecurrent => vec![
            uniform("gru.w_r", dim, dim),
            uniform("gru.u_r", dim, dim),
            Tensor::zeros("gru.b_r", 1, dim),
            uniform("gru.w_u", dim, dim),
            uniform("gru.u_u", dim, dim),
            Tensor::zeros("gru.b_u", 1, dim),
            uniform("gru.w_n", dim, dim),
            uniform("gru.u_n", dim, dim),
            Tensor::zeros("gru.b_n", 1, dim),
        ],
        EncoderKind::SelfAttention => {
            let w_q = uniform("attn.w_q", dim, dim);
            let w_k = uniform("attn.w_k", dim, dim);
            let mut w_v = uniform("attn.w_v", dim, dim);
            // Start near identity so the untrained encoder is close to a
            // recency-weighted mean of the history.
            w_v.data.iter_mut().for_each(|v| *v *= 0.1);
            for i in 0..dim {
                w_v.data[i * dim + i] += 1.0;
            }
            let mut pos = Tensor::zeros("attn.pos", max_len, dim);
            let normal = Normal::new(0.0, init_scale).expect("finite scale");
            pos.data.iter_mut().for_each(|v| *v = normal.sample(rng));
            vec![pos, w_q, w_k, w_v]
        }
    }
}

pub(crate) struct GruStep {
    h_prev: Vec<f64>,
    r: Vec<f64>,
    u: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

pub(crate) enum EncodeCache {
    Empty,
    Mean { n: usize },
    Gru { steps: Vec<GruStep> },
    Attn {
        xs: Vec<Vec<f64>>,
        q: Vec<f64>,
        ks: Vec<Vec<f64>>,
        vs: Vec<Vec<f64>>,
        a: Vec<f64>,
    },
}

/// Encodes an already-windowed history. An empty history encodes to zero.
pub(crate) fn encode(
    kind: EncoderKind,
    p: &Params,
    dim: usize,
    history: &[ItemId],
) -> (Vec<f64>, EncodeCache) {
    if history.is_empty() {
        return (vec![0.0; dim], EncodeCache::Empty);
    }
    let emb = &p.tensors[ITEM_EMB];
    match kind {
        EncoderKind::MeanPool => {
            let mut z = vec![0.0; dim];
            for it in history {
                axpy(1.0, emb.row(it.index()), &mut z);
            }
            let inv = 1.0 / history.len() as f64;
            z.iter_mut().for_each(|v| *v *= inv);
            (z, EncodeCache::Mean { n: history.len() })
        }
        EncoderKind::GatedRecurrent => {
            let t = &p.tensors;
            let mut h = vec![0.0; dim];
            let mut steps = Vec::with_capacity(history.len());
            for it in history {
                let x = emb.row(it.index());
                let gate = |w: usize, u: usize, b: usize, hv: &[f64]| -> Vec<f64> {
                    let mut pre = matvec(&t[w], x);
                    axpy(1.0, &matvec(&t[u], hv), &mut pre);
                    axpy(1.0, &t[b].data, &mut pre);
                    pre.into_iter().map(sigmoid).collect()
                };
                let r = gate(W_R, U_R, B_R, &h);
                let u = gate(W_U, U_U, B_U, &h);
                let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
                let mut pre = matvec(&t[W_N], x);
                axpy(1.0, &matvec(&t[U_N], &rh), &mut pre);
                axpy(1.0, &t[B_N].data, &mut pre);
                let n: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
                let next: Vec<f64> = (0..dim).map(|i| (1.0 - u[i]) * n[i] + u[i] * h[i]).collect();
                steps.push(GruStep {
                    h_prev: std::mem::replace(&mut h, next),
                    r,
                    u,
                    n,
                    rh,
                });
            }
            (h, EncodeCache::Gru { steps })
        }
        EncoderKind::SelfAttention => {
            let t = &p.tensors;
            let len = history.len();
            let xs: Vec<Vec<f64>> = history
                .iter()
                .enumerate()
                .map(|(j, it)| {
                    let mut x = emb.row(it.index()).to_vec();
                    axpy(1.0, t[POS].row(len - 1 - j), &mut x);
                    x
                })
                .collect();
            let last = &xs[len - 1];
            let q = matvec(&t[W_Q], last);
            let ks: Vec<Vec<f64>> = xs.iter().map(|x| matvec(&t[W_K], x)).collect();
            let vs: Vec<Vec<f64>> = xs.iter().map(|x| matvec(&t[W_V], x)).collect();
            let scale = 1.0 / (dim as f64).sqrt();
            let logits: Vec<f64> = ks.iter().map(|k| dot(&q, k) * scale).collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut a: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = a.iter().sum();
            a.iter_mut().for_each(|v| *v /= s);
            let mut z = last.clone();
            for (aj, v) in a.iter().zip(&vs) {
                axpy(*aj, v, &mut z);
            }
            (z, EncodeCache::Attn { xs, q, ks, vs, a })
        }
    }
}

/// Accumulates `dL/dparams` given `dL/dz` for an encoding produced by
/// [`encode`] on the same parameters and history.
pub(crate) fn encode_backward(
    p: &Params,
    dim: usize,
    history: &[ItemId],
    cache: &EncodeCache,
    dz: &[f64],
    g: &mut Params,
) {
    match cache {
        EncodeCache::Empty => {}
        EncodeCache::Mean { n } => {
            let inv = 1.0 / *n as f64;
            for it in history {
                axpy(inv, dz, g.tensors[ITEM_EMB].row_mut(it.index()));
            }
        }
        EncodeCache::Gru { steps } => {
            let t = &p.tensors;
            let mut dh = dz.to_vec();
            for (step, it) in steps.iter().zip(history).rev() {
                let x = t[ITEM_EMB].row(it.index()).to_vec();
                let GruStep { h_prev, r, u, n, rh } = step;
                let mut dx = vec![0.0; dim];
                let mut dhp: Vec<f64> = (0..dim).map(|i| dh[i] * u[i]).collect();

                let dn_pre: Vec<f64> = (0..dim)
                    .map(|i| dh[i] * (1.0 - u[i]) * (1.0 - n[i] * n[i]))
                    .collect();
                let du_pre: Vec<f64> = (0..dim)
                    .map(|i| dh[i] * (h_prev[i] - n[i]) * u[i] * (1.0 - u[i]))
                    .collect();

                outer_acc(&mut g.tensors[W_N], &dn_pre, &x);
                outer_acc(&mut g.tensors[U_N], &dn_pre, rh);
                axpy(1.0, &dn_pre, &mut g.tensors[B_N].data);
                matvec_t_acc(&t[W_N], &dn_pre, &mut dx);
                let mut drh = vec![0.0; dim];
                matvec_t_acc(&t[U_N], &dn_pre, &mut drh);

                let dr_pre: Vec<f64> = (0..dim)
                    .map(|i| drh[i] * h_prev[i] * r[i] * (1.0 - r[i]))
                    .collect();
                for i in 0..dim {
                    dhp[i] += drh[i] * r[i];
                }

                for (w, uu, b, d) in [(W_U, U_U, B_U, &du_pre), (W_R, U_R, B_R, &dr_pre)] {
                    outer_acc(&mut g.tensors[w], d, &x);
                    outer_acc(&mut g.tensors[uu], d, h_prev);
                    axpy(1.0, d, &mut g.tensors[b].data);
                    matvec_t_acc(&t[w], d, &mut dx);
                    matvec_t_acc(&t[uu], d, &mut dhp);
                }

                axpy(1.0, &dx, g.tensors[ITEM_EMB].row_mut(it.index()));
                dh = dhp;
            }
        }
        EncodeCache::Attn { xs, q, ks, vs, a } => {
            let t = &p.tensors;
            let len = xs.len();
            let scale = 1.0 / (dim as f64).sqrt();
            let mut dxs = vec![vec![0.0; dim]; len];
            axpy(1.0, dz, &mut dxs[len - 1]);

            let da: Vec<f64> = vs.iter().map(|v| dot(dz, v)).collect();
            let abar: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
            let dlogit: Vec<f64> = (0..len).map(|j| a[j] * (da[j] - abar) * scale).collect();

            let mut dq = vec![0.0; dim];
            for j in 0..len {
                axpy(dlogit[j], &ks[j], &mut dq);
            }
            outer_acc(&mut g.tensors[W_Q], &dq, &xs[len - 1]);
            matvec_t_acc(&t[W_Q], &dq, &mut dxs[len - 1]);

            for j in 0..len {
                let dk: Vec<f64> = q.iter().map(|v| v * dlogit[j]).collect();
                let dv: Vec<f64> = dz.iter().map(|v| v * a[j]).collect();
                outer_acc(&mut g.tensors[W_K], &dk, &xs[j]);
                matvec_t_acc(&t[W_K], &dk, &mut dxs[j]);
                outer_acc(&mut g.tensors[W_V], &dv, &xs[j]);
                matvec_t_acc(&t[W_V], &dv, &mut dxs[j]);
            }
            for (j, it) in history.iter().enumerate() {
                axpy(1.0, &dxs[j], g.tensors[ITEM_EMB].row_mut(it.index()));
                axpy(1.0, &dxs[j], g.tensors[POS].row_mut(len - 1 - j));
            }
        }
    }
}
