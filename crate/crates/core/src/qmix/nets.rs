//! Forward and reverse passes of the agent network (input layer, gated
//! recurrent cell, output layer) and of the state-conditioned mixer.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::{AgentParams, Dims, MixerParams};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn relu_mask(pre: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    out
}

fn col_sum(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Intermediate values of one recurrent update over a batch of rows.
#[derive(Clone, Debug)]
pub struct GruCache {
    pub e: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub z: Array2<f64>,
    pub r: Array2<f64>,
    pub n: Array2<f64>,
    pub h: Array2<f64>,
}

/// `z = σ(W_z e + U_z h + b_z)`, `r = σ(W_r e + U_r h + b_r)`,
/// `n = tanh(W_h e + U_h (r ⊙ h) + b_h)`, `h' = (1 - z) ⊙ h + z ⊙ n`.
pub fn gru_forward(p: &AgentParams, e: &Array2<f64>, h_prev: &Array2<f64>) -> GruCache {
    let z = (e.dot(&p.w_z) + h_prev.dot(&p.u_z) + &p.b_z).mapv(sigmoid);
    let r = (e.dot(&p.w_r) + h_prev.dot(&p.u_r) + &p.b_r).mapv(sigmoid);
    let rh = &r * h_prev;
    let n = (e.dot(&p.w_h) + rh.dot(&p.u_h) + &p.b_h).mapv(f64::tanh);
    let h = &n * &z + &((1.0 - &z) * h_prev);
    GruCache { e: e.clone(), h_prev: h_prev.clone(), z, r, n, h }
}

/// Accumulates parameter gradients for `dh` at the cell output and
/// returns `(d e, d h_prev)`.
pub fn gru_backward(p: &AgentParams, c: &GruCache, dh: &Array2<f64>, g: &mut AgentParams) -> (Array2<f64>, Array2<f64>) {
    let dn = dh * &c.z;
    let dz = dh * &(&c.n - &c.h_prev);
    let mut dh_prev = dh * &(1.0 - &c.z);

    let dan = &dn * &(1.0 - &c.n * &c.n);
    let rh = &c.r * &c.h_prev;
    g.w_h += &c.e.t().dot(&dan);
    g.u_h += &rh.t().dot(&dan);
    g.b_h += &col_sum(&dan);
    let drh = dan.dot(&p.u_h.t());
    let dr = &drh * &c.h_prev;
    dh_prev += &(&drh * &c.r);

    let daz = &dz * &(&c.z * &(1.0 - &c.z));
    let dar = &dr * &(&c.r * &(1.0 - &c.r));
    g.w_z += &c.e.t().dot(&daz);
    g.u_z += &c.h_prev.t().dot(&daz);
    g.b_z += &col_sum(&daz);
    g.w_r += &c.e.t().dot(&dar);
    g.u_r += &c.h_prev.t().dot(&dar);
    g.b_r += &col_sum(&dar);

    let de = dan.dot(&p.w_h.t()) + daz.dot(&p.w_z.t()) + dar.dot(&p.w_r.t());
    dh_prev += &daz.dot(&p.u_z.t());
    dh_prev += &dar.dot(&p.u_r.t());
    (de, dh_prev)
}

/// Single-vector recurrent update.
pub fn gru_step(p: &AgentParams, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let hidden = p.u_z.nrows();
    if x.len() != p.w_z.nrows() || h.len() != hidden {
        return Err(Error::Shape(format!(
            "gru_step expects input {} and hidden {hidden}, got {} and {}",
            p.w_z.nrows(),
            x.len(),
            h.len()
        )));
    }
    let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let h = Array2::from_shape_vec((1, hidden), h.to_vec()).expect("row");
    Ok(gru_forward(p, &x, &h).h.into_raw_vec_and_offset().0)
}

#[derive(Clone, Debug)]
pub struct AgentStepCache {
    pub x: Array2<f64>,
    pub a1: Array2<f64>,
    pub gru: GruCache,
}

/// One agent step for a batch of rows: returns Q-values and the cache.
pub fn agent_forward(p: &AgentParams, x: &Array2<f64>, h: &Array2<f64>) -> (Array2<f64>, AgentStepCache) {
    let a1 = affine(x, &p.w_in, &p.b_in);
    let e = a1.mapv(|v| v.max(0.0));
    let gru = gru_forward(p, &e, h);
    let q = affine(&gru.h, &p.w_out, &p.b_out);
    (q, AgentStepCache { x: x.clone(), a1, gru })
}

/// Runs the agent network over a sequence starting from zero hidden state.
pub fn agent_unroll(p: &AgentParams, inputs: &[Array2<f64>]) -> (Vec<Array2<f64>>, Vec<AgentStepCache>) {
    let rows = inputs.first().map_or(0, |x| x.nrows());
    let mut h = Array2::zeros((rows, p.u_z.nrows()));
    let mut qs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (q, c) = agent_forward(p, x, &h);
        h = c.gru.h.clone();
        qs.push(q);
        caches.push(c);
    }
    (qs, caches)
}

/// Back-propagation through time given `dq[t]` for every step.
pub fn agent_backward(p: &AgentParams, caches: &[AgentStepCache], dq: &[Array2<f64>], g: &mut AgentParams) {
    let Some(last) = caches.last() else { return };
    let mut carry = Array2::zeros(last.gru.h.raw_dim());
    for (c, dq_t) in caches.iter().zip(dq).rev() {
        g.w_out += &c.gru.h.t().dot(dq_t);
        g.b_out += &col_sum(dq_t);
        let dh = dq_t.dot(&p.w_out.t()) + &carry;
        let (de, dh_prev) = gru_backward(p, &c.gru, &dh, g);
        let da1 = relu_mask(&c.a1, &de);
        g.w_in += &c.x.t().dot(&da1);
        g.b_in += &col_sum(&da1);
        carry = dh_prev;
    }
}

#[derive(Clone, Debug)]
pub struct MixCache {
    pub q: Array2<f64>,
    pub states: Array2<f64>,
    pub w1_raw: Array2<f64>,
    pub pre: Array2<f64>,
    pub hid: Array2<f64>,
    pub w2_raw: Array2<f64>,
    pub v1_pre: Array2<f64>,
    pub v1: Array2<f64>,
}

/// `Q_tot = |W2(s)|ᵀ relu(|W1(s)|ᵀ q + b1(s)) + b2(s)` for each row of
/// `q` (chosen-action values, one column per agent) and `states`.
pub fn mix_forward(p: &MixerParams, dims: &Dims, q: &Array2<f64>, states: &Array2<f64>) -> (Array1<f64>, MixCache) {
    let (n, e) = (dims.num_agents, dims.mix_hidden);
    let w1_raw = affine(states, &p.hyper_w1, &p.hyper_w1_b);
    let mut pre = affine(states, &p.hyper_b1, &p.hyper_b1_b);
    for (row, mut pre_row) in pre.outer_iter_mut().enumerate() {
        let w = w1_raw.row(row);
        for a in 0..n {
            let qa = q[[row, a]];
            let wa = w.slice(s![a * e..(a + 1) * e]);
            pre_row.zip_mut_with(&wa, |acc, &wv| *acc += qa * wv.abs());
        }
    }
    let hid = pre.mapv(|v| v.max(0.0));
    let w2_raw = affine(states, &p.hyper_w2, &p.hyper_w2_b);
    let v1_pre = affine(states, &p.hyper_v1, &p.hyper_v1_b);
    let v1 = v1_pre.mapv(|v| v.max(0.0));
    let b2 = affine(&v1, &p.hyper_v2, &p.hyper_v2_b);
    let qtot = (&hid * &w2_raw.mapv(f64::abs)).sum_axis(Axis(1)) + b2.column(0);
    let cache = MixCache { q: q.clone(), states: states.clone(), w1_raw, pre, hid, w2_raw, v1_pre, v1 };
    (qtot, cache)
}

/// Accumulates mixer gradients for `dqtot` and returns `d q`.
pub fn mix_backward(p: &MixerParams, dims: &Dims, c: &MixCache, dqtot: ArrayView1<f64>, g: &mut MixerParams) -> Array2<f64> {
    let (n, e) = (dims.num_agents, dims.mix_hidden);
    let dcol = dqtot.insert_axis(Axis(1));
    let w2 = c.w2_raw.mapv(f64::abs);
    let dw2_raw = (&c.hid * &dcol) * c.w2_raw.mapv(signum0);
    g.hyper_w2 += &c.states.t().dot(&dw2_raw);
    g.hyper_w2_b += &col_sum(&dw2_raw);

    let dpre = relu_mask(&c.pre, &(&w2 * &dcol));
    g.hyper_b1 += &c.states.t().dot(&dpre);
    g.hyper_b1_b += &col_sum(&dpre);

    let mut dw1_raw = Array2::zeros(c.w1_raw.raw_dim());
    let mut dq = Array2::zeros(c.q.raw_dim());
    for row in 0..c.q.nrows() {
        let dp = dpre.row(row);
        for a in 0..n {
            let qa = c.q[[row, a]];
            let mut acc = 0.0;
            for h in 0..e {
                let raw = c.w1_raw[[row, a * e + h]];
                acc += dp[h] * raw.abs();
                dw1_raw[[row, a * e + h]] = qa * dp[h] * signum0(raw);
            }
            dq[[row, a]] = acc;
        }
    }
    g.hyper_w1 += &c.states.t().dot(&dw1_raw);
    g.hyper_w1_b += &col_sum(&dw1_raw);

    g.hyper_v2 += &c.v1.t().dot(&dcol);
    g.hyper_v2_b += &col_sum(&dcol.to_owned());
    let dv1 = relu_mask(&c.v1_pre, &dcol.dot(&p.hyper_v2.t()));
    g.hyper_v1 += &c.states.t().dot(&dv1);
    g.hyper_v1_b += &col_sum(&dv1);
    dq
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
