use ndarray::{Array1, Array2};

use super::nets::{agent_backward, agent_unroll, mix_backward, mix_forward};
use super::params::{Dims, QmixParams};
use crate::env::EpochRecord;
use crate::error::{Error, Result};

/// Agent network inputs for one epoch: observation, one-hot of the previous
/// action, one-hot of the agent id.
pub fn agent_inputs(dims: &Dims, observations: &[Vec<f64>], last_actions: &[usize]) -> Result<Array2<f64>> {
    let n = dims.num_agents;
    if observations.len() != n || last_actions.len() != n {
        return Err(Error::Shape(format!("expected {n} agents, got {}", observations.len())));
    }
    let mut x = Array2::zeros((n, dims.agent_input_len()));
    for (a, (obs, &last)) in observations.iter().zip(last_actions).enumerate() {
        if obs.len() != dims.obs_len || last >= dims.num_actions {
            return Err(Error::Shape(format!(
                "agent {a}: observation of length {} (want {}), last action {last}",
                obs.len(),
                dims.obs_len
            )));
        }
        let mut row = x.row_mut(a);
        for (k, &v) in obs.iter().enumerate() {
            row[k] = v;
        }
        row[dims.obs_len + last] = 1.0;
        row[dims.obs_len + dims.num_actions + a] = 1.0;
    }
    Ok(x)
}

/// `y = r` at terminal steps, `y = r + γ · next` otherwise.
pub fn td_target(reward: f64, gamma: f64, next_max_qtot: Option<f64>) -> f64 {
    match next_max_qtot {
        Some(q) => reward + gamma * q,
        None => reward,
    }
}

/// Per-step inputs for a batch of episodes, agents of episode `b` in rows
/// `b·N .. (b+1)·N`; steps past an episode's end are zero rows.
fn batch_inputs(dims: &Dims, batch: &[&[EpochRecord]]) -> Result<Vec<Array2<f64>>> {
    let n = dims.num_agents;
    let horizon = batch.iter().map(|e| e.len()).max().unwrap_or(0);
    let mut out = vec![Array2::zeros((batch.len() * n, dims.agent_input_len())); horizon];
    let noop = vec![dims.num_actions - 1; n];
    for (b, ep) in batch.iter().enumerate() {
        for (t, rec) in ep.iter().enumerate() {
            let last = if t == 0 { &noop } else { &ep[t - 1].actions };
            let x = agent_inputs(dims, &rec.observations, last)?;
            out[t].slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(&x);
        }
    }
    Ok(out)
}

fn state_rows(dims: &Dims, states: &[&[f64]]) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((states.len(), dims.state_len));
    for (i, s) in states.iter().enumerate() {
        if s.len() != dims.state_len {
            return Err(Error::Shape(format!("state of length {}, expected {}", s.len(), dims.state_len)));
        }
        m.row_mut(i).assign(&ndarray::ArrayView1::from(*s));
    }
    Ok(m)
}

/// Targets per episode and step, plus the largest bootstrapped `Q_tot`.
/// The joint maximum is taken per agent over permitted actions, then mixed.
pub fn td_targets(batch: &[&[EpochRecord]], target: &QmixParams, gamma: f64) -> Result<(Vec<Vec<f64>>, Option<f64>)> {
    let dims = &target.dims;
    let n = dims.num_agents;
    let inputs = batch_inputs(dims, batch)?;
    let (qs, _) = agent_unroll(&target.agent, &inputs);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (b, ep) in batch.iter().enumerate() {
        for t in 1..ep.len() {
            picks.push((b, t));
        }
    }
    let mut qmax = Array2::zeros((picks.len(), n));
    let states: Vec<&[f64]> = picks.iter().map(|&(b, t)| batch[b][t].state.as_slice()).collect();
    for (p, &(b, t)) in picks.iter().enumerate() {
        let rec = &batch[b][t];
        for a in 0..n {
            let row = qs[t].row(b * n + a);
            let best = (0..dims.num_actions)
                .filter(|&u| !rec.masks[a][u])
                .map(|u| row[u])
                .fold(f64::NEG_INFINITY, f64::max);
            qmax[[p, a]] = best;
        }
    }
    let next = if picks.is_empty() {
        Array1::zeros(0)
    } else {
        mix_forward(&target.mixer, dims, &qmax, &state_rows(dims, &states)?).0
    };
    let max_q = next.iter().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let mut ys = Vec::with_capacity(batch.len());
    let mut p = 0;
    for ep in batch {
        let mut y = Vec::with_capacity(ep.len());
        for t in 0..ep.len() {
            let boot = if t + 1 < ep.len() {
                p += 1;
                Some(next[p - 1])
            } else {
                None
            };
            y.push(td_target(ep[t].reward, gamma, boot));
        }
        ys.push(y);
    }
    Ok((ys, max_q))
}

/// Sum of squared TD errors over every step of every episode, with
/// gradients for all live parameters. Targets are constants.
pub fn qmix_loss(batch: &[&[EpochRecord]], params: &QmixParams, targets: &[Vec<f64>]) -> Result<(f64, QmixParams)> {
    let dims = &params.dims;
    let n = dims.num_agents;
    let inputs = batch_inputs(dims, batch)?;
    let (qs, caches) = agent_unroll(&params.agent, &inputs);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (b, ep) in batch.iter().enumerate() {
        if targets.get(b).map(|y| y.len()) != Some(ep.len()) {
            return Err(Error::Shape(format!("targets for episode {b} do not match its length")));
        }
        for t in 0..ep.len() {
            picks.push((b, t));
        }
    }
    let mut chosen = Array2::zeros((picks.len(), n));
    for (p, &(b, t)) in picks.iter().enumerate() {
        let rec = &batch[b][t];
        for a in 0..n {
            chosen[[p, a]] = qs[t][[b * n + a, rec.actions[a]]];
        }
    }
    let states: Vec<&[f64]> = picks.iter().map(|&(b, t)| batch[b][t].state.as_slice()).collect();
    let mut grads = params.zeros_like();
    if picks.is_empty() {
        return Ok((0.0, grads));
    }
    let (qtot, cache) = mix_forward(&params.mixer, dims, &chosen, &state_rows(dims, &states)?);
    let mut loss = 0.0;
    let mut dqtot = Array1::zeros(picks.len());
    for (p, &(b, t)) in picks.iter().enumerate() {
        let err = targets[b][t] - qtot[p];
        loss += err * err;
        dqtot[p] = -2.0 * err;
    }
    let dchosen = mix_backward(&params.mixer, dims, &cache, dqtot.view(), &mut grads.mixer);
    let mut dq: Vec<Array2<f64>> = qs.iter().map(|q| Array2::zeros(q.raw_dim())).collect();
    for (p, &(b, t)) in picks.iter().enumerate() {
        let rec = &batch[b][t];
        for a in 0..n {
            dq[t][[b * n + a, rec.actions[a]]] += dchosen[[p, a]];
        }
    }
    agent_backward(&params.agent, &caches, &dq, &mut grads.agent);
    Ok((loss, grads))
}

/// Root-mean-square propagation with a running average of squared
/// gradients.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: QmixParams,
}

impl RmsProp {
    pub fn new(like: &QmixParams, lr: f64, alpha: f64, eps: f64) -> Self {
        Self { lr, alpha, eps, square_avg: like.zeros_like() }
    }

    pub fn step(&mut self, params: &mut QmixParams, grads: &QmixParams) {
        let (lr, alpha, eps) = (self.lr, self.alpha, self.eps);
        for ((p, g), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.square_avg.tensors_mut())
        {
            v.zip_mut_with(g, |v, &g| *v = alpha * *v + (1.0 - alpha) * g * g);
            ndarray::Zip::from(p).and(g).and(&*v).for_each(|p, &g, &v| *p -= lr * g / (v.sqrt() + eps));
        }
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut QmixParams, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
