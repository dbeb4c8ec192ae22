use ndarray::Array2;

use super::learn::agent_inputs;
use super::nets::agent_forward;
use super::params::QmixParams;
use crate::env::{Policy, PolicyInput};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Samples an unmasked action with probability `∝ exp(q / temperature)`;
/// a non-positive temperature picks the first best unmasked action.
pub fn boltzmann_select(q: &[f64], mask: &[bool], temperature: f64, rng: &mut Rng) -> Result<usize> {
    if q.len() != mask.len() {
        return Err(Error::Shape(format!("{} Q-values for {} mask entries", q.len(), mask.len())));
    }
    let allowed: Vec<usize> = (0..q.len()).filter(|&a| !mask[a]).collect();
    if allowed.is_empty() {
        return Err(Error::Contract("every action is masked".into()));
    }
    let best = allowed.iter().copied().fold(allowed[0], |b, a| if q[a] > q[b] { a } else { b });
    if temperature <= 0.0 || allowed.len() == 1 {
        return Ok(best);
    }
    let top = q[best];
    let weights: Vec<f64> = allowed.iter().map(|&a| ((q[a] - top) / temperature).exp()).collect();
    let pick = rng.categorical(&weights).expect("positive weight on the best action");
    Ok(allowed[pick])
}

/// Temperature for 1-based episode `episode`: linear decay, then greedy.
pub fn temperature(episode: usize, start: f64, decay: f64, greedy_after: usize) -> f64 {
    if episode > greedy_after {
        0.0
    } else {
        (start - decay * (episode.saturating_sub(1)) as f64).max(0.0)
    }
}

/// Decentralised execution: each truck runs the shared agent network on
/// its own observation and keeps its own hidden state for the episode.
#[derive(Clone, Debug)]
pub struct QmixPolicy {
    pub params: QmixParams,
    pub temperature: f64,
    hidden: Array2<f64>,
}

impl QmixPolicy {
    pub fn new(params: QmixParams, temperature: f64) -> Self {
        let hidden = Array2::zeros((params.dims.num_agents, params.dims.hidden));
        Self { params, temperature, hidden }
    }

    /// Q-values for every agent at this epoch; advances the hidden state.
    pub fn q_values(&mut self, input: &PolicyInput<'_>) -> Result<Array2<f64>> {
        let x = agent_inputs(&self.params.dims, input.observations, input.last_actions)?;
        let (q, cache) = agent_forward(&self.params.agent, &x, &self.hidden);
        self.hidden = cache.gru.h;
        Ok(q)
    }
}

impl Policy for QmixPolicy {
    fn begin_episode(&mut self, num_agents: usize) {
        self.hidden = Array2::zeros((num_agents, self.params.dims.hidden));
    }

    fn act(&mut self, input: &PolicyInput<'_>, rng: &mut Rng) -> Vec<usize> {
        let noop = self.params.dims.num_actions - 1;
        let Ok(q) = self.q_values(input) else {
            return vec![noop; input.masks.len()];
        };
        input
            .masks
            .iter()
            .enumerate()
            .map(|(a, mask)| {
                let row = q.row(a).to_vec();
                boltzmann_select(&row, mask, self.temperature, rng).unwrap_or(noop)
            })
            .collect()
    }
}
