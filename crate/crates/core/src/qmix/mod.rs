//! Value-decomposition learner: a recurrent agent network shared by all
//! trucks, a hypernetwork mixer that is monotone in every agent's value,
//! replay, target networks and the training loop.

mod buffer;
mod checkpoint;
mod learn;
mod nets;
mod params;
mod policy;
mod trainer;

pub use buffer::ReplayBuffer;
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use learn::{agent_inputs, clip_grad_norm, qmix_loss, td_target, td_targets, RmsProp};
pub use nets::{
    agent_backward, agent_forward, agent_unroll, gru_backward, gru_forward, gru_step, mix_backward, mix_forward,
    AgentStepCache, GruCache, MixCache,
};
pub use params::{AgentParams, Dims, MixerParams, QmixParams};
pub use policy::{boltzmann_select, temperature, QmixPolicy};
pub use trainer::{
    default_volume_scale, evaluate, evaluate_policy, metrics_csv, train, EpisodeMetrics, EvalMetrics, TrainOutcome,
    Trainer, TrainerConfig, METRICS_HEADER,
};
