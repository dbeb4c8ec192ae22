use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::checkpoint::Checkpoint;
use super::learn::{clip_grad_norm, qmix_loss, td_targets, RmsProp};
use super::params::{Dims, QmixParams};
use super::policy::{temperature, QmixPolicy};
use crate::env::{run_episode, EnvConfig, Encoder, FleetState, Policy};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::world::{generate_fleet, generate_requests, ScenarioConfig, WorldNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    pub grad_clip: f64,
    pub target_sync_episodes: usize,
    pub iterations_per_episode: usize,
    pub temperature_start: f64,
    pub temperature_decay: f64,
    pub greedy_after: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            episodes: 2800,
            gamma: 0.99,
            batch_size: 32,
            learning_rate: 5e-4,
            rms_alpha: 0.99,
            rms_eps: 1e-5,
            grad_clip: 10.0,
            target_sync_episodes: 50,
            iterations_per_episode: 100,
            temperature_start: 100.0,
            temperature_decay: 0.1,
            greedy_after: 1000,
            buffer_capacity: 500,
            hidden: 64,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("rms_eps", self.rms_eps),
            ("grad_clip", self.grad_clip),
            ("target_sync_episodes", self.target_sync_episodes as f64),
            ("buffer_capacity", self.buffer_capacity as f64),
            ("hidden", self.hidden as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.rms_alpha) || self.temperature_start < 0.0 || self.temperature_decay < 0.0 {
            return Err(Error::Config("rms_alpha must lie in [0, 1) and the temperature schedule be non-negative".into()));
        }
        Ok(())
    }
}

pub const METRICS_HEADER: &str = "episode,reward,unfinished,avg_drive_h,loss,max_qtot";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub reward: f64,
    pub unfinished: usize,
    pub avg_drive_h: f64,
    /// Mean loss over the episode's gradient steps, if any ran.
    pub loss: Option<f64>,
    /// Mean over gradient steps of the largest bootstrapped joint Q.
    pub max_qtot: Option<f64>,
}

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.episode,
            self.reward,
            self.unfinished,
            self.avg_drive_h,
            opt(self.loss),
            opt(self.max_qtot)
        )
    }
}

pub fn metrics_csv(rows: &[EpisodeMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Expected pending volume of one origin-destination cell at episode
/// start, used to scale demand features to order one.
pub fn default_volume_scale(scenario: &ScenarioConfig, num_locations: usize) -> f64 {
    let cells = (num_locations * num_locations.saturating_sub(1)).max(1) as f64;
    (scenario.num_requests as f64 * 15.5 / cells).max(1.0)
}

const STREAM_FLEET: u64 = 1;
const STREAM_REQUESTS: u64 = 2;
const STREAM_EXPLORE: u64 = 3;
const STREAM_SAMPLE: u64 = 4;
const STREAM_INIT: u64 = 5;
const STREAM_EVAL: u64 = 100;

/// Fleet handling shared by training and evaluation: a fresh fleet at the
/// start of every operation cycle, otherwise trucks start where they ended.
struct FleetCycle {
    fleet: Option<FleetState>,
    rng: Rng,
}

impl FleetCycle {
    fn next(&mut self, episode: usize, net: &WorldNetwork, scenario: &ScenarioConfig) -> FleetState {
        let cycle = scenario.episodes_per_cycle.max(1);
        match &self.fleet {
            Some(f) if (episode - 1) % cycle != 0 => f.next_episode(),
            _ => FleetState::from_specs(&generate_fleet(net, scenario, &mut self.rng), net.num_locations()),
        }
    }
}

pub struct Trainer<'a> {
    net: &'a WorldNetwork,
    cfg: TrainerConfig,
    scenario: ScenarioConfig,
    env: EnvConfig,
    encoder: Encoder,
    params: QmixParams,
    target: QmixParams,
    opt: RmsProp,
    buffer: ReplayBuffer,
    fleets: FleetCycle,
    rng_requests: Rng,
    rng_explore: Rng,
    rng_sample: Rng,
    episode: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(net: &'a WorldNetwork, cfg: &TrainerConfig, scenario: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        scenario.validate()?;
        let seed = scenario.rng_seed;
        let m = net.num_locations();
        let encoder = Encoder::new(
            m,
            scenario.epochs_per_episode,
            scenario.num_trucks,
            default_volume_scale(scenario, m),
        );
        let dims = Dims::from_encoder(&encoder, cfg.hidden);
        let params = QmixParams::init(dims, &mut Rng::derive(seed, STREAM_INIT));
        Ok(Self {
            net,
            env: EnvConfig::from_scenario(scenario),
            encoder,
            target: params.clone(),
            opt: RmsProp::new(&params, cfg.learning_rate, cfg.rms_alpha, cfg.rms_eps),
            params,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            fleets: FleetCycle { fleet: None, rng: Rng::derive(seed, STREAM_FLEET) },
            rng_requests: Rng::derive(seed, STREAM_REQUESTS),
            rng_explore: Rng::derive(seed, STREAM_EXPLORE),
            rng_sample: Rng::derive(seed, STREAM_SAMPLE),
            episode: 0,
            cfg: cfg.clone(),
            scenario: scenario.clone(),
        })
    }

    pub fn params(&self) -> &QmixParams {
        &self.params
    }

    pub fn target_params(&self) -> &QmixParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { params: self.params.clone(), volume_scale: self.encoder.volume_scale }
    }

    /// One rollout with Boltzmann exploration followed by the configured
    /// number of gradient steps and, at sync points, a target update.
    pub fn train_episode(&mut self) -> Result<EpisodeMetrics> {
        self.episode += 1;
        let epi = self.episode;
        let mut fleet = self.fleets.next(epi, self.net, &self.scenario);
        let requests = generate_requests(self.net, &self.scenario, &mut self.rng_requests);
        let temp = temperature(epi, self.cfg.temperature_start, self.cfg.temperature_decay, self.cfg.greedy_after);
        let mut policy = QmixPolicy::new(self.params.clone(), temp);
        let transcript = run_episode(
            &mut policy,
            self.net,
            &mut fleet,
            &requests,
            &self.env,
            &self.encoder,
            &mut self.rng_explore,
        )?;
        self.fleets.fleet = Some(fleet);
        let reward = transcript.total_reward();
        let (unfinished, avg_drive_h) = (transcript.unfinished, transcript.avg_drive_h);
        self.buffer.push(transcript.epochs);

        let mut losses = Vec::new();
        let mut max_qs = Vec::new();
        if self.buffer.len() >= self.cfg.batch_size {
            for _ in 0..self.cfg.iterations_per_episode {
                let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng_sample);
                let (targets, max_q) = td_targets(&batch, &self.target, self.cfg.gamma)?;
                let (loss, mut grads) = qmix_loss(&batch, &self.params, &targets)?;
                clip_grad_norm(&mut grads, self.cfg.grad_clip);
                self.opt.step(&mut self.params, &grads);
                losses.push(loss);
                max_qs.extend(max_q);
            }
        }
        if epi % self.cfg.target_sync_episodes == 0 {
            self.target = self.params.clone();
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Ok(EpisodeMetrics {
            episode: epi,
            reward,
            unfinished,
            avg_drive_h,
            loss: mean(&losses),
            max_qtot: mean(&max_qs),
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpisodeMetrics>,
}

pub fn train(net: &WorldNetwork, cfg: &TrainerConfig, scenario: &ScenarioConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(net, cfg, scenario)?;
    let mut metrics = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        let m = trainer.train_episode()?;
        log::info!(
            "episode {} reward {:.4} unfinished {} loss {:?}",
            m.episode,
            m.reward,
            m.unfinished,
            m.loss
        );
        metrics.push(m);
    }
    Ok(TrainOutcome { checkpoint: trainer.checkpoint(), metrics })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_unfinished: f64,
    pub mean_avg_drive_h: f64,
    pub rewards: Vec<f64>,
}

/// Rolls out `policy` for `episodes` episodes with the scenario's fleet
/// cycle and fresh requests each episode; driving time is measured after
/// idle elimination.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    net: &WorldNetwork,
    scenario: &ScenarioConfig,
    volume_scale: f64,
    episodes: usize,
) -> Result<EvalMetrics> {
    scenario.validate()?;
    let seed = scenario.rng_seed;
    let m = net.num_locations();
    let encoder = Encoder::new(m, scenario.epochs_per_episode, scenario.num_trucks, volume_scale);
    let env = EnvConfig::from_scenario(scenario);
    let mut fleets = FleetCycle { fleet: None, rng: Rng::derive(seed, STREAM_EVAL + STREAM_FLEET) };
    let mut rng_requests = Rng::derive(seed, STREAM_EVAL + STREAM_REQUESTS);
    let mut rng_policy = Rng::derive(seed, STREAM_EVAL + STREAM_EXPLORE);
    let mut rewards = Vec::with_capacity(episodes);
    let (mut unfinished, mut drive) = (0.0, 0.0);
    for epi in 1..=episodes {
        let mut fleet = fleets.next(epi, net, scenario);
        let requests = generate_requests(net, scenario, &mut rng_requests);
        let t = run_episode(policy, net, &mut fleet, &requests, &env, &encoder, &mut rng_policy)?;
        fleets.fleet = Some(fleet);
        rewards.push(t.total_reward());
        unfinished += t.unfinished as f64;
        drive += t.avg_drive_h;
    }
    let n = episodes.max(1) as f64;
    Ok(EvalMetrics {
        episodes,
        mean_reward: rewards.iter().sum::<f64>() / n,
        mean_unfinished: unfinished / n,
        mean_avg_drive_h: drive / n,
        rewards,
    })
}

/// Greedy evaluation of trained parameters.
pub fn evaluate(ckpt: &Checkpoint, net: &WorldNetwork, scenario: &ScenarioConfig, episodes: usize) -> Result<EvalMetrics> {
    let m = net.num_locations();
    let d = &ckpt.params.dims;
    let enc = Encoder::new(m, scenario.epochs_per_episode, scenario.num_trucks, ckpt.volume_scale);
    if Dims::from_encoder(&enc, d.hidden) != *d {
        return Err(Error::Shape(format!(
            "checkpoint was trained for {} agents, {} actions and inputs of {}; this world and scenario need {}, {} and {}",
            d.num_agents,
            d.num_actions,
            d.obs_len,
            enc.num_trucks,
            enc.num_actions(),
            enc.vector_len()
        )));
    }
    let mut policy = QmixPolicy::new(ckpt.params.clone(), 0.0);
    evaluate_policy(&mut policy, net, scenario, ckpt.volume_scale, episodes)
}
