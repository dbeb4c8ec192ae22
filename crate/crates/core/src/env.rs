//! Epoch-synchronised dispatch environment.
//!
//! Each epoch every truck picks its next stop (or the no-op action),
//! the new moves are appended to the dispatch graph and pending requests
//! are matched against everything driven so far. Rewards trade served
//! requests against fleet-average fuel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{self, Decision, DispatchGraph, MatchMode, MatchOptions, MatchPath, RequestStatus};
use crate::rng::Rng;
use crate::world::{LocationId, Request, ScenarioConfig, TruckSpec, WorldNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub epochs: usize,
    pub time_limit_s: u64,
    pub beta_served: f64,
    pub beta_fuel: f64,
    pub match_mode: MatchMode,
    pub path_limit: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            time_limit_s: 172_800,
            beta_served: 0.004,
            beta_fuel: 0.5,
            match_mode: MatchMode::MultiTransfer,
            path_limit: 100_000,
        }
    }
}

impl EnvConfig {
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        Self {
            epochs: s.epochs_per_episode,
            time_limit_s: s.episode_time_limit_s,
            beta_served: s.beta_served,
            beta_fuel: s.beta_fuel,
            ..Default::default()
        }
    }

    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            mode: self.match_mode,
            path_limit: self.path_limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruckState {
    pub id: usize,
    pub origin: LocationId,
    pub current_stop: LocationId,
    pub cumulative_time_s: u64,
    pub visited: Vec<bool>,
    pub returned: bool,
    pub last_action: usize,
}

impl TruckState {
    pub fn fresh(id: usize, origin: LocationId, num_locations: usize) -> Self {
        let mut visited = vec![false; num_locations];
        visited[origin] = true;
        Self {
            id,
            origin,
            current_stop: origin,
            cumulative_time_s: 0,
            visited,
            returned: false,
            last_action: num_locations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetState {
    pub trucks: Vec<TruckState>,
    pub capacities: Vec<u64>,
}

impl FleetState {
    pub fn from_specs(specs: &[TruckSpec], num_locations: usize) -> Self {
        Self {
            trucks: specs
                .iter()
                .map(|t| TruckState::fresh(t.id, t.initial_location, num_locations))
                .collect(),
            capacities: specs.iter().map(|t| t.capacity).collect(),
        }
    }

    /// Fresh per-episode state with every truck starting where it ended.
    pub fn next_episode(&self) -> Self {
        let n = self.trucks.first().map_or(0, |t| t.visited.len());
        Self {
            trucks: self
                .trucks
                .iter()
                .map(|t| TruckState::fresh(t.id, t.current_stop, n))
                .collect(),
            capacities: self.capacities.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.trucks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trucks.is_empty()
    }

    pub fn locations(&self) -> Vec<LocationId> {
        self.trucks.iter().map(|t| t.current_stop).collect()
    }

    pub fn min_cumulative_time_s(&self) -> u64 {
        self.trucks.iter().map(|t| t.cumulative_time_s).min().unwrap_or(0)
    }
}

/// Pending volume from `i` to `j`, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemandMatrix {
    n: usize,
    volume: Vec<u64>,
}

impl DemandMatrix {
    pub fn from_requests<'a>(n: usize, pending: impl IntoIterator<Item = &'a Request>) -> Self {
        let mut volume = vec![0; n * n];
        for r in pending {
            if r.source != r.destination {
                volume[r.source * n + r.destination] += r.size;
            }
        }
        Self { n, volume }
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.volume[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.volume
    }
}

/// Fixed layout of state and observation vectors:
/// `[epoch one-hot | trucks per stop or own stop | demand / volume_scale]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub num_locations: usize,
    pub num_epochs: usize,
    pub num_trucks: usize,
    pub volume_scale: f64,
}

impl Encoder {
    pub fn new(num_locations: usize, num_epochs: usize, num_trucks: usize, volume_scale: f64) -> Self {
        Self { num_locations, num_epochs, num_trucks, volume_scale }
    }

    pub fn vector_len(&self) -> usize {
        self.num_epochs + self.num_locations + self.num_locations * self.num_locations
    }

    pub fn num_actions(&self) -> usize {
        self.num_locations + 1
    }

    pub fn noop(&self) -> usize {
        self.num_locations
    }

    fn check(&self, demand: &DemandMatrix, epoch: usize) -> Result<()> {
        if demand.n != self.num_locations {
            return Err(Error::Config(format!(
                "demand matrix is {0}x{0}, expected {1}x{1}",
                demand.n, self.num_locations
            )));
        }
        if epoch == 0 || epoch > self.num_epochs {
            return Err(Error::Config(format!("epoch {epoch} outside 1..={}", self.num_epochs)));
        }
        Ok(())
    }

    fn fill(&self, middle: &[f64], demand: &DemandMatrix, epoch: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.vector_len()];
        v[epoch - 1] = 1.0;
        v[self.num_epochs..self.num_epochs + self.num_locations].copy_from_slice(middle);
        let off = self.num_epochs + self.num_locations;
        for (k, &vol) in demand.volume.iter().enumerate() {
            v[off + k] = vol as f64 / self.volume_scale;
        }
        v
    }

    pub fn state(&self, fleet: &FleetState, demand: &DemandMatrix, epoch: usize) -> Result<Vec<f64>> {
        self.check(demand, epoch)?;
        if fleet.len() != self.num_trucks {
            return Err(Error::Config(format!("fleet has {} trucks, expected {}", fleet.len(), self.num_trucks)));
        }
        let mut counts = vec![0.0; self.num_locations];
        for t in &fleet.trucks {
            counts[t.current_stop] += 1.0 / self.num_trucks as f64;
        }
        Ok(self.fill(&counts, demand, epoch))
    }

    pub fn observation(&self, truck: &TruckState, demand: &DemandMatrix, epoch: usize) -> Result<Vec<f64>> {
        self.check(demand, epoch)?;
        let mut here = vec![0.0; self.num_locations];
        here[truck.current_stop] = 1.0;
        Ok(self.fill(&here, demand, epoch))
    }

    /// Recovers per-stop truck counts from an encoded state.
    pub fn decode_truck_counts(&self, state: &[f64]) -> Vec<usize> {
        state[self.num_epochs..self.num_epochs + self.num_locations]
            .iter()
            .map(|x| (x * self.num_trucks as f64).round() as usize)
            .collect()
    }
}

/// `true` marks a forbidden action. The no-op (last index) is never
/// forbidden. Besides the route rules (no revisits except the origin, no
/// staying put, nothing after returning or running out of time) a move
/// whose arrival would overrun the time limit is forbidden as well.
pub fn action_mask(truck: &TruckState, net: &WorldNetwork, time_limit_s: u64) -> Vec<bool> {
    let n = net.num_locations();
    let mut mask = vec![false; n + 1];
    let done = truck.returned || truck.cumulative_time_s >= time_limit_s;
    for (a, m) in mask.iter_mut().take(n).enumerate() {
        *m = done
            || a == truck.current_stop
            || (truck.visited[a] && a != truck.origin)
            || truck.cumulative_time_s + net.eta(truck.current_stop, a) > time_limit_s;
    }
    mask
}

/// Applies a joint action. Returns the dispatch decisions it produced.
pub fn step(
    fleet: &mut FleetState,
    joint_action: &[usize],
    net: &WorldNetwork,
    time_limit_s: u64,
    epoch: usize,
) -> Result<Vec<Decision>> {
    if joint_action.len() != fleet.len() {
        return Err(Error::Contract(format!(
            "joint action has {} entries for {} trucks",
            joint_action.len(),
            fleet.len()
        )));
    }
    let n = net.num_locations();
    for (truck, &a) in fleet.trucks.iter().zip(joint_action) {
        if a > n || action_mask(truck, net, time_limit_s)[a] {
            return Err(Error::Contract(format!("truck {} chose masked action {a}", truck.id)));
        }
    }
    let mut decisions = Vec::new();
    for (truck, &a) in fleet.trucks.iter_mut().zip(joint_action) {
        truck.last_action = a;
        if a == n {
            continue;
        }
        let eta_s = net.eta(truck.current_stop, a);
        decisions.push(Decision {
            truck: truck.id,
            epoch,
            from: truck.current_stop,
            to: a,
            depart_s: truck.cumulative_time_s,
            eta_s,
        });
        truck.current_stop = a;
        truck.cumulative_time_s += eta_s;
        truck.visited[a] = true;
        truck.returned = a == truck.origin;
    }
    Ok(decisions)
}

/// Fleet-average fuel for one epoch: `fuel_factor * sum(eta hours) / N_t`.
pub fn epoch_fuel(decisions: &[Decision], net: &WorldNetwork, num_trucks: usize) -> f64 {
    if num_trucks == 0 {
        return 0.0;
    }
    let hours: f64 = decisions.iter().map(|d| d.eta_s as f64 / 3600.0).sum();
    net.fuel_factor() * hours / num_trucks as f64
}

pub fn epoch_reward(n_matched: usize, fuel: f64, cfg: &EnvConfig) -> f64 {
    cfg.beta_served * n_matched as f64 - cfg.beta_fuel * fuel
}

/// What a policy sees at one epoch.
pub struct PolicyInput<'a> {
    pub epoch: usize,
    pub state: &'a [f64],
    pub observations: &'a [Vec<f64>],
    pub masks: &'a [Vec<bool>],
    pub last_actions: &'a [usize],
}

pub trait Policy {
    /// Called once before the first epoch of an episode.
    fn begin_episode(&mut self, num_agents: usize);
    fn act(&mut self, input: &PolicyInput<'_>, rng: &mut Rng) -> Vec<usize>;
}

/// Picks uniformly among permitted actions (no-op included).
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn begin_episode(&mut self, _num_agents: usize) {}

    fn act(&mut self, input: &PolicyInput<'_>, rng: &mut Rng) -> Vec<usize> {
        input
            .masks
            .iter()
            .map(|m| {
                let allowed: Vec<usize> = (0..m.len()).filter(|&a| !m[a]).collect();
                allowed[rng.below(allowed.len() as u64) as usize]
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoopPolicy;

impl Policy for NoopPolicy {
    fn begin_episode(&mut self, _num_agents: usize) {}

    fn act(&mut self, input: &PolicyInput<'_>, _rng: &mut Rng) -> Vec<usize> {
        input.masks.iter().map(|m| m.len() - 1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub matched: usize,
    pub fuel: f64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTranscript {
    pub epochs: Vec<EpochRecord>,
    pub graph: DispatchGraph,
    /// Final status of every request, in id order.
    pub outcomes: Vec<(Request, RequestStatus)>,
    pub unfinished: usize,
    /// Fleet-average driving hours after idle elimination.
    pub avg_drive_h: f64,
    pub end_locations: Vec<LocationId>,
}

impl EpisodeTranscript {
    pub fn total_reward(&self) -> f64 {
        self.epochs.iter().map(|e| e.reward).sum()
    }

    pub fn served(&self) -> usize {
        self.outcomes.len() - self.unfinished
    }

    pub fn routed(&self) -> Vec<(Request, MatchPath)> {
        self.outcomes
            .iter()
            .filter_map(|(r, s)| match s {
                RequestStatus::Matched(p) => Some((*r, p.clone())),
                _ => None,
            })
            .collect()
    }

    /// One JSON object per epoch record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
            out.push('\n');
        }
        out
    }

    /// Decision log: `truck,epoch,from,to,depart_s,eta_s,matched_volume`.
    pub fn decisions_csv(&self) -> String {
        decisions_csv(&self.graph)
    }
}

pub fn decisions_csv(g: &DispatchGraph) -> String {
    let mut out = String::from("truck,epoch,from,to,depart_s,eta_s,matched_volume\n");
    for e in g.edges() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.truck,
            e.epoch,
            e.from,
            e.to,
            e.depart_s,
            e.eta_s,
            e.routed_volume()
        ));
    }
    out
}

/// Runs one episode from the given fleet state, which is left at the
/// end-of-episode positions.
pub fn run_episode(
    policy: &mut dyn Policy,
    net: &WorldNetwork,
    fleet: &mut FleetState,
    requests: &[Request],
    cfg: &EnvConfig,
    encoder: &Encoder,
    rng: &mut Rng,
) -> Result<EpisodeTranscript> {
    let n = net.num_locations();
    if encoder.num_locations != n || encoder.num_trucks != fleet.len() || encoder.num_epochs != cfg.epochs {
        return Err(Error::Config("encoder dimensions do not match the world, fleet or epoch count".into()));
    }
    let opts = cfg.match_options();
    let mut graph = DispatchGraph::new(n, fleet.capacities.clone());
    let mut pending: Vec<Request> = requests.to_vec();
    pending.sort_by_key(|r| r.id);
    let mut status: Vec<(Request, RequestStatus)> =
        pending.iter().map(|r| (*r, RequestStatus::Pending)).collect();
    let index_of: std::collections::HashMap<usize, usize> =
        pending.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    let mut epochs = Vec::new();
    policy.begin_episode(fleet.len());

    for epoch in 1..=cfg.epochs {
        let demand = DemandMatrix::from_requests(n, &pending);
        let state = encoder.state(fleet, &demand, epoch)?;
        let observations = fleet
            .trucks
            .iter()
            .map(|t| encoder.observation(t, &demand, epoch))
            .collect::<Result<Vec<_>>>()?;
        let masks: Vec<Vec<bool>> = fleet
            .trucks
            .iter()
            .map(|t| {
                let mut m = action_mask(t, net, cfg.time_limit_s);
                if pending.is_empty() {
                    m[..n].iter_mut().for_each(|x| *x = true);
                }
                m
            })
            .collect();
        let last_actions: Vec<usize> = fleet.trucks.iter().map(|t| t.last_action).collect();
        let actions = policy.act(
            &PolicyInput {
                epoch,
                state: &state,
                observations: &observations,
                masks: &masks,
                last_actions: &last_actions,
            },
            rng,
        );
        for (i, (&a, m)) in actions.iter().zip(&masks).enumerate() {
            if a >= m.len() || m[a] {
                return Err(Error::Contract(format!("policy chose masked action {a} for truck {i}")));
            }
        }
        let decisions = step(fleet, &actions, net, cfg.time_limit_s, epoch)?;
        for d in &decisions {
            graph.add_decision(d)?;
        }
        let result = if decisions.is_empty() {
            None
        } else {
            Some(matcher::match_all(&mut graph, &pending, &opts))
        };
        let mut matched = 0;
        if let Some(result) = result {
            pending.clear();
            for o in result.outcomes {
                match o.status {
                    RequestStatus::Matched(p) => {
                        matched += 1;
                        status[index_of[&o.request.id]].1 = RequestStatus::Matched(p);
                    }
                    _ => pending.push(o.request),
                }
            }
        }
        let fuel = epoch_fuel(&decisions, net, fleet.len());
        let reward = epoch_reward(matched, fuel, cfg);
        epochs.push(EpochRecord {
            epoch,
            state,
            observations,
            masks,
            actions,
            matched,
            fuel,
            reward,
        });
        if fleet.min_cumulative_time_s() >= cfg.time_limit_s || pending.is_empty() {
            break;
        }
    }

    for (_, s) in status.iter_mut() {
        if *s == RequestStatus::Pending {
            *s = RequestStatus::Unserved;
        }
    }
    let idle = eliminate_idle(&graph);
    Ok(EpisodeTranscript {
        epochs,
        unfinished: pending.len(),
        avg_drive_h: idle.avg_drive_h(fleet.len()),
        end_locations: fleet.locations(),
        graph,
        outcomes: status,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdleElimination {
    /// Surviving edge ids, per truck in departure order.
    pub kept: Vec<Vec<usize>>,
    pub removed: Vec<usize>,
    pub drive_before_s: u64,
    pub drive_after_s: u64,
}

impl IdleElimination {
    pub fn truck_drive_s(&self, g: &DispatchGraph, truck: usize) -> u64 {
        self.kept[truck].iter().map(|&e| g.edge(e).eta_s).sum()
    }

    pub fn avg_drive_h(&self, num_trucks: usize) -> f64 {
        if num_trucks == 0 {
            0.0
        } else {
            self.drive_after_s as f64 / 3600.0 / num_trucks as f64
        }
    }

    pub fn kept_decisions(&self, g: &DispatchGraph) -> Vec<Decision> {
        let mut ids: Vec<usize> = self.kept.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.into_iter().map(|e| g.edge(e).decision()).collect()
    }
}

/// Drops each truck's trailing run of edges that carry no package.
pub fn eliminate_idle(g: &DispatchGraph) -> IdleElimination {
    let mut kept = Vec::with_capacity(g.num_trucks());
    let mut removed = Vec::new();
    for truck in 0..g.num_trucks() {
        let mut ids = g.truck_edges(truck);
        while let Some(&last) = ids.last() {
            if g.edge(last).matched_count > 0 {
                break;
            }
            removed.push(last);
            ids.pop();
        }
        kept.push(ids);
    }
    removed.sort_unstable();
    let drive_before_s = g.edges().iter().map(|e| e.eta_s).sum();
    let drive_after_s = kept.iter().flatten().map(|&e| g.edge(e).eta_s).sum();
    IdleElimination { kept, removed, drive_before_s, drive_after_s }
}
