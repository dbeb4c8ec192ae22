//! Learned dispatch followed by an exact rescue: prune trucks whose
//! dispatch is inefficient, rematch on the remaining routes, then route the
//! leftover demand with the MILP on a fleet picked by reachability.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::env::{eliminate_idle, run_episode, EnvConfig, Encoder, FleetState};
use crate::error::{Error, Result};
use crate::matcher::{match_all, DispatchGraph, MatchOptions, MatchingResult, RequestStatus};
use crate::milp::{
    build_model, decode_routes, solve_with_start, validate_solution, MilpInstance, SolveLimits, SolveStatus, ValidationReport,
};
use crate::qmix::{Checkpoint, Dims, QmixPolicy};
use crate::rng::Rng;
use crate::world::{generate_fleet, generate_requests, LocationId, Request, ScenarioConfig, WorldNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    /// Packages per second of driving below which a truck is pruned.
    pub efficiency_threshold: f64,
    pub rescue_trucks_per_center: usize,
    pub milp_max_nodes: usize,
    pub milp_time_limit_s: Option<f64>,
    pub milp_relative_gap: f64,
    /// MILP objective weight on total tour time (hours).
    pub w_time: f64,
    /// MILP objective weight on undelivered volume.
    pub w_unserved: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            efficiency_threshold: 0.028,
            rescue_trucks_per_center: 2,
            milp_max_nodes: 200_000,
            milp_time_limit_s: None,
            milp_relative_gap: 1e-6,
            w_time: 0.5,
            w_unserved: 0.04,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency_threshold >= 0.0) {
            return Err(Error::Config("efficiency_threshold must be non-negative".into()));
        }
        if self.milp_time_limit_s.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("milp_time_limit_s must be positive".into()));
        }
        if !(self.w_time >= 0.0) || !(self.w_unserved >= 0.0) {
            return Err(Error::Config("w_time and w_unserved must be non-negative".into()));
        }
        Ok(())
    }

    pub fn solve_limits(&self) -> SolveLimits {
        SolveLimits {
            max_nodes: self.milp_max_nodes,
            time_limit: self.milp_time_limit_s.map(Duration::from_secs_f64),
            relative_gap: self.milp_relative_gap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruckEfficiency {
    pub truck: usize,
    pub packages_delivered: usize,
    pub driving_time_s: u64,
    /// Packages per second; 0 for a truck that never drives.
    pub efficiency: f64,
}

/// Per truck: distinct requests whose path uses one of its edges, over its
/// driving time after idle elimination.
pub fn compute_efficiency(graph: &DispatchGraph, matching: &MatchingResult) -> Vec<TruckEfficiency> {
    let idle = eliminate_idle(graph);
    let mut carried: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); graph.num_trucks()];
    for (req, path) in matching.matched() {
        for &e in &path.edges {
            carried[graph.edge(e).truck].insert(req.id);
        }
    }
    (0..graph.num_trucks())
        .map(|truck| {
            let driving_time_s = idle.truck_drive_s(graph, truck);
            let packages_delivered = carried[truck].len();
            let efficiency = if driving_time_s == 0 {
                0.0
            } else {
                packages_delivered as f64 / driving_time_s as f64
            };
            TruckEfficiency { truck, packages_delivered, driving_time_s, efficiency }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub pruned: Vec<usize>,
    /// Survivors' dispatch after the rematch.
    pub graph: DispatchGraph,
    pub matching: MatchingResult,
    pub unmatched: Vec<Request>,
}

/// Drops every decision of trucks below `threshold`, rebuilds the graph
/// from the survivors' idle-eliminated decisions and matches the full
/// request list again from scratch.
pub fn prune_and_rematch(
    graph: &DispatchGraph,
    matching: &MatchingResult,
    requests: &[Request],
    threshold: f64,
    opts: &MatchOptions,
) -> Result<PruneOutcome> {
    let eff = compute_efficiency(graph, matching);
    let pruned: Vec<usize> = eff.iter().filter(|e| e.efficiency < threshold).map(|e| e.truck).collect();
    let idle = eliminate_idle(graph);
    let mut rebuilt = DispatchGraph::new(graph.num_locations(), graph.capacities().to_vec());
    for d in idle.kept_decisions(graph) {
        if !pruned.contains(&d.truck) {
            rebuilt.add_decision(&d)?;
        }
    }
    let result = match_all(&mut rebuilt, requests, opts);
    let unmatched = result.unserved().copied().collect();
    Ok(PruneOutcome { pruned, graph: rebuilt, matching: result, unmatched })
}

/// Where a truck stands once the retained dispatch is done.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruckPosition {
    pub truck: usize,
    pub location: LocationId,
    pub cumulative_time_s: u64,
}

/// Positions after the retained (idle-eliminated) dispatch; trucks without
/// retained edges are still at their origin with their full budget.
pub fn truck_positions(graph: &DispatchGraph, origins: &[LocationId]) -> Vec<TruckPosition> {
    let idle = eliminate_idle(graph);
    origins
        .iter()
        .enumerate()
        .map(|(truck, &origin)| match idle.kept.get(truck).and_then(|k| k.last()) {
            Some(&e) => {
                let edge = graph.edge(e);
                TruckPosition { truck, location: edge.to, cumulative_time_s: edge.arrival_s() }
            }
            None => TruckPosition { truck, location: origin, cumulative_time_s: 0 },
        })
        .collect()
}

/// `available − 2·eta`, in seconds, with `available = T_max − cumulative`.
pub fn truck_priority(pos: &TruckPosition, center: LocationId, net: &WorldNetwork, time_limit_s: u64) -> i64 {
    let available = time_limit_s as i64 - pos.cumulative_time_s as i64;
    available - 2 * net.eta(pos.location, center) as i64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescueTruck {
    pub truck: usize,
    pub depot: LocationId,
    pub priority_s: i64,
    /// Repositioning time from the truck's position to its depot.
    pub reposition_s: u64,
    /// Budget for the tour from the depot.
    pub time_limit_s: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RescueFleet {
    pub trucks: Vec<RescueTruck>,
    /// Slots that could not be filled because the fleet ran out.
    pub shortfall: usize,
    /// Selected trucks left out of the MILP because their budget is gone.
    pub exhausted: Vec<usize>,
}

impl RescueFleet {
    /// Selected trucks that still have time to drive.
    pub fn usable(&self) -> impl Iterator<Item = &RescueTruck> {
        self.trucks.iter().filter(|t| t.time_limit_s > 0)
    }
}

/// For every center (ascending) that is the origin of an unmatched
/// package, the highest-priority trucks not yet chosen, ties to the lower id.
pub fn select_rescue_fleet(
    positions: &[TruckPosition],
    unmatched: &[Request],
    net: &WorldNetwork,
    time_limit_s: u64,
    per_center: usize,
) -> RescueFleet {
    let centers: BTreeSet<LocationId> = unmatched.iter().map(|r| r.source).collect();
    let mut taken = vec![false; positions.len()];
    let mut fleet = RescueFleet::default();
    for &center in &centers {
        let mut ranked: Vec<(i64, usize)> = positions
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .map(|(i, p)| (truck_priority(p, center, net, time_limit_s), i))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(positions[a.1].truck.cmp(&positions[b.1].truck)));
        for &(priority_s, i) in ranked.iter().take(per_center) {
            taken[i] = true;
            let p = &positions[i];
            let reposition_s = net.eta(p.location, center);
            let time_limit = time_limit_s as i64 - p.cumulative_time_s as i64 - reposition_s as i64;
            if time_limit <= 0 {
                fleet.exhausted.push(p.truck);
            }
            fleet.trucks.push(RescueTruck {
                truck: p.truck,
                depot: center,
                priority_s,
                reposition_s,
                time_limit_s: time_limit,
            });
        }
        fleet.shortfall += per_center.saturating_sub(ranked.len());
    }
    fleet
}

/// Residual routing problem over the locations it involves. `locations[i]`
/// is the world id of MILP location `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualProblem {
    pub locations: Vec<LocationId>,
    /// World truck id of MILP truck `k`.
    pub trucks: Vec<usize>,
    pub instance: MilpInstance,
    /// Demand cells in ascending `(source, destination)` order.
    pub cells: Vec<DemandCell>,
}

/// Unmatched packages sharing an origin and destination (world ids).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandCell {
    pub source: LocationId,
    pub destination: LocationId,
    pub volume: u64,
    pub requests: Vec<usize>,
}

pub fn build_residual(
    net: &WorldNetwork,
    unmatched: &[Request],
    rescue: &RescueFleet,
    capacity: u64,
    cfg: &HybridConfig,
) -> Option<ResidualProblem> {
    let usable: Vec<&RescueTruck> = rescue.usable().collect();
    if unmatched.is_empty() || usable.is_empty() {
        return None;
    }
    let mut locs: BTreeSet<LocationId> = usable.iter().map(|t| t.depot).collect();
    for r in unmatched {
        locs.insert(r.source);
        locs.insert(r.destination);
    }
    let locations: Vec<LocationId> = locs.into_iter().collect();
    let local = |w: LocationId| locations.binary_search(&w).expect("collected above");
    let m = locations.len();
    let mut demand = vec![vec![0u64; m]; m];
    let mut grouped: BTreeMap<(LocationId, LocationId), Vec<&Request>> = BTreeMap::new();
    for r in unmatched {
        demand[local(r.source)][local(r.destination)] += r.size;
        grouped.entry((r.source, r.destination)).or_default().push(r);
    }
    let cells = grouped
        .into_iter()
        .map(|((source, destination), reqs)| DemandCell {
            source,
            destination,
            volume: reqs.iter().map(|r| r.size).sum(),
            requests: reqs.iter().map(|r| r.id).collect(),
        })
        .collect();
    let travel_s = locations
        .iter()
        .map(|&a| locations.iter().map(|&b| net.eta(a, b)).collect())
        .collect();
    let instance = MilpInstance {
        num_locations: m,
        depots: usable.iter().map(|t| local(t.depot)).collect(),
        travel_s,
        demand,
        capacity,
        time_limits_s: usable.iter().map(|t| t.time_limit_s as u64).collect(),
        w_time: cfg.w_time,
        w_unserved: cfg.w_unserved,
    };
    Some(ResidualProblem { locations, trucks: usable.iter().map(|t| t.truck).collect(), instance, cells })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpStage {
    pub problem: ResidualProblem,
    pub status: SolveStatus,
    pub objective: f64,
    pub nodes: usize,
    pub validation: ValidationReport,
    /// Tours in world location ids, depot first, per MILP truck.
    pub tours: Vec<Option<Vec<LocationId>>>,
    pub served_cells: Vec<(LocationId, LocationId)>,
    /// Driving plus repositioning of the trucks that were used.
    pub drive_s: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridReport {
    pub total_requests: usize,
    pub greedy_served_before_prune: usize,
    pub efficiencies: Vec<TruckEfficiency>,
    pub pruned: Vec<usize>,
    pub greedy_served: usize,
    pub unmatched_after_rematch: Vec<usize>,
    pub rescue: RescueFleet,
    pub milp: Option<MilpStage>,
    pub milp_served: Vec<usize>,
    pub unserved: Vec<usize>,
    pub served: usize,
    pub greedy_drive_s: u64,
    pub total_drive_h: f64,
}

impl HybridReport {
    pub fn milp_status(&self) -> &'static str {
        self.milp.as_ref().map_or("Skipped", |s| s.status.label())
    }

    pub fn summary_header() -> &'static str {
        "served,unserved,total_drive_h,milp_status,wall_time_s"
    }

    /// Summary CSV row; the wall time column is left empty when `None` so
    /// that repeated runs produce identical bytes.
    pub fn summary_row(&self, wall_time_s: Option<f64>) -> String {
        format!(
            "{},{},{},{},{}",
            self.served,
            self.unserved.len(),
            self.total_drive_h,
            self.milp_status(),
            wall_time_s.map(|t| format!("{t:.3}")).unwrap_or_default()
        )
    }
}

/// Result of the learned dispatch that the rescue pipeline starts from.
#[derive(Clone, Copy, Debug)]
pub struct GreedyDispatch<'a> {
    pub graph: &'a DispatchGraph,
    pub matching: &'a MatchingResult,
    pub requests: &'a [Request],
    /// Episode start location of every truck.
    pub origins: &'a [LocationId],
    pub time_limit_s: u64,
}

/// Everything after the rollout: pruning, rematch, rescue and the MILP.
pub fn hybrid_from_dispatch(
    net: &WorldNetwork,
    dispatch: &GreedyDispatch<'_>,
    opts: &MatchOptions,
    cfg: &HybridConfig,
) -> Result<HybridReport> {
    cfg.validate()?;
    let GreedyDispatch { graph, matching, requests, origins, time_limit_s } = *dispatch;
    let efficiencies = compute_efficiency(graph, matching);
    let prune = prune_and_rematch(graph, matching, requests, cfg.efficiency_threshold, opts)?;
    let positions = truck_positions(&prune.graph, origins);
    let rescue = if prune.unmatched.is_empty() {
        RescueFleet::default()
    } else {
        select_rescue_fleet(&positions, &prune.unmatched, net, time_limit_s, cfg.rescue_trucks_per_center)
    };
    let capacity = rescue
        .usable()
        .map(|t| graph.capacities()[t.truck])
        .min()
        .unwrap_or(0);
    let greedy_drive_s = eliminate_idle(&prune.graph).drive_after_s;

    let mut milp_served: Vec<usize> = Vec::new();
    let milp = match build_residual(net, &prune.unmatched, &rescue, capacity, cfg) {
        None => None,
        Some(problem) => {
            // Nobody driving is always feasible, so an exhausted budget still
            // has an incumbent to report.
            let model = build_model(&problem.instance);
            let idle = vec![0.0; model.variables.len()];
            let sol = solve_with_start(&model, &cfg.solve_limits(), Some(&idle));
            let validation = validate_solution(&problem.instance, &sol);
            let mut served_cells = Vec::new();
            let mut tours = vec![None; problem.trucks.len()];
            let mut drive_s = 0;
            if sol.status.has_solution() && validation.is_ok() {
                let routes = decode_routes(&problem.instance, &sol.values);
                for &(i, j, _) in &routes.assignments {
                    served_cells.push((problem.locations[i], problem.locations[j]));
                }
                served_cells.sort_unstable();
                served_cells.dedup();
                for (k, tour) in routes.tours.iter().enumerate() {
                    if let Some(t) = tour {
                        let inst = &problem.instance;
                        let loop_s: u64 = (0..t.len()).map(|p| inst.travel_s[t[p]][t[(p + 1) % t.len()]]).sum();
                        let reposition = rescue
                            .trucks
                            .iter()
                            .find(|r| r.truck == problem.trucks[k])
                            .map_or(0, |r| r.reposition_s);
                        drive_s += loop_s + reposition;
                        tours[k] = Some(t.iter().map(|&l| problem.locations[l]).collect());
                    }
                }
                for cell in &problem.cells {
                    if served_cells.binary_search(&(cell.source, cell.destination)).is_ok() {
                        milp_served.extend(&cell.requests);
                    }
                }
                milp_served.sort_unstable();
            }
            Some(MilpStage {
                status: sol.status,
                objective: sol.objective,
                nodes: sol.nodes,
                validation,
                tours,
                served_cells,
                drive_s,
                problem,
            })
        }
    };

    let unserved: Vec<usize> = prune
        .unmatched
        .iter()
        .map(|r| r.id)
        .filter(|id| milp_served.binary_search(id).is_err())
        .collect();
    let greedy_served = prune.matching.served();
    let milp_drive = milp.as_ref().map_or(0, |m| m.drive_s);
    Ok(HybridReport {
        total_requests: requests.len(),
        greedy_served_before_prune: matching.served(),
        efficiencies,
        pruned: prune.pruned,
        greedy_served,
        unmatched_after_rematch: prune.unmatched.iter().map(|r| r.id).collect(),
        rescue,
        served: greedy_served + milp_served.len(),
        milp_served,
        unserved,
        greedy_drive_s,
        total_drive_h: (greedy_drive_s + milp_drive) as f64 / 3600.0,
        milp,
    })
}

const STREAM_FLEET: u64 = 201;
const STREAM_REQUESTS: u64 = 202;
const STREAM_POLICY: u64 = 203;

/// One greedy rollout of the learned policy on a fresh fleet and request
/// set, then the rescue pipeline.
pub fn run_hybrid(
    net: &WorldNetwork,
    ckpt: &Checkpoint,
    scenario: &ScenarioConfig,
    cfg: &HybridConfig,
) -> Result<HybridReport> {
    scenario.validate()?;
    let m = net.num_locations();
    let encoder = Encoder::new(m, scenario.epochs_per_episode, scenario.num_trucks, ckpt.volume_scale);
    if Dims::from_encoder(&encoder, ckpt.params.dims.hidden) != ckpt.params.dims {
        return Err(Error::Shape("checkpoint does not fit this world and scenario".into()));
    }
    let seed = scenario.rng_seed;
    let specs = generate_fleet(net, scenario, &mut Rng::derive(seed, STREAM_FLEET));
    let requests = generate_requests(net, scenario, &mut Rng::derive(seed, STREAM_REQUESTS));
    let mut fleet = FleetState::from_specs(&specs, m);
    let env = EnvConfig::from_scenario(scenario);
    let mut policy = QmixPolicy::new(ckpt.params.clone(), 0.0);
    let transcript = run_episode(
        &mut policy,
        net,
        &mut fleet,
        &requests,
        &env,
        &encoder,
        &mut Rng::derive(seed, STREAM_POLICY),
    )?;
    let matching = MatchingResult {
        outcomes: transcript
            .outcomes
            .iter()
            .map(|(r, s)| crate::matcher::MatchOutcome {
                request: *r,
                status: match s {
                    RequestStatus::Pending => RequestStatus::Unserved,
                    other => other.clone(),
                },
            })
            .collect(),
    };
    let origins: Vec<LocationId> = specs.iter().map(|s| s.initial_location).collect();
    let dispatch = GreedyDispatch {
        graph: &transcript.graph,
        matching: &matching,
        requests: &requests,
        origins: &origins,
        time_limit_s: scenario.episode_time_limit_s,
    };
    hybrid_from_dispatch(net, &dispatch, &env.match_options(), cfg)
}
