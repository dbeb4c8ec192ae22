//! Greedy multi-transfer matching of requests onto executed dispatch
//! decisions.
//!
//! Dispatch decisions become edges of a directed multigraph over stops.
//! Each request is routed along the feasible simple path that adds the
//! least fresh driving time; edges that already carry a package are free
//! to ride along.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{LocationId, Request, TruckSpec};

/// One truck's move from `from` to `to`, departing at `depart_s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub truck: usize,
    pub epoch: usize,
    pub from: LocationId,
    pub to: LocationId,
    pub depart_s: u64,
    pub eta_s: u64,
}

impl Decision {
    pub fn arrival_s(&self) -> u64 {
        self.depart_s + self.eta_s
    }
}

pub type EdgeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub truck: usize,
    pub epoch: usize,
    pub from: LocationId,
    pub to: LocationId,
    pub depart_s: u64,
    pub eta_s: u64,
    pub capacity: u64,
    pub remaining: u64,
    pub matched_count: usize,
}

impl Edge {
    pub fn arrival_s(&self) -> u64 {
        self.depart_s + self.eta_s
    }

    pub fn routed_volume(&self) -> u64 {
        self.capacity - self.remaining
    }

    pub fn decision(&self) -> Decision {
        Decision {
            truck: self.truck,
            epoch: self.epoch,
            from: self.from,
            to: self.to,
            depart_s: self.depart_s,
            eta_s: self.eta_s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatchMode {
    /// Paths may hop between trucks at intermediate stops.
    #[default]
    MultiTransfer,
    /// Every edge of a path must belong to the same truck.
    SingleTruck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchOptions {
    pub mode: MatchMode,
    /// Upper bound on enumerated paths per request.
    pub path_limit: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            mode: MatchMode::MultiTransfer,
            path_limit: 100_000,
        }
    }
}

/// Weighted directed multigraph of dispatch decisions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchGraph {
    num_locations: usize,
    capacities: Vec<u64>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<EdgeId>>,
}

impl DispatchGraph {
    /// Empty graph over `num_locations` stops for trucks with the given
    /// capacities (indexed by truck id).
    pub fn new(num_locations: usize, capacities: Vec<u64>) -> Self {
        Self {
            num_locations,
            capacities,
            edges: Vec::new(),
            outgoing: vec![Vec::new(); num_locations],
        }
    }

    pub fn add_decision(&mut self, d: &Decision) -> Result<EdgeId> {
        let capacity = *self
            .capacities
            .get(d.truck)
            .ok_or_else(|| Error::Input(format!("decision references unknown truck {}", d.truck)))?;
        if d.from >= self.num_locations || d.to >= self.num_locations {
            return Err(Error::Input(format!(
                "decision {}->{} references an unknown stop",
                d.from, d.to
            )));
        }
        if d.from == d.to {
            return Err(Error::Input(format!("decision {0}->{0} is a self-loop", d.from)));
        }
        let id = self.edges.len();
        self.edges.push(Edge {
            truck: d.truck,
            epoch: d.epoch,
            from: d.from,
            to: d.to,
            depart_s: d.depart_s,
            eta_s: d.eta_s,
            capacity,
            remaining: capacity,
            matched_count: 0,
        });
        self.outgoing[d.from].push(id);
        Ok(id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn num_locations(&self) -> usize {
        self.num_locations
    }

    pub fn num_trucks(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[u64] {
        &self.capacities
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Stops touched by at least one edge.
    pub fn nodes(&self) -> Vec<LocationId> {
        let mut seen = vec![false; self.num_locations];
        for e in &self.edges {
            seen[e.from] = true;
            seen[e.to] = true;
        }
        (0..self.num_locations).filter(|&i| seen[i]).collect()
    }

    /// Edge ids of `truck`, in departure order.
    pub fn truck_edges(&self, truck: usize) -> Vec<EdgeId> {
        let mut ids: Vec<EdgeId> = (0..self.edges.len()).filter(|&i| self.edges[i].truck == truck).collect();
        ids.sort_by_key(|&i| (self.edges[i].depart_s, i));
        ids
    }

    fn commit(&mut self, path: &MatchPath, size: u64) {
        for &e in &path.edges {
            let edge = &mut self.edges[e];
            edge.remaining -= size;
            edge.matched_count += 1;
        }
    }
}

pub fn build_graph(decisions: &[Decision], fleet: &[TruckSpec], num_locations: usize) -> Result<DispatchGraph> {
    let mut capacities = vec![0; fleet.len()];
    for t in fleet {
        if t.id >= fleet.len() {
            return Err(Error::Input(format!("truck ids must be 0..{}", fleet.len())));
        }
        capacities[t.id] = t.capacity;
    }
    let mut g = DispatchGraph::new(num_locations, capacities);
    for d in decisions {
        g.add_decision(d)?;
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPath {
    pub edges: Vec<EdgeId>,
    /// Driving seconds on edges that carried nothing before this request.
    pub added_cost_s: u64,
}

impl MatchPath {
    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    pub fn added_hours(&self) -> f64 {
        self.added_cost_s as f64 / 3600.0
    }

    /// `truck:from>to` hops joined by `;`.
    pub fn describe(&self, g: &DispatchGraph) -> String {
        self.edges
            .iter()
            .map(|&e| {
                let e = g.edge(e);
                format!("{}:{}>{}", e.truck, e.from, e.to)
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequestStatus {
    Pending,
    Matched(MatchPath),
    Unserved,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSearch {
    pub paths: Vec<MatchPath>,
    /// Set when the enumeration stopped at the path limit.
    pub truncated: bool,
}

pub fn path_added_cost(g: &DispatchGraph, edges: &[EdgeId]) -> u64 {
    edges
        .iter()
        .map(|&e| g.edge(e))
        .filter(|e| e.matched_count == 0)
        .map(|e| e.eta_s)
        .sum()
}

/// Depth-first walk over simple, time-feasible, capacity-feasible paths
/// from the request's source to its destination. Returns `false` if the
/// walk hit `limit`.
fn walk_paths<F: FnMut(&[EdgeId])>(g: &DispatchGraph, req: &Request, opts: &MatchOptions, mut visit: F) -> bool {
    if req.source >= g.num_locations || req.destination >= g.num_locations || req.source == req.destination {
        return true;
    }
    struct Frame {
        node: LocationId,
        next: usize,
    }
    let mut on_path = vec![false; g.num_locations];
    on_path[req.source] = true;
    let mut stack = vec![Frame { node: req.source, next: 0 }];
    let mut path: Vec<EdgeId> = Vec::new();
    let mut found = 0usize;
    while let Some(frame) = stack.last_mut() {
        let out = &g.outgoing[frame.node];
        if frame.next >= out.len() {
            let node = frame.node;
            stack.pop();
            on_path[node] = false;
            path.pop();
            continue;
        }
        let eid = out[frame.next];
        frame.next += 1;
        let e = &g.edges[eid];
        if on_path[e.to] || e.remaining < req.size {
            continue;
        }
        if let Some(&prev) = path.last() {
            let prev = &g.edges[prev];
            if prev.arrival_s() > e.depart_s {
                continue;
            }
            if opts.mode == MatchMode::SingleTruck && prev.truck != e.truck {
                continue;
            }
        }
        path.push(eid);
        if e.to == req.destination {
            visit(&path);
            path.pop();
            found += 1;
            if found >= opts.path_limit {
                return false;
            }
        } else {
            on_path[e.to] = true;
            stack.push(Frame { node: e.to, next: 0 });
        }
    }
    true
}

pub fn feasible_paths(g: &DispatchGraph, req: &Request, opts: &MatchOptions) -> PathSearch {
    let mut paths = Vec::new();
    let complete = walk_paths(g, req, opts, |edges| {
        paths.push(MatchPath {
            edges: edges.to_vec(),
            added_cost_s: path_added_cost(g, edges),
        })
    });
    if !complete {
        log::warn!(
            "path enumeration for request {} stopped at the limit of {} paths",
            req.id,
            opts.path_limit
        );
    }
    PathSearch { paths, truncated: !complete }
}

/// Total order used to pick among feasible paths: added cost, then fewest
/// hops, then the (truck, departure) sequence.
fn path_key(g: &DispatchGraph, edges: &[EdgeId], cost: u64) -> (u64, usize, Vec<(usize, u64, EdgeId)>) {
    let seq = edges
        .iter()
        .map(|&e| {
            let edge = g.edge(e);
            (edge.truck, edge.depart_s, e)
        })
        .collect();
    (cost, edges.len(), seq)
}

/// Chooses the best feasible path for `req` without modifying the graph.
pub fn best_path(g: &DispatchGraph, req: &Request, opts: &MatchOptions) -> Option<MatchPath> {
    let mut best: Option<(u64, usize, Vec<(usize, u64, EdgeId)>)> = None;
    let complete = walk_paths(g, req, opts, |edges| {
        let cost = path_added_cost(g, edges);
        if let Some(b) = &best {
            if (cost, edges.len()) > (b.0, b.1) {
                return;
            }
        }
        let key = path_key(g, edges, cost);
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    });
    if !complete {
        log::warn!(
            "path enumeration for request {} stopped at the limit of {} paths",
            req.id,
            opts.path_limit
        );
    }
    best.map(|(cost, _, seq)| MatchPath {
        edges: seq.into_iter().map(|(_, _, e)| e).collect(),
        added_cost_s: cost,
    })
}

/// Routes one request and books its volume on the chosen edges.
pub fn match_request(g: &mut DispatchGraph, req: &Request, opts: &MatchOptions) -> RequestStatus {
    match best_path(g, req, opts) {
        Some(path) => {
            g.commit(&path, req.size);
            RequestStatus::Matched(path)
        }
        None => RequestStatus::Unserved,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub request: Request,
    pub status: RequestStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub outcomes: Vec<MatchOutcome>,
}

impl MatchingResult {
    pub fn served(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o.status, RequestStatus::Matched(_)))
            .count()
    }

    pub fn added_hours(&self) -> f64 {
        self.added_cost_s() as f64 / 3600.0
    }

    pub fn added_cost_s(&self) -> u64 {
        self.matched().map(|(_, p)| p.added_cost_s).sum()
    }

    pub fn matched(&self) -> impl Iterator<Item = (&Request, &MatchPath)> {
        self.outcomes.iter().filter_map(|o| match &o.status {
            RequestStatus::Matched(p) => Some((&o.request, p)),
            _ => None,
        })
    }

    pub fn unserved(&self) -> impl Iterator<Item = &Request> {
        self.outcomes
            .iter()
            .filter(|o| !matches!(o.status, RequestStatus::Matched(_)))
            .map(|o| &o.request)
    }
}

/// Greedy pass over `requests` in ascending id order.
pub fn match_all(g: &mut DispatchGraph, requests: &[Request], opts: &MatchOptions) -> MatchingResult {
    let mut order: Vec<&Request> = requests.iter().collect();
    order.sort_by_key(|r| r.id);
    let outcomes = order
        .into_iter()
        .map(|r| MatchOutcome {
            request: *r,
            status: match_request(g, r, opts),
        })
        .collect();
    MatchingResult { outcomes }
}

/// Post-hoc check of routed requests against a graph: path shape,
/// transfer timing, capacity at routing time and capacity conservation.
/// Returns one message per violation.
pub fn audit(g: &DispatchGraph, routed: &[(Request, MatchPath)], mode: MatchMode) -> Vec<String> {
    let mut violations = Vec::new();
    let mut volume = vec![0u64; g.edges.len()];
    let mut count = vec![0usize; g.edges.len()];
    for (req, path) in routed {
        if path.edges.is_empty() {
            violations.push(format!("request {}: empty path", req.id));
            continue;
        }
        if path.edges.iter().any(|&e| e >= g.edges.len()) {
            violations.push(format!("request {}: unknown edge", req.id));
            continue;
        }
        let first = g.edge(path.edges[0]);
        let last = g.edge(*path.edges.last().unwrap());
        if first.from != req.source {
            violations.push(format!("request {}: path starts at {} not {}", req.id, first.from, req.source));
        }
        if last.to != req.destination {
            violations.push(format!("request {}: path ends at {} not {}", req.id, last.to, req.destination));
        }
        let mut seen = vec![false; g.num_locations];
        seen[first.from] = true;
        for w in path.edges.windows(2) {
            let (a, b) = (g.edge(w[0]), g.edge(w[1]));
            if a.to != b.from {
                violations.push(format!("request {}: edges not contiguous", req.id));
            }
            if a.arrival_s() > b.depart_s {
                violations.push(format!(
                    "request {}: arrives at {} at {} after departure {}",
                    req.id, a.to, a.arrival_s(), b.depart_s
                ));
            }
            if mode == MatchMode::SingleTruck && a.truck != b.truck {
                violations.push(format!("request {}: transfer in single-truck mode", req.id));
            }
        }
        for &e in &path.edges {
            let to = g.edge(e).to;
            if seen[to] {
                violations.push(format!("request {}: path revisits {}", req.id, to));
            }
            seen[to] = true;
            volume[e] += req.size;
            count[e] += 1;
        }
    }
    for (id, e) in g.edges.iter().enumerate() {
        if volume[id] > e.capacity {
            violations.push(format!("edge {id}: routed volume {} exceeds capacity {}", volume[id], e.capacity));
        } else if e.capacity - volume[id] != e.remaining {
            violations.push(format!(
                "edge {id}: remaining {} but capacity {} minus routed {}",
                e.remaining, e.capacity, volume[id]
            ));
        }
        if count[id] != e.matched_count {
            violations.push(format!("edge {id}: matched_count {} but {} paths", e.matched_count, count[id]));
        }
    }
    violations
}
