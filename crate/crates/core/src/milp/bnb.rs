//! Best-first branch and bound over LP relaxations.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::model::{MilpModel, VarKind};
use super::simplex::{solve_lp, LpData, LpStatus};

pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveLimits {
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    /// Relative gap at which the search stops.
    pub relative_gap: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            max_nodes: 1_000_000,
            time_limit: None,
            relative_gap: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SolveStatus {
    Optimal,
    /// Stopped with an incumbent inside a user-requested gap.
    Feasible { gap: f64 },
    Infeasible,
    /// Budget exhausted; the assignment (if any) is the incumbent.
    Aborted { bound: f64, has_incumbent: bool },
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Feasible { .. } => "Feasible",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::Aborted { .. } => "Aborted",
        }
    }

    pub fn has_solution(&self) -> bool {
        matches!(
            self,
            SolveStatus::Optimal | SolveStatus::Feasible { .. } | SolveStatus::Aborted { has_incumbent: true, .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
}

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap order: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

fn fractionality(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Picks the binary farthest from integrality (lowest index on ties),
/// falling back to general integers.
fn branch_variable(model: &MilpModel, x: &[f64]) -> Option<usize> {
    for kinds in [[VarKind::Binary, VarKind::Binary], [VarKind::Integer, VarKind::Integer]] {
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in model.variables.iter().enumerate() {
            if !kinds.contains(&v.kind) {
                continue;
            }
            let f = fractionality(x[j]);
            if f > INTEGRALITY_TOL && best.is_none_or(|(_, bf)| f > bf + 1e-12) {
                best = Some((j, f));
            }
        }
        if let Some((j, _)) = best {
            return Some(j);
        }
    }
    None
}

fn gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

pub fn solve(model: &MilpModel, limits: &SolveLimits) -> MilpSolution {
    solve_with_start(model, limits, None)
}

/// Checks that `x` is a usable incumbent: right length, within bounds,
/// integral where required and feasible for every row.
pub fn is_feasible_point(model: &MilpModel, x: &[f64]) -> bool {
    x.len() == model.variables.len()
        && model.variables.iter().zip(x).enumerate().all(|(j, (v, &xj))| {
            xj >= v.lower - 1e-9 && xj <= v.upper + 1e-9 && (!model.is_integer(j) || fractionality(xj) <= INTEGRALITY_TOL)
        })
        && model.max_violation(x) <= 1e-7
}

/// Branch and bound seeded with a known feasible assignment, so a search
/// that runs out of budget still reports something usable. An infeasible
/// `start` is ignored.
pub fn solve_with_start(model: &MilpModel, limits: &SolveLimits, start: Option<&[f64]>) -> MilpSolution {
    let started = Instant::now();
    let data = LpData::from_model(model);
    let (lower, upper) = LpData::bounds(model);
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, id: 0, lower, upper });
    let mut next_id = 1;
    let mut incumbent: Option<(f64, Vec<f64>)> = start
        .filter(|x| is_feasible_point(model, x))
        .map(|x| (model.objective_value(x), x.to_vec()));
    let mut nodes = 0usize;
    let mut aborted = false;

    while let Some(node) = heap.peek() {
        if let Some((best, _)) = &incumbent {
            if gap(*best, node.bound) <= limits.relative_gap {
                break;
            }
        }
        if nodes >= limits.max_nodes || limits.time_limit.is_some_and(|t| started.elapsed() >= t) {
            aborted = true;
            break;
        }
        let node = heap.pop().expect("peeked");
        nodes += 1;
        let lp = solve_lp(&data, &node.lower, &node.upper);
        match lp.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                log::warn!("relaxation at node {} ended with {:?}; node dropped", node.id, lp.status);
                continue;
            }
        }
        if let Some((best, _)) = &incumbent {
            if gap(*best, lp.objective) <= limits.relative_gap {
                continue;
            }
        }
        match branch_variable(model, &lp.x) {
            None => {
                let mut x = lp.x;
                for (j, v) in x.iter_mut().enumerate() {
                    if model.is_integer(j) {
                        *v = v.round();
                    }
                }
                let obj = model.objective_value(&x);
                if incumbent.as_ref().is_none_or(|(b, _)| obj < *b) {
                    incumbent = Some((obj, x));
                }
            }
            Some(j) => {
                let xj = lp.x[j];
                let mut down_upper = node.upper.clone();
                down_upper[j] = xj.floor();
                let mut up_lower = node.lower.clone();
                up_lower[j] = xj.ceil();
                heap.push(Node {
                    bound: lp.objective,
                    depth: node.depth + 1,
                    id: next_id,
                    lower: node.lower.clone(),
                    upper: down_upper,
                });
                heap.push(Node {
                    bound: lp.objective,
                    depth: node.depth + 1,
                    id: next_id + 1,
                    lower: up_lower,
                    upper: node.upper,
                });
                next_id += 2;
            }
        }
    }

    let open_bound = heap.peek().map(|n| n.bound);
    match incumbent {
        Some((objective, values)) => {
            let bound = open_bound.map_or(objective, |b| b.min(objective));
            let g = gap(objective, bound);
            let status = if aborted {
                SolveStatus::Aborted { bound, has_incumbent: true }
            } else if g <= 1e-6 {
                SolveStatus::Optimal
            } else {
                SolveStatus::Feasible { gap: g }
            };
            MilpSolution { status, values, objective, nodes }
        }
        None => {
            let status = if aborted {
                SolveStatus::Aborted { bound: open_bound.unwrap_or(f64::NEG_INFINITY), has_incumbent: false }
            } else {
                SolveStatus::Infeasible
            };
            MilpSolution {
                status,
                values: vec![0.0; model.variables.len()],
                objective: f64::NAN,
                nodes,
            }
        }
    }
}
