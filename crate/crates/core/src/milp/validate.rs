//! Independent re-check of a routing solution against the original,
//! un-linearised semantics: tours, budgets, ordering, loads, objective.

use serde::{Deserialize, Serialize};

use super::bnb::{MilpSolution, INTEGRALITY_TOL};
use super::instance::{MilpInstance, VarLayout};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Objective recomputed from the assignment with the product form of
    /// the unserved term.
    pub recomputed_objective: f64,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tours (depot first, closing edge implied) and served demand cells.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routes {
    pub tours: Vec<Option<Vec<usize>>>,
    /// `(from, to, truck)` cells with `r = 1`.
    pub assignments: Vec<(usize, usize, usize)>,
}

fn as_bit(v: f64) -> Option<bool> {
    if (v - 0.0).abs() <= INTEGRALITY_TOL {
        Some(false)
    } else if (v - 1.0).abs() <= INTEGRALITY_TOL {
        Some(true)
    } else {
        None
    }
}

/// Follows each truck's x-edges from its depot. Trucks whose edges do not
/// form a single closed walk get `None`.
pub fn decode_routes(inst: &MilpInstance, values: &[f64]) -> Routes {
    let lay = VarLayout::of(inst);
    let (m, n) = (lay.m, lay.n);
    let bit = |j: usize| as_bit(values[j]).unwrap_or(false);
    let mut tours = Vec::with_capacity(n);
    for k in 0..n {
        let depot = inst.depots[k];
        let edges: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| bit(lay.x(i, j, k)))
            .collect();
        if edges.is_empty() {
            tours.push(None);
            continue;
        }
        let mut tour = vec![depot];
        let mut cur = depot;
        let mut ok = true;
        for _ in 0..edges.len() {
            let next: Vec<usize> = edges.iter().filter(|e| e.0 == cur).map(|e| e.1).collect();
            if next.len() != 1 {
                ok = false;
                break;
            }
            cur = next[0];
            if cur == depot {
                break;
            }
            if tour.contains(&cur) {
                ok = false;
                break;
            }
            tour.push(cur);
        }
        if ok && cur == depot && tour.len() == edges.len() {
            tours.push(Some(tour));
        } else {
            tours.push(None);
        }
    }
    let mut assignments = Vec::new();
    for k in 0..n {
        for i in 0..m {
            for j in 0..m {
                if bit(lay.r(i, j, k)) {
                    assignments.push((i, j, k));
                }
            }
        }
    }
    Routes { tours, assignments }
}

pub fn validate_solution(inst: &MilpInstance, sol: &MilpSolution) -> ValidationReport {
    let mut v = Vec::new();
    let lay = VarLayout::of(inst);
    let (m, n) = (lay.m, lay.n);
    if !sol.status.has_solution() {
        return ValidationReport {
            violations: vec![format!("no assignment to check (status {})", sol.status.label())],
            recomputed_objective: f64::NAN,
        };
    }
    let vals = &sol.values;
    if vals.len() != lay.len() {
        return ValidationReport {
            violations: vec![format!("assignment has {} values, model has {}", vals.len(), lay.len())],
            recomputed_objective: f64::NAN,
        };
    }
    let mut bits = vec![false; lay.len()];
    for k in 0..n {
        for i in 0..m {
            for j in 0..m {
                for (idx, fam) in [(lay.x(i, j, k), "x"), (lay.r(i, j, k), "r")] {
                    match as_bit(vals[idx]) {
                        Some(b) => bits[idx] = b,
                        None => v.push(format!("{fam}_{i}_{j}_{k} = {} is not binary", vals[idx])),
                    }
                }
            }
        }
        match as_bit(vals[lay.u(k)]) {
            Some(b) => bits[lay.u(k)] = b,
            None => v.push(format!("u_{k} = {} is not binary", vals[lay.u(k)])),
        }
    }

    let routes = decode_routes(inst, vals);
    let mut t1_s = 0u64;
    let mut position: Vec<Vec<Option<usize>>> = vec![vec![None; m]; n];
    for k in 0..n {
        let depot = inst.depots[k];
        let used = bits[lay.u(k)];
        for i in 0..m {
            if bits[lay.x(i, i, k)] {
                v.push(format!("truck {k} has a self-loop at {i}"));
            }
            if bits[lay.r(i, i, k)] {
                v.push(format!("truck {k} is assigned the empty cell {i}->{i}"));
            }
        }
        let edges: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| bits[lay.x(i, j, k)])
            .collect();
        let drive: u64 = edges.iter().map(|&(i, j)| inst.travel_s[i][j]).sum();
        t1_s += drive;
        if !used {
            if !edges.is_empty() {
                v.push(format!("truck {k} drives while marked unused"));
            }
        } else if edges.is_empty() {
            v.push(format!("truck {k} is marked used but has no tour"));
        }
        for i in 0..m {
            let out = edges.iter().filter(|e| e.0 == i).count();
            let inn = edges.iter().filter(|e| e.1 == i).count();
            if out != inn || out > 1 {
                v.push(format!("truck {k} node {i}: in-degree {inn}, out-degree {out}"));
            }
        }
        if !edges.is_empty() {
            match &routes.tours[k] {
                Some(tour) => {
                    for (p, &node) in tour.iter().enumerate() {
                        position[k][node] = Some(p);
                    }
                }
                None => {
                    let touches_depot = edges.iter().any(|e| e.0 == depot);
                    if touches_depot {
                        v.push(format!("truck {k} has a subtour disjoint from its depot {depot}"));
                    } else {
                        v.push(format!("truck {k} route does not pass its depot {depot}"));
                    }
                }
            }
        }
        if drive > inst.time_limits_s[k] {
            v.push(format!("truck {k} drives {drive} s over its budget {} s", inst.time_limits_s[k]));
        }
    }

    for i in 0..m {
        for j in 0..m {
            let takers = (0..n).filter(|&k| bits[lay.r(i, j, k)]).count();
            if takers > 1 {
                v.push(format!("cell {i}->{j} assigned to {takers} trucks"));
            }
        }
    }
    for &(i, j, k) in &routes.assignments {
        if i == j {
            continue;
        }
        let depot = inst.depots[k];
        let (pi, pj) = (position[k][i], position[k][j]);
        match (pi, pj) {
            (Some(a), Some(b)) => {
                if j != depot && a > b {
                    v.push(format!("truck {k} visits {j} before {i} but carries {i}->{j}"));
                }
            }
            _ => v.push(format!("truck {k} carries {i}->{j} but its tour misses an endpoint")),
        }
    }
    // Load simulation along each tour.
    let cap = inst.capacity;
    for k in 0..n {
        let Some(tour) = &routes.tours[k] else { continue };
        let carried = |i: usize, j: usize| bits[lay.r(i, j, k)] && i != j;
        let mut load: i64 = 0;
        for (p, &node) in tour.iter().enumerate() {
            let pick: u64 = (0..m).filter(|&l| carried(node, l)).map(|l| inst.demand[node][l]).sum();
            let drop: u64 = if p == 0 {
                0
            } else {
                (0..m).filter(|&l| carried(l, node)).map(|l| inst.demand[l][node]).sum()
            };
            load += pick as i64 - drop as i64;
            if load < 0 || load as u64 > cap {
                v.push(format!("truck {k} leaves {node} with load {load} outside [0, {cap}]"));
            }
        }
    }

    let mut t2 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let open: f64 = (0..n).map(|k| 1.0 - if bits[lay.r(i, j, k)] { 1.0 } else { 0.0 }).product();
            t2 += inst.demand[i][j] as f64 * open;
        }
    }
    let recomputed = inst.w_time * t1_s as f64 / 3600.0 + inst.w_unserved * t2;
    if (recomputed - sol.objective).abs() > 1e-9 * recomputed.abs().max(1.0) {
        v.push(format!("reported objective {} but assignment gives {recomputed}", sol.objective));
    }
    ValidationReport { violations: v, recomputed_objective: recomputed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{build_model, SolveStatus};

    fn inst() -> MilpInstance {
        MilpInstance {
            num_locations: 3,
            depots: vec![0],
            travel_s: vec![vec![0, 3600, 3600], vec![3600, 0, 3600], vec![3600, 3600, 0]],
            demand: vec![vec![0, 4, 0], vec![0, 0, 6], vec![0, 0, 0]],
            capacity: 8,
            time_limits_s: vec![20_000],
            w_time: 0.5,
            w_unserved: 0.04,
        }
    }

    fn sol_with(inst: &MilpInstance, ones: &[usize]) -> MilpSolution {
        let lay = VarLayout::of(inst);
        let mut values = vec![0.0; lay.len()];
        for &j in ones {
            values[j] = 1.0;
        }
        let model = build_model(inst);
        MilpSolution {
            status: SolveStatus::Optimal,
            objective: model.objective_value(&values),
            values,
            nodes: 1,
        }
    }

    #[test]
    fn accepts_a_good_tour_and_flags_order_and_load() {
        let i = inst();
        let l = VarLayout::of(&i);
        let tour = [l.x(0, 1, 0), l.x(1, 2, 0), l.x(2, 0, 0), l.u(0)];
        let mut ones = tour.to_vec();
        ones.extend([l.r(0, 1, 0), l.r(1, 2, 0)]);
        let good = sol_with(&i, &ones);
        let rep = validate_solution(&i, &good);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        assert_eq!(decode_routes(&i, &good.values).tours[0], Some(vec![0, 1, 2]));

        // Reversed tour visits 2 before 1.
        let mut rev = vec![l.x(0, 2, 0), l.x(2, 1, 0), l.x(1, 0, 0), l.u(0)];
        rev.push(l.r(1, 2, 0));
        assert!(!validate_solution(&i, &sol_with(&i, &rev)).is_ok());

        let mut heavy = i.clone();
        heavy.demand[1][2] = 9;
        heavy.capacity = 9;
        heavy.demand[0][2] = 1;
        let mut over = tour.to_vec();
        over.extend([l.r(0, 2, 0), l.r(1, 2, 0)]);
        let rep = validate_solution(&heavy, &sol_with(&heavy, &over));
        assert!(rep.violations.iter().any(|v| v.contains("load")), "{:?}", rep.violations);
    }

    #[test]
    fn flags_subtours_and_wrong_objective() {
        let mut i = inst();
        i.num_locations = 4;
        i.travel_s = vec![vec![0, 1, 1, 1]; 4];
        for (a, row) in i.travel_s.iter_mut().enumerate() {
            row[a] = 0;
        }
        i.demand = vec![vec![0; 4]; 4];
        let l = VarLayout::of(&i);
        let ones = [l.x(0, 1, 0), l.x(1, 0, 0), l.x(2, 3, 0), l.x(3, 2, 0), l.u(0)];
        let mut s = sol_with(&i, &ones);
        let rep = validate_solution(&i, &s);
        assert!(rep.violations.iter().any(|v| v.contains("subtour")), "{:?}", rep.violations);
        s.objective += 1.0;
        assert!(validate_solution(&i, &s).violations.iter().any(|v| v.contains("objective")));
    }
}
