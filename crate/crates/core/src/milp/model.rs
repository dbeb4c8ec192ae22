use serde::{Deserialize, Serialize};

use super::instance::{MilpInstance, VarLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Minimisation model: linear objective plus constant, linear rows,
/// bounded variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
}

impl MilpModel {
    pub fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name, kind, lower, upper });
        self.variables.len() - 1
    }

    /// Adds a row, dropping zero coefficients.
    pub fn add_row(&mut self, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let terms = terms.into_iter().filter(|&(_, a)| a != 0.0).collect();
        self.constraints.push(Constraint { name, terms, sense, rhs });
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(j, c)| c * values[j]).sum::<f64>()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.variables[j].kind != VarKind::Continuous
    }

    /// Largest row or bound violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(values));
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

/// Builds the routing model: tours from fixed depots with ordering
/// variables against subtours, pickup-before-dropoff assignments and
/// load tracking, all bilinear terms replaced by big-M rows.
pub fn build_model(inst: &MilpInstance) -> MilpModel {
    let lay = VarLayout::of(inst);
    let (m, n) = (lay.m, lay.n);
    let cap = inst.capacity as f64;
    let big_m = m as f64;
    let mut model = MilpModel::default();

    for k in 0..n {
        for i in 0..m {
            for j in 0..m {
                model.add_var(format!("x_{i}_{j}_{k}"), VarKind::Binary, 0.0, 1.0);
            }
        }
    }
    for k in 0..n {
        for i in 0..m {
            for j in 0..m {
                model.add_var(format!("r_{i}_{j}_{k}"), VarKind::Binary, 0.0, 1.0);
            }
        }
    }
    for k in 0..n {
        model.add_var(format!("u_{k}"), VarKind::Binary, 0.0, 1.0);
    }
    for k in 0..n {
        for i in 0..m {
            model.add_var(format!("s_{i}_{k}"), VarKind::Integer, 0.0, (m as f64 - 1.0).max(0.0));
        }
    }
    for k in 0..n {
        for i in 0..m {
            model.add_var(format!("v_{i}_{k}"), VarKind::Integer, 0.0, cap);
        }
    }
    debug_assert_eq!(model.variables.len(), lay.len());

    // Objective: w1 * hours driven + w2 * sum d (1 - sum_k r).
    let total: f64 = inst.total_demand() as f64;
    model.objective_constant = inst.w_unserved * total;
    for k in 0..n {
        for i in 0..m {
            for j in 0..m {
                let t = inst.travel_s[i][j] as f64;
                if t != 0.0 {
                    model.objective.push((lay.x(i, j, k), inst.w_time * t / 3600.0));
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..m {
            for j in 0..m {
                let d = inst.demand[i][j] as f64;
                if d != 0.0 {
                    model.objective.push((lay.r(i, j, k), -inst.w_unserved * d));
                }
            }
        }
    }

    for k in 0..n {
        let depot = inst.depots[k];
        // No self-loops.
        for i in 0..m {
            model.add_row(format!("noloop_x_{i}_{k}"), vec![(lay.x(i, i, k), 1.0)], Sense::Eq, 0.0);
            model.add_row(format!("noloop_r_{i}_{k}"), vec![(lay.r(i, i, k), 1.0)], Sense::Eq, 0.0);
        }
        // Driving budget.
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for i in 0..m {
            for j in 0..m {
                terms.push((lay.x(i, j, k), inst.travel_s[i][j] as f64));
            }
        }
        terms.push((lay.u(k), -(inst.time_limits_s[k] as f64)));
        model.add_row(format!("time_{k}"), terms, Sense::Le, 0.0);
        // Leave and re-enter the depot exactly when used.
        let mut into: Vec<(usize, f64)> = (0..m).map(|i| (lay.x(i, depot, k), 1.0)).collect();
        into.push((lay.u(k), -1.0));
        model.add_row(format!("depot_in_{k}"), into, Sense::Eq, 0.0);
        let mut out: Vec<(usize, f64)> = (0..m).map(|i| (lay.x(depot, i, k), 1.0)).collect();
        out.push((lay.u(k), -1.0));
        model.add_row(format!("depot_out_{k}"), out, Sense::Eq, 0.0);
        // Degree balance, at most one visit.
        for i in 0..m {
            let mut bal: Vec<(usize, f64)> = (0..m).map(|j| (lay.x(j, i, k), 1.0)).collect();
            bal.extend((0..m).map(|j| (lay.x(i, j, k), -1.0)));
            model.add_row(format!("balance_{i}_{k}"), bal, Sense::Eq, 0.0);
            let mut deg: Vec<(usize, f64)> = (0..m).map(|j| (lay.x(i, j, k), 1.0)).collect();
            deg.push((lay.u(k), -1.0));
            model.add_row(format!("degree_{i}_{k}"), deg, Sense::Le, 0.0);
        }
        // Stop ordering: s_depot = 0, s_i >= 1 + s_j - m (1 - x_j_i).
        model.add_row(format!("order_depot_{k}"), vec![(lay.s(depot, k), 1.0)], Sense::Eq, 0.0);
        for i in (0..m).filter(|&i| i != depot) {
            for j in (0..m).filter(|&j| j != i) {
                model.add_row(
                    format!("order_{i}_{j}_{k}"),
                    vec![(lay.s(i, k), 1.0), (lay.s(j, k), -1.0), (lay.x(j, i, k), -big_m)],
                    Sense::Ge,
                    1.0 - big_m,
                );
            }
        }
        // Assignment needs i left and j entered by truck k, j not before i.
        for i in 0..m {
            for j in (0..m).filter(|&j| j != i) {
                let mut leave: Vec<(usize, f64)> = vec![(lay.r(i, j, k), 1.0)];
                leave.extend((0..m).map(|l| (lay.x(i, l, k), -1.0)));
                model.add_row(format!("pick_{i}_{j}_{k}"), leave, Sense::Le, 0.0);
                let mut enter: Vec<(usize, f64)> = vec![(lay.r(i, j, k), 1.0)];
                enter.extend((0..m).map(|l| (lay.x(l, j, k), -1.0)));
                model.add_row(format!("drop_{i}_{j}_{k}"), enter, Sense::Le, 0.0);
                if j != depot {
                    model.add_row(
                        format!("after_{i}_{j}_{k}"),
                        vec![(lay.s(j, k), 1.0), (lay.s(i, k), -1.0), (lay.r(i, j, k), -big_m)],
                        Sense::Ge,
                        -big_m,
                    );
                }
            }
        }
        // Load after leaving i equals load after its predecessor plus
        // pickups minus drop-offs, enforced for the active predecessor.
        for i in (0..m).filter(|&i| i != depot) {
            for j in (0..m).filter(|&j| j != i) {
                let mut flow: Vec<(usize, f64)> = vec![(lay.v(i, k), 1.0), (lay.v(j, k), -1.0)];
                for l in 0..m {
                    flow.push((lay.r(i, l, k), -(inst.demand[i][l] as f64)));
                }
                for l in 0..m {
                    flow.push((lay.r(l, i, k), inst.demand[l][i] as f64));
                }
                let mut lo = flow.clone();
                lo.push((lay.x(j, i, k), -cap));
                model.add_row(format!("load_lo_{i}_{j}_{k}"), lo, Sense::Ge, -cap);
                let mut hi = flow;
                hi.push((lay.x(j, i, k), cap));
                model.add_row(format!("load_hi_{i}_{j}_{k}"), hi, Sense::Le, cap);
            }
        }
        let mut start: Vec<(usize, f64)> = vec![(lay.v(depot, k), 1.0)];
        for l in 0..m {
            start.push((lay.r(depot, l, k), -(inst.demand[depot][l] as f64)));
        }
        model.add_row(format!("load_depot_{k}"), start, Sense::Eq, 0.0);
        for i in 0..m {
            model.add_row(
                format!("load_cap_{i}_{k}"),
                vec![(lay.v(i, k), 1.0), (lay.u(k), -cap)],
                Sense::Le,
                0.0,
            );
        }
    }
    // One truck per demand cell.
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            let terms = (0..n).map(|k| (lay.r(i, j, k), 1.0)).collect();
            model.add_row(format!("assign_{i}_{j}"), terms, Sense::Le, 1.0);
        }
    }
    model
}
