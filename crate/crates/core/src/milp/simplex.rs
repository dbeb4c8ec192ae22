//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every row gets a logical column (`a x + s = b`) whose bounds encode
//! the row sense. Rows whose logical cannot start feasible receive an
//! artificial column; phase one drives the artificials to zero, phase two
//! optimises the real cost. Dantzig pricing switches to Bland's rule after
//! a run of degenerate pivots.

use super::model::{MilpModel, Sense};

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Row data of a model, scaled and densified once for repeated solves
/// under different variable bounds.
#[derive(Clone, Debug)]
pub struct LpData {
    pub num_vars: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    sense: Vec<Sense>,
    cost: Vec<f64>,
    cost_constant: f64,
}

impl LpData {
    pub fn from_model(model: &MilpModel) -> Self {
        let n = model.variables.len();
        let rows = model.constraints.len();
        let mut a = vec![0.0; rows * n];
        let mut b = vec![0.0; rows];
        let mut sense = Vec::with_capacity(rows);
        for (i, c) in model.constraints.iter().enumerate() {
            for &(j, v) in &c.terms {
                a[i * n + j] += v;
            }
            let scale = a[i * n..(i + 1) * n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            a[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= scale);
            b[i] = c.rhs / scale;
            sense.push(c.sense);
        }
        let mut cost = vec![0.0; n];
        for &(j, c) in &model.objective {
            cost[j] += c;
        }
        Self {
            num_vars: n,
            a,
            b,
            sense,
            cost,
            cost_constant: model.objective_constant,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn bounds(model: &MilpModel) -> (Vec<f64>, Vec<f64>) {
        (
            model.variables.iter().map(|v| v.lower).collect(),
            model.variables.iter().map(|v| v.upper).collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
    /// Free nonbasic variable parked at zero.
    Zero,
}

struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    d: Vec<f64>,
    // Original columns of the initial basis (logical or artificial) and
    // their sign, used to recover B^-1.
    init_col: Vec<usize>,
    init_sign: Vec<f64>,
    a_full: Vec<f64>,
    b: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.d = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, &tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.x.iter().zip(cost).map(|(x, c)| x * c).sum()
    }

    /// Recomputes basic values from the nonbasic ones: x_B = B^-1 (b - N x_N).
    fn refresh_basic(&mut self) {
        let mut rhs = self.b.clone();
        for j in 0..self.cols {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.a_full[i * self.cols + j] * xj;
                }
            }
        }
        for i in 0..self.rows {
            let mut v = 0.0;
            for (l, r) in rhs.iter().enumerate() {
                v += self.at(i, self.init_col[l]) * self.init_sign[l] * r;
            }
            self.x[self.basis[i]] = v;
        }
    }

    fn eligible(&self, j: usize) -> Option<f64> {
        if self.upper[j] - self.lower[j] <= 0.0 {
            return None;
        }
        let dj = self.d[j];
        match self.status[j] {
            Status::Basic => None,
            Status::AtLower if dj < -DUAL_TOL => Some(1.0),
            Status::AtUpper if dj > DUAL_TOL => Some(-1.0),
            Status::Zero if dj.abs() > DUAL_TOL => Some(if dj < 0.0 { 1.0 } else { -1.0 }),
            _ => None,
        }
    }

    fn run(&mut self) -> Outcome {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.cols {
                if let Some(dir) = self.eligible(j) {
                    if bland {
                        entering = Some((j, dir));
                        break;
                    }
                    let score = self.d[j].abs();
                    if score > best {
                        best = score;
                        entering = Some((j, dir));
                    }
                }
            }
            let Some((q, dir)) = entering else {
                return Outcome::Optimal;
            };
            self.iterations += 1;

            // Ratio test.
            let mut theta = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0f64;
            for i in 0..self.rows {
                let alpha = self.at(i, q);
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let bv = self.basis[i];
                let delta = -alpha * dir;
                let (limit, to_lower) = if delta < 0.0 {
                    if self.lower[bv] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.x[bv] - self.lower[bv]) / -delta).max(0.0), true)
                } else {
                    if self.upper[bv] == f64::INFINITY {
                        continue;
                    }
                    (((self.upper[bv] - self.x[bv]) / delta).max(0.0), false)
                };
                let better = if limit < theta - 1e-12 {
                    true
                } else if limit <= theta + 1e-12 {
                    match leave {
                        Some((li, _)) if bland => bv < self.basis[li],
                        Some(_) => alpha.abs() > leave_alpha,
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    theta = limit.min(theta);
                    leave = Some((i, to_lower));
                    leave_alpha = alpha.abs();
                }
            }
            if theta == f64::INFINITY {
                return Outcome::Unbounded;
            }
            if theta < 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            // Move along the edge.
            if theta != 0.0 {
                for i in 0..self.rows {
                    let alpha = self.at(i, q);
                    if alpha != 0.0 {
                        let bv = self.basis[i];
                        self.x[bv] -= alpha * dir * theta;
                    }
                }
                self.x[q] += dir * theta;
            }
            match leave {
                None => {
                    // Bound flip.
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.status[q] = Status::AtUpper;
                    } else {
                        self.x[q] = self.lower[q];
                        self.status[q] = Status::AtLower;
                    }
                }
                Some((r, to_lower)) => {
                    let out = self.basis[r];
                    if to_lower {
                        self.x[out] = self.lower[out];
                        self.status[out] = Status::AtLower;
                    } else {
                        self.x[out] = self.upper[out];
                        self.status[out] = Status::AtUpper;
                    }
                    self.pivot(r, q);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let p = self.at(r, q);
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            row.iter_mut().for_each(|v| *v /= p);
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + q];
            if f != 0.0 {
                let row = &mut self.t[i * cols..(i + 1) * cols];
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, &pr) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.d[q] = 0.0;
        }
        self.basis[r] = q;
        self.status[q] = Status::Basic;
    }
}

/// Solves `min c x` subject to the rows of `data` and `lower <= x <= upper`.
pub fn solve_lp(data: &LpData, lower: &[f64], upper: &[f64]) -> LpSolution {
    let n = data.num_vars;
    let m = data.num_rows();
    for j in 0..n {
        if lower[j] > upper[j] + PRIMAL_TOL {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective: f64::INFINITY,
                iterations: 0,
            };
        }
    }
    // Structural starting values.
    let mut x0 = vec![0.0; n];
    let mut st0 = vec![Status::Zero; n];
    for j in 0..n {
        if lower[j].is_finite() {
            x0[j] = lower[j];
            st0[j] = Status::AtLower;
        } else if upper[j].is_finite() {
            x0[j] = upper[j];
            st0[j] = Status::AtUpper;
        }
    }
    // Logical bounds and residuals decide which rows need artificials.
    let mut log_lo = vec![0.0; m];
    let mut log_hi = vec![0.0; m];
    let mut residual = vec![0.0; m];
    let mut needs_art = Vec::new();
    for i in 0..m {
        let (lo, hi) = match data.sense[i] {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        log_lo[i] = lo;
        log_hi[i] = hi;
        let ax: f64 = (0..n).map(|j| data.a[i * n + j] * x0[j]).sum();
        residual[i] = data.b[i] - ax;
        if residual[i] < lo - PRIMAL_TOL || residual[i] > hi + PRIMAL_TOL {
            needs_art.push(i);
        }
    }
    let k = needs_art.len();
    let cols = n + m + k;
    let mut a_full = vec![0.0; m * cols];
    for i in 0..m {
        a_full[i * cols..i * cols + n].copy_from_slice(&data.a[i * n..(i + 1) * n]);
        a_full[i * cols + n + i] = 1.0;
    }
    let mut lower_all = lower.to_vec();
    let mut upper_all = upper.to_vec();
    lower_all.extend_from_slice(&log_lo);
    upper_all.extend_from_slice(&log_hi);
    lower_all.extend(std::iter::repeat_n(0.0, k));
    upper_all.extend(std::iter::repeat_n(f64::INFINITY, k));

    let mut x = x0;
    x.extend(std::iter::repeat_n(0.0, m + k));
    let mut status = st0;
    status.extend(std::iter::repeat_n(Status::Basic, m));
    status.extend(std::iter::repeat_n(Status::Basic, k));
    let mut basis: Vec<usize> = (0..m).map(|i| n + i).collect();
    let mut init_col = basis.clone();
    let mut init_sign = vec![1.0; m];
    for (a, &i) in needs_art.iter().enumerate() {
        let col = n + m + a;
        let e = residual[i];
        // Park the logical on its nearest bound; the artificial absorbs the rest.
        let park = e.clamp(log_lo[i], log_hi[i]);
        let sign = if e - park >= 0.0 { 1.0 } else { -1.0 };
        a_full[i * cols + col] = sign;
        x[n + i] = park;
        status[n + i] = if park == log_lo[i] { Status::AtLower } else { Status::AtUpper };
        x[col] = (e - park).abs();
        basis[i] = col;
        init_col[i] = col;
        init_sign[i] = sign;
    }
    for i in 0..m {
        if !needs_art.contains(&i) {
            x[n + i] = residual[i];
        }
    }
    // Tableau = B^-1 A with B diagonal of +-1.
    let mut t = a_full.clone();
    for i in 0..m {
        if init_sign[i] < 0.0 {
            t[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v = -*v);
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        lower: lower_all,
        upper: upper_all,
        x,
        status,
        basis,
        d: Vec::new(),
        init_col,
        init_sign,
        a_full,
        b: data.b.clone(),
        iterations: 0,
        max_iterations: 50 * (m + cols) + 1000,
    };

    if k > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[n + m..].iter_mut().for_each(|c| *c = 1.0);
        tab.set_costs(&phase1);
        if let Outcome::IterationLimit = tab.run() {
            return finish(&tab, data, LpStatus::IterationLimit);
        }
        tab.refresh_basic();
        if tab.objective(&phase1) > PRIMAL_TOL {
            return finish(&tab, data, LpStatus::Infeasible);
        }
        for c in n + m..cols {
            tab.upper[c] = 0.0;
            if tab.status[c] != Status::Basic {
                tab.x[c] = 0.0;
                tab.status[c] = Status::AtLower;
            }
        }
    }
    let mut cost = data.cost.clone();
    cost.extend(std::iter::repeat_n(0.0, m + k));
    tab.set_costs(&cost);
    let outcome = tab.run();
    tab.refresh_basic();
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    finish(&tab, data, status)
}

fn finish(tab: &Tableau, data: &LpData, status: LpStatus) -> LpSolution {
    let n = data.num_vars;
    let x: Vec<f64> = tab.x[..n].to_vec();
    let objective = if status == LpStatus::Optimal {
        data.cost_constant + x.iter().zip(&data.cost).map(|(a, b)| a * b).sum::<f64>()
    } else if status == LpStatus::Infeasible {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    LpSolution { status, x, objective, iterations: tab.iterations }
}
