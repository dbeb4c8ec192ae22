use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Routing problem for a small fleet with fixed depots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    pub num_locations: usize,
    /// Depot of each truck; the fleet size is `depots.len()`.
    pub depots: Vec<usize>,
    /// Travel seconds `travel_s[i][j]`.
    pub travel_s: Vec<Vec<u64>>,
    /// Volume to move from `i` to `j`.
    pub demand: Vec<Vec<u64>>,
    pub capacity: u64,
    /// Per-truck driving budget in seconds.
    pub time_limits_s: Vec<u64>,
    #[serde(default = "default_w_time")]
    pub w_time: f64,
    #[serde(default = "default_w_unserved")]
    pub w_unserved: f64,
}

fn default_w_time() -> f64 {
    0.5
}

fn default_w_unserved() -> f64 {
    0.04
}

impl MilpInstance {
    pub fn num_trucks(&self) -> usize {
        self.depots.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_locations;
        let square = |rows: &Vec<Vec<u64>>| rows.len() == m && rows.iter().all(|r| r.len() == m);
        if !square(&self.travel_s) || !square(&self.demand) {
            return Err(Error::Input(format!("travel and demand matrices must be {m}x{m}")));
        }
        for i in 0..m {
            if self.travel_s[i][i] != 0 || self.demand[i][i] != 0 {
                return Err(Error::Input(format!("diagonal entry {i} must be zero")));
            }
        }
        if self.capacity == 0 {
            return Err(Error::Input("capacity must be positive".into()));
        }
        if self.time_limits_s.len() != self.depots.len() {
            return Err(Error::Input("one time limit per truck required".into()));
        }
        if self.time_limits_s.iter().any(|&t| t == 0) {
            return Err(Error::Input("time limits must be positive".into()));
        }
        if self.depots.iter().any(|&d| d >= m) {
            return Err(Error::Input("depot outside the location set".into()));
        }
        if !(self.w_time > 0.0 && self.w_unserved > 0.0) {
            return Err(Error::Input("objective weights must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn total_demand(&self) -> u64 {
        self.demand.iter().flatten().sum()
    }
}

/// Column positions of the model's variable families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarLayout {
    pub m: usize,
    pub n: usize,
}

impl VarLayout {
    pub fn of(inst: &MilpInstance) -> Self {
        Self { m: inst.num_locations, n: inst.num_trucks() }
    }

    pub fn x(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.m + i) * self.m + j
    }

    pub fn r(&self, i: usize, j: usize, k: usize) -> usize {
        self.n * self.m * self.m + self.x(i, j, k)
    }

    pub fn u(&self, k: usize) -> usize {
        2 * self.n * self.m * self.m + k
    }

    pub fn s(&self, i: usize, k: usize) -> usize {
        2 * self.n * self.m * self.m + self.n + k * self.m + i
    }

    pub fn v(&self, i: usize, k: usize) -> usize {
        2 * self.n * self.m * self.m + self.n + self.n * self.m + k * self.m + i
    }

    pub fn len(&self) -> usize {
        2 * self.n * self.m * self.m + self.n + 2 * self.n * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
