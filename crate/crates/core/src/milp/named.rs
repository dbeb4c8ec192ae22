//! Solution files keyed by variable name, as written by the command line
//! and the C bindings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bnb::{MilpSolution, SolveStatus};
use super::model::MilpModel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub nodes: usize,
    /// Nonzero variable values; everything absent is zero.
    pub values: BTreeMap<String, f64>,
}

impl NamedSolution {
    pub fn from_solution(model: &MilpModel, sol: &MilpSolution) -> Self {
        let values = model
            .variables
            .iter()
            .zip(&sol.values)
            .filter(|(_, v)| **v != 0.0)
            .map(|(var, v)| (var.name.clone(), *v))
            .collect();
        Self { status: sol.status.clone(), objective: sol.objective, nodes: sol.nodes, values }
    }

    pub fn into_solution(self, model: &MilpModel) -> Result<MilpSolution> {
        let mut values = vec![0.0; model.variables.len()];
        for (name, v) in self.values {
            let j = model
                .var_index(&name)
                .ok_or_else(|| Error::Input(format!("solution names unknown variable {name}")))?;
            values[j] = v;
        }
        Ok(MilpSolution { status: self.status, values, objective: self.objective, nodes: self.nodes })
    }
}
