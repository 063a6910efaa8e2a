//! Best-state records that only accept strictly lower energies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WgsError};
use crate::models::Model;
use crate::varstate::ParameterVector;

/// One attempted update of a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub energy: f64,
    pub accepted: bool,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: Model,
    pub energy: f64,
    pub x: ParameterVector<f64>,
    pub evals: usize,
    pub provenance: String,
    #[serde(default)]
    pub observables: BTreeMap<String, f64>,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
}

/// A proposed replacement for a record.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub energy: f64,
    pub x: ParameterVector<f64>,
    pub evals: usize,
    pub provenance: String,
}

impl RunRecord {
    pub fn new(model: Model, first: Candidate) -> Self {
        RunRecord {
            model,
            energy: first.energy,
            history: vec![HistoryEntry { energy: first.energy, accepted: true, provenance: first.provenance.clone() }],
            x: first.x,
            evals: first.evals,
            provenance: first.provenance,
            observables: BTreeMap::new(),
        }
    }

    /// Energies of accepted updates, in order.
    pub fn accepted_energies(&self) -> Vec<f64> {
        self.history.iter().filter(|h| h.accepted).map(|h| h.energy).collect()
    }
}

/// Replaces the record iff the candidate energy is strictly lower. The
/// attempt is logged either way; evaluations are accumulated. Returns whether
/// the candidate was accepted.
pub fn registry_update(record: &mut RunRecord, model: &Model, candidate: Candidate) -> Result<bool> {
    if model != &record.model {
        return Err(WgsError::InvalidArgument(format!(
            "candidate for {model:?} offered to record for {:?}",
            record.model
        )));
    }
    let accept = candidate.energy.is_finite() && candidate.energy < record.energy;
    record.evals += candidate.evals;
    record.history.push(HistoryEntry { energy: candidate.energy, accepted: accept, provenance: candidate.provenance.clone() });
    if accept {
        record.energy = candidate.energy;
        record.x = candidate.x;
        record.provenance = candidate.provenance;
        record.observables.clear();
    }
    debug_assert!(record.accepted_energies().windows(2).all(|w| w[1] < w[0]));
    Ok(accept)
}
