//! Random restarts with stepwise growth of the superposition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{local_minimize, LocalResult, LocalSearchConfig, Objective, StopReason};
use super::registry::{registry_update, Candidate, RunRecord};
use crate::error::{Result, WgsError};
use crate::gradients::energy_and_gradient;
use crate::linalg::CMatrix;
use crate::models::Model;
use crate::varstate::{extend_superposition, random_init, Ansatz, InitRanges, ParameterVector};

/// Energy of a model on a fixed ansatz, as a function of the flat parameters.
pub struct EnergyObjective {
    ansatz: Ansatz,
    hams: Vec<CMatrix<f64>>,
}

impl EnergyObjective {
    pub fn new(ansatz: &Ansatz, model: &Model) -> Result<Self> {
        let hams = model.bond_hamiltonians(ansatz.geometry(), ansatz.levels())?;
        Ok(EnergyObjective { ansatz: ansatz.clone(), hams })
    }

    pub fn ansatz(&self) -> &Ansatz {
        &self.ansatz
    }
}

impl Objective<f64> for EnergyObjective {
    fn dim(&self) -> usize {
        self.ansatz.layout().len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        energy_and_gradient(&self.ansatz, &self.hams, x)
    }
}

/// Local search on `model` starting from `x0`, whose header fixes the branch count.
pub fn minimize_from(base: &Ansatz, model: &Model, x0: &ParameterVector<f64>, cfg: &LocalSearchConfig) -> Result<(Ansatz, LocalResult<f64>)> {
    let ansatz = base.with_branches(x0.header.branches)?;
    x0.check(&ansatz)?;
    let obj = EnergyObjective::new(&ansatz, model)?;
    let r = local_minimize(&obj, &x0.values, cfg)?;
    Ok((ansatz, r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultistartConfig {
    pub trials: usize,
    pub trial_search: LocalSearchConfig,
    pub main_search: LocalSearchConfig,
    pub max_branches: usize,
    /// Scale of the new branch coefficient when the superposition grows.
    pub alpha_scale: f64,
    pub init: InitRanges,
    pub seed: u64,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        MultistartConfig {
            trials: 15,
            trial_search: LocalSearchConfig::default().with_max_evals(300),
            main_search: LocalSearchConfig::default().with_max_evals(3000),
            max_branches: 3,
            alpha_scale: 0.1,
            init: InitRanges::default(),
            seed: 0,
        }
    }
}

impl MultistartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.max_branches == 0 {
            return Err(WgsError::InvalidArgument("trials and max_branches must be positive".into()));
        }
        if !(self.alpha_scale >= 0.0) {
            return Err(WgsError::InvalidArgument("alpha_scale must be non-negative".into()));
        }
        self.trial_search.validate()?;
        self.main_search.validate()
    }
}

/// Mixes a base seed with stream indices into an independent seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Summary of one multistart level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub branches: usize,
    /// Final trial energies; `None` where the trial could not start.
    pub trial_energies: Vec<Option<f64>>,
    pub best_trial: usize,
    pub main_energy: f64,
    pub main_stop: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartOutcome {
    pub record: RunRecord,
    pub levels: Vec<LevelSummary>,
}

/// For `m = 1..=max_branches`: run short trials (random starts at `m = 1`,
/// random extensions of the current best afterwards), continue the best
/// trial with the main budget, and offer every result to the record.
/// `base` supplies geometry, phase sharing, levels and site classes; its
/// branch count is ignored.
pub fn multistart(base: &Ansatz, model: &Model, cfg: &MultistartConfig) -> Result<MultistartOutcome> {
    cfg.validate()?;
    model.check_levels(base.levels())?;
    let one = base.with_branches(1)?;
    let mut record: Option<RunRecord> = None;
    let mut levels = Vec::new();
    for m in 1..=cfg.max_branches {
        let ansatz = one.with_branches(m)?;
        let obj = EnergyObjective::new(&ansatz, model)?;
        let starts: Vec<(String, ParameterVector<f64>)> = (0..cfg.trials)
            .map(|k| {
                let seed = derive_seed(cfg.seed, m as u64, k as u64);
                let tag = format!("seed={} m={m} trial={k}", cfg.seed);
                match &record {
                    None => Ok((tag, random_init(&ansatz, seed, &cfg.init))),
                    Some(r) => {
                        let prev = one.with_branches(r.x.header.branches)?;
                        let mut x = r.x.clone();
                        let mut a = prev;
                        while a.branches() < m {
                            let (a2, x2) = extend_superposition(&a, &x, derive_seed(seed, a.branches() as u64, 0), cfg.alpha_scale, &cfg.init)?;
                            a = a2;
                            x = x2;
                        }
                        Ok((tag, x))
                    }
                }
            })
            .collect::<Result<_>>()?;
        let trials: Vec<Option<LocalResult<f64>>> = starts
            .par_iter()
            .map(|(_, x0)| local_minimize(&obj, &x0.values, &cfg.trial_search).ok())
            .collect();
        let mut best: Option<usize> = None;
        for (k, t) in trials.iter().enumerate() {
            if let Some(t) = t {
                if best.is_none_or(|b| t.energy < trials[b].as_ref().map_or(f64::INFINITY, |r| r.energy)) {
                    best = Some(k);
                }
            }
        }
        let Some(best) = best else {
            if record.is_some() {
                break;
            }
            return Err(WgsError::Numerical("no multistart trial could be evaluated".into()));
        };
        for (k, t) in trials.iter().enumerate() {
            if let Some(t) = t {
                let c = Candidate {
                    energy: t.energy,
                    x: ParameterVector { header: ansatz.header(), values: t.x.clone() },
                    evals: t.evals,
                    provenance: starts[k].0.clone(),
                };
                match record.as_mut() {
                    None => record = Some(RunRecord::new(*model, c)),
                    Some(r) => {
                        registry_update(r, model, c)?;
                    }
                }
            }
        }
        let bt = trials[best].as_ref().expect("best trial exists");
        let main = local_minimize(&obj, &bt.x, &cfg.main_search)?;
        let rec = record.as_mut().expect("record exists after trials");
        registry_update(
            rec,
            model,
            Candidate {
                energy: main.energy,
                x: ParameterVector { header: ansatz.header(), values: main.x.clone() },
                evals: main.evals,
                provenance: format!("{} main", starts[best].0),
            },
        )?;
        levels.push(LevelSummary {
            branches: m,
            trial_energies: trials.iter().map(|t| t.as_ref().map(|t| t.energy)).collect(),
            best_trial: best,
            main_energy: main.energy,
            main_stop: main.stop,
        });
    }
    let record = record.expect("at least one level ran");
    Ok(MultistartOutcome { record, levels })
}
