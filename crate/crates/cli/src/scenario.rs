//! Scenario files: parsing, defaults and conversion into library objects.

use serde::{Deserialize, Serialize};
use thermo_mdp::info::CoupledSystem;
use thermo_mdp::info_mdp::{CalibrationOptions, ParametricBelief, PolicyProblem, Solver, SolverOptions};
use thermo_mdp::kl_control::PassiveDynamics;
use thermo_mdp::mdp::{validate_mdp, ObjectiveSense, DEFAULT_PATH_CAP};
use thermo_mdp::thermo::EnergyModel;
use thermo_mdp::{ConditionalKernel, FiniteMdp, MarkovChain, StochasticMatrix};

use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1";
pub const MAX_PATHS_ENV: &str = "THERMO_MDP_MAX_PATHS";

type Table3 = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Cap on enumerated path-probability entries.
    #[serde(default = "default_max_paths")]
    pub max_paths: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passive: Option<PassiveBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxent: Option<MaxentBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermo: Option<ThermoBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<CoupledBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<InfoBlock>,
}

fn default_max_paths() -> u64 {
    DEFAULT_PATH_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Cost,
    Reward,
}

impl From<Sense> for ObjectiveSense {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Cost => ObjectiveSense::Cost,
            Sense::Reward => ObjectiveSense::Reward,
        }
    }
}

/// `transition[s][a][s′]` and the scalar table `cost[s][a][s′]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpBlock {
    pub transition: Table3,
    pub cost: Table3,
    pub horizon: usize,
    #[serde(default)]
    pub sense: Sense,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassiveBlock {
    pub kernel: Vec<Vec<f64>>,
    pub state_cost: Vec<f64>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxentBlock {
    /// Starting state the performance constraint applies to.
    #[serde(default)]
    pub state: usize,
    #[serde(default = "one")]
    pub time: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Finite control set costs; when present the program ignores the passive block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBlock {
    /// `table[x][π]`.
    pub table: Vec<Vec<f64>>,
    /// `π_1 … π_{N−1}`.
    pub protocol: Vec<usize>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainBlock {
    pub initial: Vec<f64>,
    pub kernels: Table3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainBlock>,
    /// Start law for the driven chain; the Gibbs law at `π_1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub sample_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledEnergy {
    /// `table[x][d]`.
    pub table: Vec<Vec<f64>>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledBlock {
    pub d_initial: Vec<f64>,
    /// `d_kernels[k−1][x_{k−1}][d_{k−1}][d_k]`; the first has one context.
    pub d_kernels: Vec<Table3>,
    /// Rows indexed by `d_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_initial: Option<Vec<Vec<f64>>>,
    /// Law of `x_1` independent of `d_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_start: Option<Vec<f64>>,
    /// `x_kernels[k−1][d_{k−1}][x_k][x_{k+1}]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_kernels: Option<Vec<Table3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<CoupledEnergy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllDeterministic {
    AllDeterministic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySet {
    All(AllDeterministic),
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Alternating,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub kind: SolverKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_divisions")]
    pub grid_divisions: usize,
    #[serde(default = "default_grid_points")]
    pub max_grid_points: u64,
}

fn default_sweeps() -> usize {
    10_000
}

fn default_divisions() -> usize {
    10
}

fn default_grid_points() -> u64 {
    2_000_000
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            kind: SolverKind::default(),
            tol: default_tol(),
            max_sweeps: default_sweeps(),
            grid_divisions: default_divisions(),
            max_grid_points: default_grid_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationBlock {
    #[serde(default = "default_beta_low")]
    pub beta_low: f64,
    #[serde(default = "default_beta_high")]
    pub beta_high: f64,
    #[serde(default = "default_calibration_tol")]
    pub tol: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_beta_low() -> f64 {
    1.0
}

fn default_beta_high() -> f64 {
    1e6
}

fn default_calibration_tol() -> f64 {
    1e-6
}

fn default_probes() -> usize {
    9
}

fn default_max_iter() -> usize {
    200
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        Self {
            beta_low: default_beta_low(),
            beta_high: default_beta_high(),
            tol: default_calibration_tol(),
            probes: default_probes(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub transition: Table3,
    pub cost: Table3,
    #[serde(default)]
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricBlock {
    pub models: Vec<ModelBlock>,
    pub prior: Vec<f64>,
    pub horizon: usize,
    pub initial_state: Vec<f64>,
    /// Stationary deterministic rule `actions[s]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
    /// `rules[k−1][s][a]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Table3>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub include_final_term: bool,
}

fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoBlock {
    pub policy_set: PolicySet,
    pub initial_state: Vec<f64>,
    /// Fixes the law of the first rule instead of optimizing it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_policy: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub include_final_term: bool,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub calibration: CalibrationBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametric: Option<ParametricBlock>,
}

/// Parses a scenario from JSON text; unknown fields are errors.
pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))?;
    if sc.schema_version != SCHEMA_VERSION {
        return Err(CliError::Scenario(format!(
            "unsupported schema_version {:?}, expected {:?}",
            sc.schema_version, SCHEMA_VERSION
        )));
    }
    Ok(sc)
}

fn missing(block: &str) -> CliError {
    CliError::Scenario(format!("scenario has no `{block}` block"))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Scenario(msg.into())
}

// Hand-written rows are renormalized when they are within the ingestion tolerance of one.
fn matrix(rows: &[Vec<f64>]) -> Result<StochasticMatrix, CliError> {
    Ok(StochasticMatrix::from_rows_lenient(rows.to_vec())?)
}

fn kernel(tables: &Table3) -> Result<ConditionalKernel, CliError> {
    Ok(ConditionalKernel::from_tables_lenient(tables.clone())?)
}

fn dist(v: &[f64]) -> Result<Vec<f64>, CliError> {
    Ok(matrix(&[v.to_vec()])?.row(0).to_vec())
}

impl Scenario {
    /// The enumeration cap, with the environment variable taking precedence.
    pub fn path_cap(&self) -> Result<u64, CliError> {
        match std::env::var(MAX_PATHS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("{MAX_PATHS_ENV}={v:?} is not a non-negative integer"))),
            Err(_) => Ok(self.max_paths),
        }
    }

    pub fn mdp(&self) -> Result<FiniteMdp, CliError> {
        let b = self.mdp.as_ref().ok_or_else(|| missing("mdp"))?;
        Ok(validate_mdp(
            b.transition.clone(),
            b.cost.clone(),
            b.horizon,
            b.sense.into(),
        )?)
    }

    pub fn terminal(&self) -> Option<&[f64]> {
        self.mdp.as_ref().and_then(|b| b.terminal.as_deref())
    }

    pub fn passive(&self) -> Result<PassiveDynamics, CliError> {
        let b = self.passive.as_ref().ok_or_else(|| missing("passive"))?;
        let kernel = matrix(&b.kernel)?;
        Ok(PassiveDynamics::new(
            kernel,
            b.state_cost.clone(),
            b.horizon,
            b.terminal.clone(),
        )?)
    }

    pub fn maxent_block(&self) -> Result<&MaxentBlock, CliError> {
        self.maxent.as_ref().ok_or_else(|| missing("maxent"))
    }

    pub fn energy_model(&self) -> Result<Option<EnergyModel>, CliError> {
        let b = self.thermo.as_ref().ok_or_else(|| missing("thermo"))?;
        b.energy
            .as_ref()
            .map(|e| EnergyModel::new(e.table.clone(), e.protocol.clone(), e.beta).map_err(CliError::from))
            .transpose()
    }

    /// The audited chain: explicit when given, otherwise relaxation under the energy protocol.
    pub fn thermo_chain(&self) -> Result<MarkovChain, CliError> {
        let b = self.thermo.as_ref().ok_or_else(|| missing("thermo"))?;
        if let Some(c) = &b.chain {
            if b.initial.is_some() {
                return Err(invalid("thermo.initial only applies without thermo.chain"));
            }
            let kernels = c.kernels.iter().map(|k| matrix(k)).collect::<Result<Vec<_>, _>>()?;
            return Ok(MarkovChain::new(dist(&c.initial)?, kernels)?);
        }
        let model = self
            .energy_model()?
            .ok_or_else(|| invalid("thermo block needs `chain`, `energy` or both"))?;
        let initial = match &b.initial {
            Some(d) => dist(d)?,
            None => model.gibbs_distribution(model.protocol_at(1)),
        };
        Ok(model.driven_chain(initial)?)
    }

    /// The coupled process and, for feedback scenarios, its energy model.
    pub fn coupled(&self) -> Result<(CoupledSystem, Option<EnergyModel>), CliError> {
        let b = self.coupled.as_ref().ok_or_else(|| missing("coupled"))?;
        let d_kernels = b.d_kernels.iter().map(kernel).collect::<Result<Vec<_>, _>>()?;
        let steps = d_kernels.len();
        let energy = b
            .energy
            .as_ref()
            .map(|e| EnergyModel::new(e.table.clone(), vec![0; steps], e.beta))
            .transpose()?;
        let Some(x_tables) = &b.x_kernels else {
            let em = energy
                .ok_or_else(|| invalid("coupled block needs `x_kernels` unless `energy` defines a feedback process"))?;
            if b.x_initial.is_some() || b.x_start.is_some() {
                return Err(invalid(
                    "a feedback process starts from the Gibbs law; drop x_initial/x_start",
                ));
            }
            let sys = CoupledSystem::feedback_process(&em, dist(&b.d_initial)?, d_kernels)?;
            return Ok((sys, Some(em)));
        };
        let x_kernels = x_tables.iter().map(kernel).collect::<Result<Vec<_>, _>>()?;
        let sys = match (&b.x_initial, &b.x_start) {
            (Some(rows), None) => CoupledSystem::new(dist(&b.d_initial)?, matrix(rows)?, d_kernels, x_kernels)?,
            (None, Some(start)) => {
                CoupledSystem::with_independent_start(dist(start)?, dist(&b.d_initial)?, d_kernels, x_kernels)?
            }
            _ => return Err(invalid("coupled block needs exactly one of `x_initial` and `x_start`")),
        };
        Ok((sys, energy))
    }

    pub fn info_block(&self) -> Result<&InfoBlock, CliError> {
        self.info.as_ref().ok_or_else(|| missing("info"))
    }

    pub fn policy_problem(&self) -> Result<PolicyProblem, CliError> {
        let b = self.info_block()?;
        let mdp = self.mdp()?;
        let policies = match &b.policy_set {
            PolicySet::All(_) => thermo_mdp::info_mdp::all_deterministic_policies(&mdp)?,
            PolicySet::Explicit(p) => p.clone(),
        };
        let problem = PolicyProblem::new(mdp, policies, dist(&b.initial_state)?)?;
        Ok(match &b.initial_policy {
            Some(d) => problem.with_initial_policy(dist(d)?)?,
            None => problem,
        })
    }

    pub fn solver_options(
        &self,
        kind: Option<SolverKind>,
        include_final_term: bool,
    ) -> Result<SolverOptions, CliError> {
        let b = &self.info_block()?.solver;
        Ok(SolverOptions {
            solver: match kind.unwrap_or(b.kind) {
                SolverKind::Alternating => Solver::Alternating,
                SolverKind::BruteForce => Solver::BruteForce,
            },
            include_final_term,
            tol: b.tol,
            max_sweeps: b.max_sweeps,
            grid_divisions: b.grid_divisions,
            max_grid_points: b.max_grid_points,
            path_cap: self.path_cap()?,
        })
    }

    pub fn calibration_options(&self) -> Result<CalibrationOptions, CliError> {
        let b = &self.info_block()?.calibration;
        Ok(CalibrationOptions {
            beta_low: b.beta_low,
            beta_high: b.beta_high,
            tol: b.tol,
            probes: b.probes,
            max_iter: b.max_iter,
            solver: self.solver_options(None, false)?,
        })
    }

    pub fn parametric(&self) -> Result<Option<(ParametricBelief, &ParametricBlock)>, CliError> {
        let Some(b) = self.info.as_ref().and_then(|i| i.parametric.as_ref()) else {
            return Ok(None);
        };
        let models = b
            .models
            .iter()
            .map(|m| validate_mdp(m.transition.clone(), m.cost.clone(), b.horizon, m.sense.into()))
            .collect::<Result<Vec<_>, _>>()?;
        let belief = match (&b.actions, &b.rules) {
            (Some(a), None) => ParametricBelief::stationary(models, dist(&b.prior)?, a, dist(&b.initial_state)?)?,
            (None, Some(r)) => {
                ParametricBelief::new(models, dist(&b.prior)?, kernel(r)?.to_tables(), dist(&b.initial_state)?)?
            }
            _ => return Err(invalid("info.parametric needs exactly one of `actions` and `rules`")),
        };
        Ok(Some((belief, b)))
    }

    /// Builds every block and checks that state counts agree across them.
    pub fn check(&self) -> Result<Vec<(&'static str, usize)>, CliError> {
        let mut sizes = Vec::new();
        if self.mdp.is_some() {
            sizes.push(("mdp", self.mdp()?.n_states()));
        }
        if self.passive.is_some() {
            sizes.push(("passive", self.passive()?.n_states()));
        }
        if let Some(m) = &self.maxent {
            if m.costs.is_none() {
                let p = self
                    .passive()
                    .map_err(|_| invalid("maxent without `costs` needs a passive block"))?;
                if m.state >= p.n_states() || m.time == 0 || m.time >= p.horizon() {
                    return Err(invalid("maxent.state/time out of range for the passive block"));
                }
            }
        }
        if self.thermo.is_some() {
            let chain = self.thermo_chain()?;
            if let Some(em) = self.energy_model()? {
                if em.n_states() != chain.n_states() || em.protocol().len() + 1 != chain.horizon() {
                    return Err(invalid("thermo.energy and thermo.chain disagree on states or horizon"));
                }
            }
            sizes.push(("thermo", chain.n_states()));
        }
        if self.coupled.is_some() {
            let (sys, em) = self.coupled()?;
            if let Some(em) = em {
                if em.n_states() != sys.n_x() || em.n_protocol_values() != sys.n_d() {
                    return Err(invalid("coupled.energy must be indexed [x][d]"));
                }
            }
            sizes.push(("coupled", sys.n_x()));
        }
        if self.info.is_some() {
            let problem = self.policy_problem()?;
            self.solver_options(None, false)?;
            if let Some(beta) = self.info_block()?.beta {
                if !(beta > 0.0) {
                    return Err(invalid("info.beta must be positive"));
                }
            }
            sizes.push(("info", problem.mdp().n_states()));
            if let Some((belief, _)) = self.parametric()? {
                sizes.push(("info.parametric", belief.models()[0].n_states()));
            }
        }
        if sizes.is_empty() && self.maxent.is_none() {
            return Err(invalid("scenario has no blocks"));
        }
        if let Some(&(first, n)) = sizes.first() {
            if let Some(&(other, m)) = sizes.iter().find(|(_, m)| *m != n) {
                return Err(invalid(format!("`{first}` has {n} states but `{other}` has {m}")));
            }
        }
        Ok(sizes)
    }
}
