//! Run configuration: a TOML file merged with command-line flags.
//!
//! Every section and key is optional; flags override file values and
//! documented defaults fill the rest. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use mdpif::dp::{BoundaryMode, SolveConfig, DEFAULT_HORIZON};
use mdpif::index::DEFAULT_NU_STEP;
use mdpif::model::{CategoryParams, ModelParams};
use mdpif::policy::{PolicyKind, SlotAllocation};
use mdpif::scenarios::Scenario;
use mdpif::sim::RewardMode;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "ModelSection::is_empty")]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "SolverSection::is_empty")]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "SimulationSection::is_empty")]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "OutputSection::is_empty")]
    pub output: OutputSection,
}

/// Category parameters, either shared by `k` categories or listed one by one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub scenario: Option<Scenario>,
    pub gamma: Option<f64>,
    pub xi: Option<f64>,
    pub alpha0: Option<f64>,
    pub beta0: Option<f64>,
    pub cost: Option<f64>,
    pub max_forward: Option<u32>,
    pub k: Option<Vec<usize>>,
    pub budget: Option<bool>,
    pub categories: Option<Vec<CategoryParams>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub horizon: Option<u32>,
    pub boundary_mode: Option<BoundaryMode>,
    pub nu_step: Option<f64>,
    pub refine_tol: Option<f64>,
    pub refine_depth: Option<usize>,
    pub ub_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub users: Option<u64>,
    pub seed: Option<u64>,
    pub policies: Option<Vec<PolicyKind>>,
    pub reward_mode: Option<RewardMode>,
    pub allocation: Option<SlotAllocation>,
    pub correlated_queues: Option<bool>,
    pub table_margin: Option<u32>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl ModelSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl SolverSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl SimulationSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

impl OutputSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// Fills `None` fields of `self` from `other`.
trait Fill {
    fn fill_from(&mut self, other: Self);
}

macro_rules! impl_fill {
    ($t:ty { $($f:ident),* }) => {
        impl Fill for $t {
            fn fill_from(&mut self, other: Self) {
                $( if self.$f.is_none() { self.$f = other.$f; } )*
            }
        }
    };
}

impl_fill!(ModelSection { scenario, gamma, xi, alpha0, beta0, cost, max_forward, k, budget, categories });
impl_fill!(SolverSection { horizon, boundary_mode, nu_step, refine_tol, refine_depth, ub_tol });
impl_fill!(SimulationSection {
    users, seed, policies, reward_mode, allocation, correlated_queues, table_margin, threads
});
impl_fill!(OutputSection { dir });

pub const DEFAULT_USERS: u64 = 50_000;
pub const DEFAULT_SEED: u64 = 20_240_917;
pub const DEFAULT_TABLE_MARGIN: u32 = 200;
pub const DEFAULT_MAX_FORWARD: u32 = 5;
pub const DEFAULT_UB_TOL: f64 = mdpif::lagrangian::DEFAULT_TOL;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Flag values win; the file fills what flags leave unset.
    pub fn merged(mut flags: RunConfig, file: Option<RunConfig>) -> RunConfig {
        if let Some(file) = file {
            flags.model.fill_from(file.model);
            flags.solver.fill_from(file.solver);
            flags.simulation.fill_from(file.simulation);
            flags.output.fill_from(file.output);
        }
        flags
    }

    /// Writes every default into the configuration so the recorded run
    /// metadata reproduces the run on its own.
    pub fn with_defaults(mut self) -> RunConfig {
        if let Some(s) = self.model.scenario {
            let (gamma, xi, a, b) = s.parameters();
            let preset = ModelSection {
                scenario: Some(s),
                gamma: Some(gamma),
                xi: Some(xi),
                alpha0: Some(a),
                beta0: Some(b),
                cost: Some(Scenario::COST),
                max_forward: Some(Scenario::MAX_FORWARD),
                k: Some(mdpif::scenarios::K_SWEEP.to_vec()),
                budget: Some(true),
                categories: None,
            };
            self.model.fill_from(preset);
        }
        let m = &mut self.model;
        m.max_forward.get_or_insert(DEFAULT_MAX_FORWARD);
        if m.categories.is_none() {
            m.alpha0.get_or_insert(1.0);
            m.beta0.get_or_insert(1.0);
        }
        let s = &mut self.solver;
        s.horizon.get_or_insert(DEFAULT_HORIZON);
        s.boundary_mode.get_or_insert(BoundaryMode::Safe);
        s.nu_step.get_or_insert(DEFAULT_NU_STEP);
        s.ub_tol.get_or_insert(DEFAULT_UB_TOL);
        let sim = &mut self.simulation;
        sim.users.get_or_insert(DEFAULT_USERS);
        sim.seed.get_or_insert(DEFAULT_SEED);
        sim.policies.get_or_insert_with(|| PolicyKind::ALL.to_vec());
        sim.reward_mode.get_or_insert(RewardMode::Net);
        sim.allocation.get_or_insert(SlotAllocation::Marginal);
        sim.correlated_queues.get_or_insert(false);
        sim.table_margin.get_or_insert(DEFAULT_TABLE_MARGIN);
        self.output.dir.get_or_insert_with(|| PathBuf::from("."));
        self
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig::new(
            self.solver.horizon.unwrap_or(DEFAULT_HORIZON),
            self.solver.boundary_mode.unwrap_or_default(),
        )
    }

    pub fn nu_step(&self) -> f64 {
        self.solver.nu_step.unwrap_or(DEFAULT_NU_STEP)
    }

    pub fn max_forward(&self) -> u32 {
        self.model.max_forward.unwrap_or(DEFAULT_MAX_FORWARD)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// The single category of `solve` and `index`.
    pub fn single_category(&self) -> Result<CategoryParams, CliError> {
        if let Some(cats) = &self.model.categories {
            return match cats.as_slice() {
                [c] => Ok(*c),
                _ => Err(CliError::Config(format!(
                    "this command takes one category, the configuration lists {}",
                    cats.len()
                ))),
            };
        }
        self.shared_category()
    }

    fn shared_category(&self) -> Result<CategoryParams, CliError> {
        let m = &self.model;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("missing model parameter '{name}'")))
        };
        let c = CategoryParams {
            gamma: need(m.gamma, "gamma")?,
            xi: need(m.xi, "xi")?,
            alpha0: m.alpha0.unwrap_or(1.0),
            beta0: m.beta0.unwrap_or(1.0),
        };
        c.validate()?;
        Ok(c)
    }

    /// The category counts to run: the explicit list's length, or the `k`
    /// list for shared parameters (default: a single category).
    pub fn k_values(&self) -> Result<Vec<usize>, CliError> {
        match (&self.model.categories, &self.model.k) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "give either an explicit category list or 'k', not both".into(),
            )),
            (Some(c), None) => Ok(vec![c.len()]),
            (None, Some(k)) if k.is_empty() || k.contains(&0) => {
                Err(CliError::Config("'k' must list positive category counts".into()))
            }
            (None, Some(k)) => Ok(k.clone()),
            (None, None) => Ok(vec![1]),
        }
    }

    /// The full model with `k` categories.
    pub fn model_params(&self, k: usize) -> Result<ModelParams, CliError> {
        let categories = match &self.model.categories {
            Some(c) => c.clone(),
            None => vec![self.shared_category()?; k],
        };
        let model = ModelParams {
            categories,
            cost: self.model.cost,
            max_forward: self.max_forward(),
            budget: self.model.budget.unwrap_or(true),
        };
        model.validate()?;
        model.common_gamma()?;
        Ok(model)
    }

    /// Checks everything the command will need before it starts computing.
    pub fn validate_solver(&self) -> Result<(), CliError> {
        self.solve_config().validate(self.max_forward())?;
        mdpif::index::NuGrid::new(self.nu_step())?;
        for (name, v) in [("refine_tol", self.solver.refine_tol), ("ub_tol", self.solver.ub_tol)] {
            if let Some(t) = v {
                if !(t > 0.0 && t < 1.0) {
                    return Err(CliError::Config(format!("{name} must lie in (0, 1), got {t}")));
                }
            }
        }
        if let Some(0) = self.simulation.threads {
            return Err(CliError::Config("threads must be positive".into()));
        }
        Ok(())
    }
}
