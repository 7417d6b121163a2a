//! TOML scenario files.
//!
//! Every key is optional except where a section itself is given; missing
//! keys take the library defaults. Unknown keys are rejected.

use std::path::Path;

use cscp_core::placement::PenaltyMode;
use cscp_core::{Method, Scenario, UkfParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: &str = "1";

/// Which per-iteration field matrices to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmitFields {
    #[default]
    None,
    Terminal,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceSection {
    pub half_extent: f64,
    pub grid_side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    pub per_side: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    pub support_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub diffusivity: f64,
    pub process_std: f64,
    pub dt: f64,
    pub order: usize,
    pub theta_min: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    pub n_sensors: usize,
    pub measurement_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_config: Option<Vec<usize>>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub penalty_mode: PenaltyMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSection {
    pub name: Method,
    pub exhaustive_budget: u64,
    pub ukf_alpha: f64,
    pub ukf_beta: f64,
    pub ukf_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationSection {
    pub epsilon: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<usize>,
    pub cost_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub emit_fields: EmitFields,
}

/// On-disk form of a [`Scenario`] plus output options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: String,
    pub workspace: WorkspaceSection,
    pub basis: BasisSection,
    pub dynamics: DynamicsSection,
    pub sensing: SensingSection,
    pub method: MethodSection,
    pub termination: TerminationSection,
    pub planning: PlanningSection,
    pub estimator: EstimatorSection,
    pub output: OutputSection,
}

macro_rules! section_default {
    ($t:ty) => {
        impl Default for $t {
            fn default() -> Self {
                ScenarioFile::from_scenario(&Scenario::default(), EmitFields::None).into_section()
            }
        }
    };
}

trait IntoSection<T> {
    fn into_section(self) -> T;
}

macro_rules! section_of {
    ($t:ty, $field:ident) => {
        impl IntoSection<$t> for ScenarioFile {
            fn into_section(self) -> $t {
                self.$field
            }
        }
        section_default!($t);
    };
}

section_of!(WorkspaceSection, workspace);
section_of!(BasisSection, basis);
section_of!(DynamicsSection, dynamics);
section_of!(SensingSection, sensing);
section_of!(MethodSection, method);
section_of!(TerminationSection, termination);
section_of!(PlanningSection, planning);
section_of!(EstimatorSection, estimator);

impl Default for ScenarioFile {
    fn default() -> Self {
        Self::from_scenario(&Scenario::default(), EmitFields::None)
    }
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario, emit_fields: EmitFields) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            workspace: WorkspaceSection {
                half_extent: s.half_extent,
                grid_side: s.grid_side,
            },
            basis: BasisSection {
                per_side: s.basis_per_side,
                width: s.basis_width,
                support_threshold: s.support_threshold,
            },
            dynamics: DynamicsSection {
                diffusivity: s.diffusivity,
                process_std: s.process_std,
                dt: s.dt,
                order: s.order,
                theta_min: s.theta_range.0,
                theta_max: s.theta_range.1,
            },
            sensing: SensingSection {
                n_sensors: s.n_sensors,
                measurement_variance: s.measurement_variance,
                initial_config: s.initial_config.clone(),
                alpha1: s.alpha1,
                alpha2: s.alpha2,
                penalty_mode: s.penalty_mode,
            },
            method: MethodSection {
                name: s.method,
                exhaustive_budget: s.exhaustive_budget.min(u64::MAX as u128) as u64,
                ukf_alpha: s.ukf.alpha,
                ukf_beta: s.ukf.beta,
                ukf_kappa: s.ukf.kappa,
            },
            termination: TerminationSection {
                epsilon: s.epsilon,
                max_iterations: s.max_iterations,
            },
            planning: PlanningSection {
                start: s.start,
                goal: s.goal,
                horizon_cap: s.horizon_cap,
                cost_floor: s.cost_floor,
            },
            estimator: EstimatorSection { chi: s.chi },
            output: OutputSection { emit_fields },
        }
    }

    /// Converts to a validated [`Scenario`].
    pub fn to_scenario(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema {
                found: self.schema_version.clone(),
                expected: SCHEMA_VERSION,
            });
        }
        let scenario = Scenario {
            half_extent: self.workspace.half_extent,
            grid_side: self.workspace.grid_side,
            basis_per_side: self.basis.per_side,
            basis_width: self.basis.width,
            support_threshold: self.basis.support_threshold,
            diffusivity: self.dynamics.diffusivity,
            process_std: self.dynamics.process_std,
            dt: self.dynamics.dt,
            order: self.dynamics.order,
            theta_range: (self.dynamics.theta_min, self.dynamics.theta_max),
            n_sensors: self.sensing.n_sensors,
            measurement_variance: self.sensing.measurement_variance,
            epsilon: self.termination.epsilon,
            max_iterations: self.termination.max_iterations,
            method: self.method.name,
            initial_config: self.sensing.initial_config.clone(),
            alpha1: self.sensing.alpha1,
            alpha2: self.sensing.alpha2,
            penalty_mode: self.sensing.penalty_mode,
            chi: self.estimator.chi,
            horizon_cap: self.planning.horizon_cap,
            cost_floor: self.planning.cost_floor,
            start: self.planning.start,
            goal: self.planning.goal,
            ukf: UkfParams {
                alpha: self.method.ukf_alpha,
                beta: self.method.ukf_beta,
                kappa: self.method.ukf_kappa,
            },
            exhaustive_budget: self.method.exhaustive_budget as u128,
            record_objective_map: self.output.emit_fields != EmitFields::None,
        };
        scenario.build()?;
        Ok(scenario)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }
}

/// Reads, defaults and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<(Scenario, EmitFields)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file = ScenarioFile::parse(&text, path)?;
    Ok((file.to_scenario()?, file.output.emit_fields))
}
