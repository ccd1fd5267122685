//! Analysis configuration file (JSON). Every field is optional; command-line
//! flags override it.
//!
//! ```json
//! {
//!   "model": "models/mnist",
//!   "solver": "internal",
//!   "symbolic": {"min": 0.0, "max": 255.0},
//!   "budget": {"max_paths": 10000, "max_solver_calls": 100000, "wall_timeout_secs": 120},
//!   "solver_timeout_secs": 10,
//!   "output_dir": "out",
//!   "log": "info"
//! }
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::read_text;
use crate::solver::SolverOptions;
use crate::symexec::ExplorationBudget;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    /// Decide queries with the built-in exact solver.
    #[default]
    Internal,
    /// Write the queries as SMT-LIB scripts for an external solver.
    SmtlibExport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolicDefaults {
    pub min: f64,
    pub max: f64,
}

impl Default for SymbolicDefaults {
    fn default() -> Self {
        SymbolicDefaults { min: 0.0, max: 255.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub max_paths: usize,
    pub max_solver_calls: u64,
    pub wall_timeout_secs: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = ExplorationBudget::default();
        BudgetConfig {
            max_paths: b.max_paths,
            max_solver_calls: b.max_solver_calls,
            wall_timeout_secs: b.wall_timeout.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub model: Option<PathBuf>,
    pub solver: SolverChoice,
    pub symbolic: SymbolicDefaults,
    pub budget: BudgetConfig,
    pub solver_timeout_secs: f64,
    pub output_dir: Option<PathBuf>,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub log: Option<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            model: None,
            solver: SolverChoice::Internal,
            symbolic: SymbolicDefaults::default(),
            budget: BudgetConfig::default(),
            solver_timeout_secs: SolverOptions::default().timeout.as_secs_f64(),
            output_dir: None,
            log: None,
        }
    }
}

const LOG_LEVELS: [&str; 6] = ["off", "error", "warn", "info", "debug", "trace"];

impl AnalysisConfig {
    /// Reads and validates a config file. Relative `model` and `output_dir`
    /// paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg: AnalysisConfig =
            serde_json::from_str(&text).map_err(|e| Error::MalformedJson(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.model, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let SymbolicDefaults { min, max } = self.symbolic;
        if !min.is_finite() || !max.is_finite() || min > max {
            return Err(Error::InvalidArgument(format!(
                "symbolic bounds [{min}, {max}] need min <= max"
            )));
        }
        if !(self.solver_timeout_secs > 0.0 && self.solver_timeout_secs.is_finite()) {
            return Err(Error::InvalidArgument("solver_timeout_secs must be positive".into()));
        }
        if !(self.budget.wall_timeout_secs > 0.0 && self.budget.wall_timeout_secs.is_finite()) {
            return Err(Error::InvalidArgument(
                "budget.wall_timeout_secs must be positive".into(),
            ));
        }
        if let Some(l) = &self.log {
            if !LOG_LEVELS.contains(&l.to_ascii_lowercase().as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "log level {l:?} is not one of {LOG_LEVELS:?}"
                )));
            }
        }
        self.exploration_budget().validate()
    }

    pub fn exploration_budget(&self) -> ExplorationBudget {
        ExplorationBudget {
            max_paths: self.budget.max_paths,
            max_solver_calls: self.budget.max_solver_calls,
            wall_timeout: Duration::from_secs_f64(self.budget.wall_timeout_secs.max(0.0)),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            timeout: Duration::from_secs_f64(self.solver_timeout_secs.max(0.0)),
            ..SolverOptions::default()
        }
    }
}
