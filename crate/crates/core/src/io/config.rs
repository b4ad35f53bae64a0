//! Run configuration (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [costs]
//! overlap_threshold = 0.0
//! w_shape = 100.0
//!
//! [tuning]
//! grid_points = 9
//! ```
//!
//! Every section and key is optional; missing values take the defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::CostParams;
use crate::error::{Error, Result};
use crate::geometry::ShapeOptions;
use crate::hyperbolic::ProjectionParams;
use crate::optimizer::TuningParams;
use crate::pipeline::PipelineConfig;
use crate::tree::BalanceParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Echoed into outputs. The pipeline itself does not draw random numbers.
    pub seed: Option<u64>,
    pub costs: CostParams,
    pub tuning: TuningParams,
    pub projection: ProjectionParams,
    pub balance: BalanceParams,
    pub shape: Option<ShapeOptions>,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            costs: self.costs,
            tuning: self.tuning.clone(),
            projection: self.projection,
            balance: self.balance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "config".to_string(),
        };
        Error::Parse {
            location,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_run_config(&text)
}

pub fn run_config_to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("run config serializes")
}
