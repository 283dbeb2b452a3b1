use std::path::Path;

use serde::Deserialize;

use crate::Failure;

/// Parameters accepted in a `--config` file. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub s0: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub family: Option<String>,
    pub dt: Option<f64>,
    pub paths: Option<usize>,
    pub calibration_paths: Option<usize>,
    pub norm_const: Option<f64>,
    pub estimator: Option<String>,
    pub eps: Option<f64>,
    pub r0: Option<f64>,
    pub horizon: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub s_grid: Option<Vec<f64>>,
    pub r0_grid: Option<Vec<f64>>,
    pub x_grid: Option<Vec<f64>>,
    pub y_grid: Option<Vec<f64>>,
    pub file: Option<String>,
    pub nu: Option<String>,
    pub consumption: Option<String>,
    pub bias_factor: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        // serde_json messages end with "at line L column C"
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}
