//! Every tunable of the pipeline in one validated structure.

use std::path::Path;

use anyhow::{bail, Context};
use scenefit::geometry::{SdfOptions, SignMode};
use scenefit::interaction::HeuristicParams;
use scenefit::metrics::FilterThresholds;
use scenefit::placement::PlacementConfig;
use scenefit::weighting::WeightingParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds every random choice; recorded in every output.
    pub seed: u64,
    /// SDF lattice spacing in metres.
    pub cell_size: f64,
    /// Margin added around the scene bounds before building the SDF.
    pub padding: f64,
    pub sign: SignMode,
    pub heuristic: HeuristicParams,
    pub weighting: WeightingParams,
    pub placement: PlacementConfig,
    pub filter: FilterThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cell_size: 0.05,
            padding: 0.5,
            sign: SignMode::Auto,
            heuristic: HeuristicParams::default(),
            weighting: WeightingParams::default(),
            placement: PlacementConfig::default(),
            filter: FilterThresholds::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`, then validates.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .with_context(|| format!("config {}", path.display()))?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            bail!("cell_size must be positive, got {}", self.cell_size);
        }
        if !(self.padding >= self.cell_size && self.padding.is_finite()) {
            bail!("padding ({}) must be at least one cell ({})", self.padding, self.cell_size);
        }
        self.heuristic.validate()?;
        let w = &self.weighting;
        if ![w.lambda_g, w.lambda_b, w.alpha, w.beta].iter().all(|x| *x >= 0.0 && x.is_finite()) {
            bail!("weighting parameters must be non-negative, got {w:?}");
        }
        self.placement.validate()?;
        if self.placement.lbfgs.max_steps == 0 {
            bail!("placement.lbfgs.max_steps must be positive");
        }
        self.filter.validate()?;
        Ok(())
    }

    pub fn sdf_options(&self) -> SdfOptions {
        SdfOptions {
            cell_size: self.cell_size,
            padding: self.padding,
            sign: self.sign,
            ..SdfOptions::default()
        }
    }
}
