use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AtlasConfig, MappingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: usize,
    /// Pixels per step for the reconstruction and alpha terms.
    pub batch_size: usize,
    /// Samples per step for each of the positional, rigidity and flow
    /// terms; `0` means `batch_size / 16`.
    pub aux_batch_size: usize,
    pub lr_mapping: f64,
    pub lr_atlas: f64,
    pub pos_phase_steps: usize,
    pub alpha_phase_steps: usize,
    pub lambda_pro: f64,
    pub lambda_rigid: f64,
    pub lambda_flow: f64,
    pub lambda_sparse: f64,
    /// Neighbour offset of the rigidity term, pixels.
    pub rigid_step: f64,
    pub weight_decay: f64,
    /// Compare raw UVs with pixel positions in the positional term instead
    /// of per-square normalized UVs.
    pub literal_pos_loss: bool,
    pub seed: u64,
    pub mapping: MappingConfig,
    pub atlas: AtlasConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            batch_size: 10_000,
            aux_batch_size: 0,
            lr_mapping: 1e-3,
            lr_atlas: 1e-2,
            pos_phase_steps: 1_000,
            alpha_phase_steps: 30_000,
            lambda_pro: 1.0,
            lambda_rigid: 1.0,
            lambda_flow: 1.0,
            lambda_sparse: 0.1,
            rigid_step: 1.0,
            weight_decay: 0.01,
            literal_pos_loss: false,
            seed: 0,
            mapping: MappingConfig::default(),
            atlas: AtlasConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule: 20k steps of 4096 pixels, phases scaled in
    /// proportion to the full schedule.
    pub fn scaled() -> Self {
        Self {
            total_steps: 20_000,
            batch_size: 4096,
            pos_phase_steps: 200,
            alpha_phase_steps: 6_000,
            ..Self::default()
        }
    }

    pub fn aux_batch(&self) -> usize {
        if self.aux_batch_size == 0 {
            (self.batch_size / 16).max(1)
        } else {
            self.aux_batch_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.total_steps == 0 || self.batch_size == 0 {
            return bad("steps and batch size must be positive");
        }
        if !(self.lr_mapping > 0.0 && self.lr_atlas > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.pos_phase_steps > self.alpha_phase_steps || self.alpha_phase_steps > self.total_steps {
            return bad("phases must satisfy pos_phase_steps <= alpha_phase_steps <= total_steps");
        }
        if self.rigid_step < 1.0 {
            return bad("rigid_step must be at least one pixel");
        }
        for (name, v) in [
            ("lambda_pro", self.lambda_pro),
            ("lambda_rigid", self.lambda_rigid),
            ("lambda_flow", self.lambda_flow),
            ("lambda_sparse", self.lambda_sparse),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        if self.mapping.layers < 2 || self.mapping.width == 0 {
            return bad("mapping network needs >= 2 layers of nonzero width");
        }
        self.atlas.grid.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
