use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::encoders::EncoderConfig;
use crate::flow::FlowConfig;
use crate::metrics::{DEFAULT_ROI_FLOOR_MARGIN, DEFAULT_ROI_RADIUS};

/// Input modality set of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Robot,
    ImageRobot,
    /// Clouds sampled from the ground-truth surface, `dense_points` each.
    PcDense,
    /// Clouds sampled from the ground-truth surface, `sparse_points` each.
    PcSparse,
    /// Simulated single-view sensor clouds.
    PcSensor,
    PcSensorRobot,
}

impl Modality {
    pub const ALL: [Modality; 7] = [
        Modality::Image,
        Modality::Robot,
        Modality::ImageRobot,
        Modality::PcDense,
        Modality::PcSparse,
        Modality::PcSensor,
        Modality::PcSensorRobot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Robot => "robot",
            Modality::ImageRobot => "image_robot",
            Modality::PcDense => "pc_dense",
            Modality::PcSparse => "pc_sparse",
            Modality::PcSensor => "pc_sensor",
            Modality::PcSensorRobot => "pc_sensor_robot",
        }
    }

    pub fn uses_points(self) -> bool {
        matches!(self, Modality::PcDense | Modality::PcSparse | Modality::PcSensor | Modality::PcSensorRobot)
    }

    pub fn uses_image(self) -> bool {
        matches!(self, Modality::Image | Modality::ImageRobot)
    }

    pub fn uses_robot(self) -> bool {
        matches!(self, Modality::Robot | Modality::ImageRobot | Modality::PcSensorRobot)
    }

    /// Two input streams are combined with cross-attention.
    pub fn is_cross(self) -> bool {
        self.uses_robot() && (self.uses_points() || self.uses_image())
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| PipelineError::Config(format!("unknown modality {s:?}")))
    }
}

/// Architecture and input shaping; stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub modality: Modality,
    pub history: usize,
    pub dense_points: usize,
    pub sparse_points: usize,
    pub encoder: EncoderConfig,
    pub flow: FlowConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            modality: Modality::PcDense,
            history: crate::encoders::HISTORY_LEN,
            dense_points: 5000,
            sparse_points: 100,
            encoder: EncoderConfig::default(),
            flow: FlowConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.history == 0 {
            return bad("history must be >= 1".into());
        }
        if self.dense_points == 0 || self.sparse_points == 0 {
            return bad("point counts must be >= 1".into());
        }
        if self.encoder.dim == 0 || self.encoder.dim != self.flow.cond_dim {
            return bad(format!("embedding width {} must equal flow cond_dim {}", self.encoder.dim, self.flow.cond_dim));
        }
        if self.flow.blocks == 0 || self.flow.hidden == 0 || !(self.flow.s_max > 0.0) {
            return bad("flow blocks, hidden and s_max must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    /// Learning rate reached at the final epoch.
    pub lr_min: f64,
    pub batch: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Surface samples per mesh in the loss, redrawn every step during
    /// training and fixed per sequence for validation.
    pub loss_samples: usize,
    /// ROI radius, normalized units.
    pub roi_radius: f64,
    /// ROI floor above the ground plane, normalized units.
    pub roi_floor_margin: f64,
    /// Force norm (N) above which a poking frame counts as in contact.
    pub contact_threshold: f64,
    /// Training items drawn per epoch; all of them when unset.
    pub frames_per_epoch: Option<usize>,
    /// Validation items used for the per-epoch loss; all when unset.
    pub val_frames: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr: 1e-4,
            lr_min: 1e-7,
            batch: 32,
            epochs: 200,
            weight_decay: 0.0,
            seed: 0,
            loss_samples: 8192,
            roi_radius: DEFAULT_ROI_RADIUS,
            roi_floor_margin: DEFAULT_ROI_FLOOR_MARGIN,
            contact_threshold: 0.5,
            frames_per_epoch: None,
            val_frames: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_min > 0.0) || self.lr_min > self.lr {
            return bad("need 0 < lr_min <= lr");
        }
        if self.batch == 0 || self.epochs == 0 || self.loss_samples == 0 {
            return bad("batch, epochs and loss_samples must be >= 1");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(self.roi_radius > 0.0) || !self.roi_floor_margin.is_finite() {
            return bad("roi_radius must be > 0 and roi_floor_margin finite");
        }
        if !(self.contact_threshold >= 0.0) {
            return bad("contact_threshold must be >= 0");
        }
        if self.frames_per_epoch == Some(0) || self.val_frames == Some(0) {
            return bad("frames_per_epoch and val_frames must be >= 1 when set");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_names_roundtrip() {
        for m in Modality::ALL {
            assert_eq!(m.as_str().parse::<Modality>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert_eq!("image+robot".parse::<Modality>().unwrap(), Modality::ImageRobot);
        assert!("lidar".parse::<Modality>().is_err());
    }

    #[test]
    fn routing_flags() {
        let cross: Vec<_> = Modality::ALL.into_iter().filter(|m| m.is_cross()).collect();
        assert_eq!(cross, vec![Modality::ImageRobot, Modality::PcSensorRobot]);
    }

    #[test]
    fn defaults_validate_and_parse_from_toml() {
        TrainConfig::default().validate().unwrap();
        let cfg: TrainConfig = toml::from_str("epochs = 3\n[model]\nmodality = \"robot\"\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.model.modality, Modality::Robot);
        assert_eq!(cfg.lr, 1e-4);
        assert!(toml::from_str::<TrainConfig>("learning_rate = 1.0").is_err());
        let bad = TrainConfig { lr: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let mut bad = TrainConfig::default();
        bad.model.encoder.dim = 32;
        assert!(bad.validate().is_err());
    }
}
