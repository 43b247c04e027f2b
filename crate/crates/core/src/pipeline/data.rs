use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Modality, ModelConfig, Observation, PipelineError, Result, RobotReading, TrainConfig, TrainSample};
use crate::mesh::{sample_surface, NormalizationTransform, Provenance, TriangleMesh, Vec3};
use crate::metrics::ContactInfo;
use crate::synth::{derive_seed, Protocol, Sequence};

const LOSS_STREAM: u64 = 0x4c4f5353;
const CLOUD_STREAM: u64 = 0x434c4f55;

/// Sequence indices for training and validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

fn by_object(seqs: &[Sequence]) -> BTreeMap<&str, Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in seqs.iter().enumerate() {
        m.entry(s.object.as_str()).or_default().push(i);
    }
    m
}

/// Holds out one randomly chosen sequence per object.
pub fn split_dataset(seqs: &[Sequence], seed: u64) -> Result<Split> {
    if seqs.is_empty() {
        return Err(PipelineError::Data("no sequences to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split { train: vec![], validation: vec![] };
    for (object, idx) in by_object(seqs) {
        if idx.len() < 2 {
            return Err(PipelineError::Data(format!("object {object} has a single sequence")));
        }
        let v = rng.gen_range(0..idx.len());
        split.validation.push(idx[v]);
        split.train.extend(idx.iter().enumerate().filter(|&(j, _)| j != v).map(|(_, &i)| i));
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    Ok(split)
}

/// Holds out every sequence of `unseen` randomly chosen objects.
pub fn split_unseen(seqs: &[Sequence], unseen: usize, seed: u64) -> Result<Split> {
    let groups = by_object(seqs);
    if unseen == 0 || unseen >= groups.len() {
        return Err(PipelineError::Data(format!("cannot hold out {unseen} of {} objects", groups.len())));
    }
    let mut names: Vec<&str> = groups.keys().copied().collect();
    names.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = Split { train: vec![], validation: vec![] };
    for (k, name) in names.iter().enumerate() {
        let dst = if k < unseen { &mut split.validation } else { &mut split.train };
        dst.extend(&groups[name]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    Ok(split)
}

/// A supervised frame: index into the sequence list and into its frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub sequence: usize,
    pub frame: usize,
}

/// Contact-curated frames for pokes, every frame for drops.
pub fn training_items(seqs: &[Sequence], indices: &[usize], contact_threshold: f64) -> Vec<Item> {
    let mut out = Vec::new();
    for &s in indices {
        let seq = &seqs[s];
        for (f, frame) in seq.frames.iter().enumerate() {
            let keep = match seq.protocol {
                Protocol::Drop => true,
                Protocol::Poke => frame.robot.map_or(false, |r| r.force.norm() > contact_threshold),
            };
            if keep {
                out.push(Item { sequence: s, frame: f });
            }
        }
    }
    out
}

/// Raw (original-frame) observation of one frame for `cfg.modality`.
pub fn observe(seq: &Sequence, frame: usize, cfg: &ModelConfig) -> Result<Observation> {
    let m = cfg.modality;
    let f = &seq.frames[frame];
    let missing = |what: &str| PipelineError::Modality(format!("{m} needs {what}; {} frame {} has none", seq.object, f.index));
    let mut obs = Observation::default();
    if m.uses_points() {
        let pts = match m {
            Modality::PcDense | Modality::PcSparse => {
                let n = if m == Modality::PcDense { cfg.dense_points } else { cfg.sparse_points };
                sample_surface(&f.mesh, n, derive_seed(seq.seed ^ CLOUD_STREAM, f.index as u64))?.points
            }
            _ => f.cloud.as_ref().ok_or_else(|| missing("a sensor cloud"))?.valid_points(),
        };
        obs.points = Some(pts);
    }
    if m.uses_image() {
        obs.image = Some(f.depth.clone().ok_or_else(|| missing("a depth image"))?);
    }
    if m.uses_robot() {
        let r = f.robot.ok_or_else(|| missing("a robot reading"))?;
        obs.robot = Some(RobotReading { force: r.force, contact: r.contact });
    }
    Ok(obs)
}

/// Per-sequence normalization and fixed loss-sample draws.
#[derive(Debug, Clone)]
pub struct SequenceContext {
    pub norm: NormalizationTransform,
    /// Normalized template.
    pub template: TriangleMesh,
    /// Normalized height of the template's lowest point.
    pub floor: f64,
    pub provenance: Vec<Provenance>,
}

impl SequenceContext {
    pub fn new(seq: &Sequence, loss_samples: usize) -> Result<Self> {
        let norm = NormalizationTransform::from_template(&seq.template)?;
        let template = norm.apply_mesh(&seq.template)?;
        let floor = template.bounding_box().0.y;
        let provenance = sample_surface(&template, loss_samples, derive_seed(seq.seed, LOSS_STREAM))?.provenance;
        Ok(Self { norm, template, floor, provenance })
    }

    /// Normalized ROI for a frame. Frames without a robot reading get an
    /// empty region.
    pub fn contact(&self, seq: &Sequence, frame: usize, radius: f64, floor_margin: f64) -> Result<ContactInfo> {
        let c = match seq.frames[frame].robot {
            Some(r) => {
                let dir = if r.force.norm() > 0.0 { r.force.normalize() } else { Vec3::x() };
                ContactInfo::new(self.norm.apply(&r.contact), radius, self.floor + floor_margin, dir)?
            }
            None => ContactInfo::new(Vec3::zeros(), radius, f64::INFINITY, Vec3::x())?,
        };
        Ok(c)
    }

    /// Normalized observation history ending at `frame`, front-padded with
    /// the sequence's first frame.
    pub fn history(&self, seq: &Sequence, frame: usize, cfg: &ModelConfig) -> Result<Vec<Observation>> {
        let h = cfg.history;
        (0..h)
            .map(|k| {
                let i = (frame + k + 1).saturating_sub(h);
                Ok(observe(seq, i, cfg)?.normalized(&self.norm))
            })
            .collect()
    }

    /// Fresh loss-sample draws over the normalized template.
    pub fn draw(&self, n: usize, seed: u64) -> Result<Vec<Provenance>> {
        Ok(sample_surface(&self.template, n, seed)?.provenance)
    }

    /// Supervised item using `provenance` for the loss samples, or the
    /// sequence's fixed draws when `None`.
    pub fn sample(&self, seq: &Sequence, frame: usize, cfg: &TrainConfig, provenance: Option<Vec<Provenance>>) -> Result<TrainSample> {
        let gt = self.norm.apply_mesh(&seq.frames[frame].mesh)?;
        if gt.faces() != self.template.faces() {
            return Err(PipelineError::Data(format!("{} frame {frame}: topology differs from template", seq.object)));
        }
        let provenance = provenance.unwrap_or_else(|| self.provenance.clone());
        let gt_samples = provenance.iter().map(|p| p.locate(&gt)).collect();
        Ok(TrainSample {
            template: self.template.clone(),
            provenance,
            history: self.history(seq, frame, &cfg.model)?,
            gt,
            gt_samples,
            contact: self.contact(seq, frame, cfg.roi_radius, cfg.roi_floor_margin)?,
        })
    }
}
