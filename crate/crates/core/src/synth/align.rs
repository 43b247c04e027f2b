//! Multi-rate stream pairing and contact-frame curation.

use serde::{Deserialize, Serialize};

use super::{Protocol, Result, Sequence, SynthError};
use crate::encoders::RobotFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub camera: usize,
    pub robot: usize,
    /// Absolute time difference, s.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<Pairing>,
    /// Camera ticks with no robot sample within tolerance.
    pub unpaired: Vec<usize>,
}

impl Alignment {
    pub fn max_error(&self) -> f64 {
        self.pairs.iter().map(|p| p.error).fold(0.0, f64::max)
    }
}

/// Pairs every camera tick with the nearest robot timestamp (the earlier
/// one on ties). Robot timestamps must be sorted. Ticks farther than
/// `tolerance` from every robot sample are listed as unpaired; if no tick
/// pairs at all the clocks are considered skewed.
pub fn align_streams(robot_t: &[f64], camera_t: &[f64], tolerance: f64) -> Result<Alignment> {
    if robot_t.is_empty() {
        return Err(SynthError::EmptyStream("robot"));
    }
    if camera_t.is_empty() {
        return Err(SynthError::EmptyStream("camera"));
    }
    if robot_t.iter().chain(camera_t).any(|t| !t.is_finite()) || !(tolerance >= 0.0) {
        return Err(SynthError::Invalid("timestamps and tolerance must be finite".into()));
    }
    if robot_t.windows(2).any(|w| w[1] < w[0]) {
        return Err(SynthError::Invalid("robot timestamps are not sorted".into()));
    }
    let mut out = Alignment::default();
    for (c, &t) in camera_t.iter().enumerate() {
        let i = robot_t.partition_point(|&r| r < t);
        let mut best = None;
        for j in [i.checked_sub(1), (i < robot_t.len()).then_some(i)].into_iter().flatten() {
            let e = (robot_t[j] - t).abs();
            if best.map_or(true, |(_, be)| e < be) {
                best = Some((j, e));
            }
        }
        let (robot, error) = best.expect("non-empty robot stream");
        if error <= tolerance {
            out.pairs.push(Pairing { camera: c, robot, error });
        } else {
            out.unpaired.push(c);
        }
    }
    if out.pairs.is_empty() {
        return Err(SynthError::ClockSkew { tolerance });
    }
    Ok(out)
}

pub fn align_robot_stream(robot: &[RobotFrame], camera_t: &[f64], tolerance: f64) -> Result<Alignment> {
    let rt: Vec<f64> = robot.iter().map(|r| r.t).collect();
    align_streams(&rt, camera_t, tolerance)
}

#[derive(Debug, Clone)]
pub struct Curated {
    pub sequence: Sequence,
    pub retained: usize,
    pub total: usize,
}

impl Curated {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.retained as f64 / self.total as f64
        }
    }
}

/// Keeps poking frames whose paired force norm exceeds `threshold`.
pub fn curate_contact_frames(seq: &Sequence, threshold: f64) -> Result<Curated> {
    if seq.protocol != Protocol::Poke {
        return Err(SynthError::WrongProtocol(seq.protocol));
    }
    let mut frames = Vec::new();
    for f in &seq.frames {
        let r = f.robot.ok_or_else(|| SynthError::Invalid(format!("frame {} has no robot reading", f.index)))?;
        if r.force.norm() > threshold {
            frames.push(f.clone());
        }
    }
    let retained = frames.len();
    let sequence = Sequence { frames, ..seq.clone() };
    Ok(Curated { sequence, retained, total: seq.frames.len() })
}
