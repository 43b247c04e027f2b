use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Modality, Model, Observation, PipelineError, Result, RobotReading};
use crate::encoders::{DepthImage, HistoryBuffer};
use crate::mesh::{sample_surface, TriangleMesh, Vec3};
use crate::synth::{render_depth, OrthoCamera};

const BATCHES: usize = 10;

/// Published desktop rates for comparison: depth images, robot readings and
/// 5000-point clouds.
pub fn reference_hz(m: Modality) -> Option<f64> {
    match m {
        Modality::Image => Some(115.0),
        Modality::Robot => Some(185.0),
        Modality::PcDense => Some(33.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub modality: Modality,
    /// Median over batches of per-batch throughput.
    pub hz: f64,
    pub batch_hz: Vec<f64>,
    pub reference_hz: Option<f64>,
    pub points: Option<usize>,
}

fn synthetic_buffer(model: &Model, template: &TriangleMesh) -> Result<(HistoryBuffer<Observation>, Option<usize>)> {
    let cfg = model.config();
    let m = cfg.modality;
    let (lo, hi) = template.bounding_box();
    let n = match m {
        Modality::PcDense => cfg.dense_points,
        Modality::PcSparse => cfg.sparse_points,
        _ => 1000,
    };
    let mut buf = HistoryBuffer::new(cfg.history);
    for k in 0..cfg.history {
        let mut obs = Observation::default();
        if m.uses_points() {
            obs.points = Some(sample_surface(template, n, k as u64)?.points);
        }
        if m.uses_image() {
            let size = cfg.encoder.image_size;
            let cam = OrthoCamera::framing(&lo, &hi, &Vec3::new(1.0, 0.8, 0.6).normalize(), size)?;
            obs.image = Some(render_depth(template, &cam).unwrap_or_else(|_| DepthImage::background(size, size)));
        }
        if m.uses_robot() {
            let contact = Vec3::new(hi.x, 0.5 * (lo.y + hi.y), 0.5 * (lo.z + hi.z));
            obs.robot = Some(RobotReading { force: Vec3::new(-(k as f64 + 1.0), 0.0, 0.0), contact });
        }
        buf.push(obs);
    }
    Ok((buf, m.uses_points().then_some(n)))
}

/// Inference throughput of `model` deforming `template` from a full history
/// of synthetic observations of its own modality.
pub fn bench_inference(model: &Model, template: &TriangleMesh, warmup: usize, timed: usize) -> Result<BenchResult> {
    if timed < 100 {
        return Err(PipelineError::Config(format!("timed iterations {timed} < 100")));
    }
    let (buf, points) = synthetic_buffer(model, template)?;
    for _ in 0..warmup {
        model.infer(template, &buf)?;
    }
    let mut batch_hz = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let n = timed * (b + 1) / BATCHES - timed * b / BATCHES;
        let t0 = Instant::now();
        for _ in 0..n {
            std::hint::black_box(model.infer(template, &buf)?);
        }
        batch_hz.push(n as f64 / t0.elapsed().as_secs_f64().max(1e-12));
    }
    let mut sorted = batch_hz.clone();
    sorted.sort_by(f64::total_cmp);
    let hz = 0.5 * (sorted[(BATCHES - 1) / 2] + sorted[BATCHES / 2]);
    Ok(BenchResult { modality: model.modality(), hz, batch_hz, reference_hz: reference_hz(model.modality()), points })
}
