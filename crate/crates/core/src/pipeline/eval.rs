use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{training_items, SequenceContext};
use super::{io_err, Model, PipelineError, Result, Split, TrainConfig};
use crate::mesh::{TriangleMesh, Vec3};
use crate::metrics::{cd_ul1, jaccard_distance, jaccard_index, pfd_loss, roi_loss, ContactInfo, MetricsRecord};
use crate::synth::Sequence;

pub const EVAL_PROTOCOL: &str =
    "contact-curated frames (force norm above the contact threshold) for poke sequences; every frame for drop sequences";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub voxel_resolution: usize,
    /// Barycentric surface samples per mesh for the losses and CD_UL1.
    pub samples: usize,
    pub contact_threshold: f64,
    pub roi_radius: f64,
    pub roi_floor_margin: f64,
    /// Evenly thins each sequence's evaluated frames to at most this many.
    pub max_frames_per_sequence: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            voxel_resolution: 64,
            samples: 8192,
            contact_threshold: t.contact_threshold,
            roi_radius: t.roi_radius,
            roi_floor_margin: t.roi_floor_margin,
            max_frames_per_sequence: None,
        }
    }
}

impl EvalOptions {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            contact_threshold: cfg.contact_threshold,
            roi_radius: cfg.roi_radius,
            roi_floor_margin: cfg.roi_floor_margin,
            ..Self::default()
        }
    }
}

/// Per-object means over evaluated frames, for the model and for the
/// undeformed template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRow {
    pub object: String,
    pub frames: usize,
    pub model: MetricsRecord,
    pub identity: MetricsRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub modality: Option<String>,
    pub voxel_resolution: usize,
    pub rows: Vec<ObjectRow>,
    /// Mean of the per-object model rows.
    pub mean: MetricsRecord,
    pub identity_mean: MetricsRecord,
    pub inference_hz: Option<f64>,
    pub config: serde_json::Value,
}

/// One point of the J versus deformation-level scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub object: String,
    pub frame: usize,
    pub d_j: f64,
    pub j: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub scatter: Vec<ScatterRow>,
    pub identity_scatter: Vec<ScatterRow>,
}

struct FrameEval<'a> {
    ctx: &'a SequenceContext,
    gt: &'a TriangleMesh,
    gt_n: TriangleMesh,
    gt_n_samples: Vec<Vec3>,
    gt_samples: Vec<Vec3>,
    contact: ContactInfo,
    d_j: f64,
    resolution: usize,
}

impl FrameEval<'_> {
    fn record(&self, pred: &TriangleMesh) -> Result<MetricsRecord> {
        if pred.faces() != self.ctx.template.faces() {
            return Err(PipelineError::Data("prediction topology differs from the template".into()));
        }
        let pred_n = self.ctx.norm.apply_mesh(pred)?;
        let pn: Vec<Vec3> = self.ctx.provenance.iter().map(|p| p.locate(&pred_n)).collect();
        let po: Vec<Vec3> = self.ctx.provenance.iter().map(|p| p.locate(pred)).collect();
        Ok(MetricsRecord {
            l_pfd_e3: pfd_loss(&pn, &self.gt_n)? * 1e3,
            l_roi_e3: roi_loss(&pn, &self.gt_n_samples, &self.contact)? * 1e3,
            cd_ul1_mm: cd_ul1(&po, &self.gt_samples)?,
            jaccard: jaccard_index(pred, self.gt, self.resolution)?,
            jaccard_distance: self.d_j,
        })
    }
}

/// Scores `predict` on the curated frames of `indices`. `predict` returns
/// the deformed template at original scale.
pub fn evaluate_with(
    seqs: &[Sequence],
    indices: &[usize],
    opts: &EvalOptions,
    mut predict: impl FnMut(&Sequence, &SequenceContext, usize) -> Result<TriangleMesh>,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(PipelineError::Data("no validation sequences".into()));
    }
    let mut groups: Vec<(String, Vec<MetricsRecord>, Vec<MetricsRecord>)> = Vec::new();
    let mut scatter = Vec::new();
    let mut identity_scatter = Vec::new();
    for &si in indices {
        let seq = seqs.get(si).ok_or_else(|| PipelineError::Data(format!("no sequence {si}")))?;
        let ctx = SequenceContext::new(seq, opts.samples)?;
        let mut items = training_items(seqs, &[si], opts.contact_threshold);
        if let Some(n) = opts.max_frames_per_sequence.filter(|&n| n < items.len()) {
            items = (0..n).map(|k| items[k * items.len() / n]).collect();
        }
        let gi = match groups.iter().position(|g| g.0 == seq.object) {
            Some(i) => i,
            None => {
                groups.push((seq.object.clone(), vec![], vec![]));
                groups.len() - 1
            }
        };
        for it in items {
            let frame = &seq.frames[it.frame];
            let gt = &frame.mesh;
            let gt_n = ctx.norm.apply_mesh(gt)?;
            let fe = FrameEval {
                ctx: &ctx,
                gt,
                gt_n_samples: ctx.provenance.iter().map(|p| p.locate(&gt_n)).collect(),
                gt_samples: ctx.provenance.iter().map(|p| p.locate(gt)).collect(),
                gt_n,
                contact: ctx.contact(seq, it.frame, opts.roi_radius, opts.roi_floor_margin)?,
                d_j: jaccard_distance(&seq.template, gt, opts.voxel_resolution)?,
                resolution: opts.voxel_resolution,
            };
            let pred = predict(seq, &ctx, it.frame)?;
            let m = fe.record(&pred)?;
            let id = fe.record(&seq.template)?;
            scatter.push(ScatterRow { object: seq.object.clone(), frame: frame.index, d_j: fe.d_j, j: m.jaccard });
            identity_scatter.push(ScatterRow { object: seq.object.clone(), frame: frame.index, d_j: fe.d_j, j: id.jaccard });
            groups[gi].1.push(m);
            groups[gi].2.push(id);
        }
    }
    let rows: Vec<ObjectRow> = groups
        .into_iter()
        .filter(|g| !g.1.is_empty())
        .map(|(object, m, id)| ObjectRow { object, frames: m.len(), model: MetricsRecord::mean(&m), identity: MetricsRecord::mean(&id) })
        .collect();
    if rows.is_empty() {
        return Err(PipelineError::Data("no frames left to evaluate after curation".into()));
    }
    let mean = MetricsRecord::mean(&rows.iter().map(|r| r.model).collect::<Vec<_>>());
    let identity_mean = MetricsRecord::mean(&rows.iter().map(|r| r.identity).collect::<Vec<_>>());
    let report = MetricsReport {
        protocol: EVAL_PROTOCOL.into(),
        modality: None,
        voxel_resolution: opts.voxel_resolution,
        rows,
        mean,
        identity_mean,
        inference_hz: None,
        config: serde_json::to_value(opts).expect("options serialize"),
    };
    Ok(Evaluation { report, scatter, identity_scatter })
}

/// Scores `model` on the validation sequences of `split`.
pub fn evaluate(model: &Model, seqs: &[Sequence], split: &Split, opts: &EvalOptions) -> Result<Evaluation> {
    let mut ev = evaluate_with(seqs, &split.validation, opts, |seq, ctx, frame| {
        let history = ctx.history(seq, frame, model.config())?;
        let (pred, _) = model.predict(ctx.template.vertices(), &history)?;
        Ok(seq.template.with_vertices(ctx.norm.invert_points(&pred))?)
    })?;
    ev.report.modality = Some(model.modality().to_string());
    Ok(ev)
}

const TABLE_COLUMNS: &str = "L_PFD·10³,L_ROI·10³,CD_UL1 [mm],\"J(M_P, M_GT)\",d_J";

fn record_cells(r: &MetricsRecord) -> String {
    format!("{},{},{},{},{}", r.l_pfd_e3, r.l_roi_e3, r.cd_ul1_mm, r.jaccard, r.jaccard_distance)
}

/// Per-object rows for the model and the identity baseline, each followed
/// by its mean row.
pub fn write_report_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut s = format!("predictor,object,frames,{TABLE_COLUMNS}\n");
    for (name, pick, mean) in [
        ("model", (|r: &ObjectRow| r.model) as fn(&ObjectRow) -> MetricsRecord, &report.mean),
        ("identity", |r: &ObjectRow| r.identity, &report.identity_mean),
    ] {
        for row in &report.rows {
            s += &format!("{name},{},{},{}\n", row.object, row.frames, record_cells(&pick(row)));
        }
        let frames: usize = report.rows.iter().map(|r| r.frames).sum();
        s += &format!("{name},mean,{frames},{}\n", record_cells(mean));
    }
    std::fs::write(path, s).map_err(io_err(path))
}

pub fn write_scatter_csv(rows: &[ScatterRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    let mut body = String::from("object,d_J,J\n");
    for r in rows {
        body += &format!("{},{},{}\n", r.object, r.d_j, r.j);
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}
