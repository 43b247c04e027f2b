use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Modality, ModelConfig, PipelineError, Result};
use crate::encoders::{DepthImage, Fusion, HistoryBuffer, ImageEncoder, PointEncoder, RobotEncoder};
use crate::flow::{points_tensor, tensor_points, ConditionalRealNvp};
use crate::mesh::{NormalizationTransform, Provenance, TriangleMesh, Vec3};
use crate::metrics::{total_loss_with_grad, ContactInfo, LossReport};
use crate::nn::gradcheck::grad_check;
use crate::nn::{load_checkpoint, save_checkpoint, Grads, Graph, ParamStore, Var};

/// Robot reading: force (N) and contact point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotReading {
    pub force: Vec3,
    pub contact: Vec3,
}

/// One frame of model input. Fields a modality does not use may be `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observation {
    pub points: Option<Vec<Vec3>>,
    pub image: Option<DepthImage>,
    pub robot: Option<RobotReading>,
}

impl Observation {
    /// Maps positions into a normalized frame. Forces and depth images are
    /// left as they are.
    pub fn normalized(&self, t: &NormalizationTransform) -> Observation {
        Observation {
            points: self.points.as_ref().map(|p| t.apply_points(p)),
            image: self.image.clone(),
            robot: self.robot.map(|r| RobotReading { force: r.force, contact: t.apply(&r.contact) }),
        }
    }

    fn check(&self, modality: Modality) -> Result<()> {
        let missing = |what: &str| Err(PipelineError::Modality(format!("{modality} model needs {what} in every frame")));
        if modality.uses_points() && self.points.as_ref().map_or(true, |p| p.is_empty()) {
            return missing("a point cloud");
        }
        if modality.uses_image() && self.image.is_none() {
            return missing("a depth image");
        }
        if modality.uses_robot() && self.robot.is_none() {
            return missing("a robot reading");
        }
        Ok(())
    }
}

/// Which fusion path a forward pass took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardTrace {
    pub self_fused: bool,
    pub cross_fused: bool,
    pub history: usize,
}

#[derive(Debug, Clone)]
enum Visual {
    Points(PointEncoder),
    Image(ImageEncoder),
}

/// Encoders, fusion and the conditional flow, with their parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    pub store: ParamStore,
    visual: Option<Visual>,
    robot: Option<RobotEncoder>,
    fusion: Fusion,
    flow: ConditionalRealNvp,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let m = config.modality;
        let visual = if m.uses_points() {
            Some(Visual::Points(PointEncoder::new(&mut store, "points", &config.encoder, &mut rng)?))
        } else if m.uses_image() {
            Some(Visual::Image(ImageEncoder::new(&mut store, "image", &config.encoder, &mut rng)?))
        } else {
            None
        };
        let robot = if m.uses_robot() { Some(RobotEncoder::new(&mut store, "robot", &config.encoder, &mut rng)?) } else { None };
        let fusion = Fusion::new(&mut store, "fusion", config.encoder.dim, &mut rng)?;
        let flow = ConditionalRealNvp::new(&mut store, config.flow, &mut rng)?;
        Ok(Self { config, store, visual, robot, fusion, flow })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn modality(&self) -> Modality {
        self.config.modality
    }

    pub fn flow(&self) -> &ConditionalRealNvp {
        &self.flow
    }

    /// Fused 1 x dim embedding of a normalized history, oldest first. Only
    /// the most recent `history` entries are used.
    pub fn condition(&self, g: &mut Graph, store: &ParamStore, history: &[Observation]) -> Result<(Var, ForwardTrace)> {
        if history.is_empty() {
            return Err(PipelineError::Data("empty observation history".into()));
        }
        let history = &history[history.len().saturating_sub(self.config.history)..];
        let m = self.config.modality;
        let mut vis = Vec::new();
        let mut rob = Vec::new();
        for obs in history {
            obs.check(m)?;
            match &self.visual {
                Some(Visual::Points(enc)) => vis.push(enc.encode_points(g, store, obs.points.as_deref().unwrap_or_default())?),
                Some(Visual::Image(enc)) => vis.push(enc.encode(g, store, obs.image.as_ref().expect("checked"))?),
                None => {}
            }
            if let (Some(enc), Some(r)) = (&self.robot, &obs.robot) {
                rob.push(enc.encode(g, store, &r.force, &r.contact)?);
            }
        }
        let mut trace = ForwardTrace { history: history.len(), ..Default::default() };
        let fused = if !vis.is_empty() && !rob.is_empty() {
            trace.cross_fused = true;
            self.fusion.cross_fuse(g, store, &vis, &rob)?
        } else {
            trace.self_fused = true;
            self.fusion.fuse_history(g, store, if vis.is_empty() { &rob } else { &vis })?
        };
        Ok((fused, trace))
    }

    /// Records the conditioned flow over normalized template vertices.
    pub fn deform_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        template: &[Vec3],
        history: &[Observation],
    ) -> Result<(Var, ForwardTrace)> {
        let (cond, trace) = self.condition(g, store, history)?;
        let x = g.input(points_tensor(template));
        Ok((self.flow.forward_graph(g, store, x, cond)?, trace))
    }

    /// Deformed vertices in the normalized frame.
    pub fn predict(&self, template: &[Vec3], history: &[Observation]) -> Result<(Vec<Vec3>, ForwardTrace)> {
        let mut g = Graph::new();
        let (y, trace) = self.deform_graph(&mut g, &self.store, template, history)?;
        Ok((tensor_points(g.value(y)), trace))
    }

    /// Deforms `template` (original scale) given raw observations in the
    /// same frame. Short buffers are front-padded with their oldest entry.
    pub fn infer(&self, template: &TriangleMesh, buffer: &HistoryBuffer<Observation>) -> Result<TriangleMesh> {
        if buffer.is_empty() {
            return Err(PipelineError::Data("observation buffer is empty".into()));
        }
        let norm = NormalizationTransform::from_template(template)?;
        let mut history: Vec<Observation> = buffer.iter().map(|o| o.normalized(&norm)).collect();
        while history.len() < self.config.history {
            history.insert(0, history[0].clone());
        }
        let (pred, _) = self.predict(&norm.apply_points(template.vertices()), &history)?;
        Ok(template.with_vertices(norm.invert_points(&pred))?)
    }

    /// Writes parameters plus `{"model": config}` merged with `extra`.
    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = serde_json::json!({ "model": self.config });
        if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        save_checkpoint(path, &self.store, &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let (store, meta) = load_checkpoint(path)?;
        let config: ModelConfig = serde_json::from_value(meta.get("model").cloned().unwrap_or_default())
            .map_err(|e| PipelineError::Config(format!("{}: checkpoint model config: {e}", path.display())))?;
        let mut model = Model::new(config, 0)?;
        model.store.assign_from(&store)?;
        Ok((model, meta))
    }
}

/// One supervised item in the normalized frame.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub template: TriangleMesh,
    /// Loss samples as barycentric draws over the template faces.
    pub provenance: Vec<Provenance>,
    pub history: Vec<Observation>,
    pub gt: TriangleMesh,
    /// The same barycentric draws located on `gt`.
    pub gt_samples: Vec<Vec3>,
    pub contact: ContactInfo,
}

/// Total loss of one item and its parameter gradient under `store`.
pub fn loss_and_grads(model: &Model, store: &ParamStore, s: &TrainSample) -> Result<(LossReport, Grads, ForwardTrace)> {
    let mut g = Graph::new();
    let (y, trace) = model.deform_graph(&mut g, store, s.template.vertices(), &s.history)?;
    let pred = tensor_points(g.value(y));
    let rep = total_loss_with_grad(&pred, s.template.faces(), &s.provenance, &s.gt, &s.gt_samples, &s.contact)?;
    let bw = g.backward(y, Some(points_tensor(&rep.grad)))?;
    let mut grads = store.zero_grads();
    g.accumulate(&bw, &mut grads);
    Ok((rep, grads, trace))
}

/// Central-difference check of [`loss_and_grads`] over every parameter;
/// returns the worst relative error.
pub fn model_grad_check(model: &Model, sample: &TrainSample, delta: f64) -> Result<f64> {
    loss_and_grads(model, &model.store, sample)?;
    let x0 = model.store.flatten();
    let mut work = model.store.clone();
    Ok(grad_check(&x0, delta, |x| {
        work.unflatten(x).expect("same layout");
        let (rep, grads, _) = loss_and_grads(model, &work, sample).expect("checked at x0");
        (rep.total, grads.flatten())
    }))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;
    use crate::flow::FlowConfig;
    use crate::mesh::sample_surface;
    use rand::Rng;

    /// Two poles plus three rings of six: 20 vertices, radius 0.5.
    pub(crate) fn small_sphere() -> TriangleMesh {
        let mut v = vec![Vec3::new(0.0, 0.5, 0.0)];
        for r in 1..=3 {
            let phi = std::f64::consts::PI * r as f64 / 4.0;
            for k in 0..6 {
                let th = std::f64::consts::TAU * k as f64 / 6.0;
                v.push(Vec3::new(phi.sin() * th.cos(), phi.cos(), phi.sin() * th.sin()) * 0.5);
            }
        }
        v.push(Vec3::new(0.0, -0.5, 0.0));
        let ring = |r: usize, k: usize| 1 + 6 * r + k % 6;
        let mut f = Vec::new();
        for k in 0..6 {
            f.push([0, ring(0, k + 1), ring(0, k)]);
            f.push([19, ring(2, k), ring(2, k + 1)]);
            for r in 0..2 {
                f.push([ring(r, k), ring(r, k + 1), ring(r + 1, k)]);
                f.push([ring(r, k + 1), ring(r + 1, k + 1), ring(r + 1, k)]);
            }
        }
        let m = TriangleMesh::new("sphere20", v, f).unwrap();
        if crate::mesh::signed_volume(&m).unwrap() < 0.0 {
            m.flipped()
        } else {
            m
        }
    }

    pub(crate) fn tiny_config(modality: Modality) -> ModelConfig {
        ModelConfig {
            modality,
            history: 5,
            dense_points: 10,
            sparse_points: 10,
            encoder: EncoderConfig {
                dim: 16,
                point_hidden: [16, 16],
                image_size: 16,
                patch: 4,
                conv_channels: 2,
                conv_kernel: 4,
                conv_stride: 2,
                ..Default::default()
            },
            flow: FlowConfig { blocks: 3, hidden: 16, cond_dim: 16, ..Default::default() },
        }
    }

    pub(crate) fn tiny_observation(rng: &mut impl Rng) -> Observation {
        let points = (0..10).map(|_| Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5))).collect();
        let depth = (0..256).map(|i| if i % 7 == 0 { DepthImage::BACKGROUND } else { rng.gen_range(0.2..0.8) }).collect();
        Observation {
            points: Some(points),
            image: Some(DepthImage::new(16, 16, depth).unwrap()),
            robot: Some(RobotReading {
                force: Vec3::new(rng.gen_range(-3.0..0.0), 0.0, rng.gen_range(-1.0..1.0)),
                contact: Vec3::new(0.5, rng.gen_range(-0.1..0.1), 0.0),
            }),
        }
    }

    pub(crate) fn tiny_sample(seed: u64) -> TrainSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let template = small_sphere();
        let gt_vertices = template
            .vertices()
            .iter()
            .map(|v| if v.x > 0.2 { v - Vec3::new(0.08, 0.0, 0.0) } else { v * 1.02 })
            .collect();
        let gt = template.with_vertices(gt_vertices).unwrap();
        let samples = sample_surface(&template, 40, seed).unwrap();
        let gt_samples = samples.replay(&gt).unwrap().points;
        let contact = ContactInfo::new(Vec3::new(0.45, 0.0, 0.0), 0.4, -0.45, Vec3::x()).unwrap();
        TrainSample {
            template,
            provenance: samples.provenance,
            history: (0..5).map(|_| tiny_observation(&mut rng)).collect(),
            gt,
            gt_samples,
            contact,
        }
    }

    /// Moves every parameter off its initialization so that zero-initialized
    /// heads do not hide upstream gradients.
    pub(crate) fn jitter(model: &mut Model, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = model.store.flatten().into_iter().map(|v| v + rng.gen_range(-scale..scale)).collect();
        model.store.unflatten(&x).unwrap();
    }

    #[test]
    fn identity_init_returns_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new(tiny_config(Modality::PcSensorRobot), 1).unwrap();
        let template = small_sphere().translated(&Vec3::new(0.3, 0.5, -0.2));
        let mut buf = HistoryBuffer::new(5);
        buf.push(tiny_observation(&mut rng));
        let out = model.infer(&template, &buf).unwrap();
        assert_eq!(out.vertex_count(), template.vertex_count());
        assert_eq!(out.faces(), template.faces());
        for (a, b) in out.vertices().iter().zip(template.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn same_buffer_same_mesh() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = Model::new(tiny_config(Modality::ImageRobot), 2).unwrap();
        jitter(&mut model, 0.2, 9);
        let mut buf = HistoryBuffer::new(5);
        for _ in 0..3 {
            buf.push(tiny_observation(&mut rng));
        }
        let t = small_sphere();
        let a = model.infer(&t, &buf).unwrap();
        let b = model.infer(&t, &buf).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert!(a.vertices().iter().zip(t.vertices()).any(|(p, q)| (p - q).norm() > 1e-6));
    }

    #[test]
    fn modality_mismatch_is_rejected() {
        let model = Model::new(tiny_config(Modality::ImageRobot), 0).unwrap();
        let mut buf = HistoryBuffer::new(5);
        buf.push(Observation { points: Some(vec![Vec3::zeros()]), ..Default::default() });
        assert!(matches!(model.infer(&small_sphere(), &buf), Err(PipelineError::Modality(_))));
        assert!(model.infer(&small_sphere(), &HistoryBuffer::new(5)).is_err());
    }

    #[test]
    fn fusion_routing_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hist: Vec<Observation> = (0..5).map(|_| tiny_observation(&mut rng)).collect();
        let t = small_sphere();
        for m in Modality::ALL {
            let model = Model::new(tiny_config(m), 0).unwrap();
            let (_, trace) = model.predict(t.vertices(), &hist).unwrap();
            assert_eq!(trace.cross_fused, m.is_cross(), "{m}");
            assert_eq!(trace.self_fused, !m.is_cross(), "{m}");
            assert_eq!(trace.history, 5);
        }
    }

    #[test]
    fn full_model_gradient() {
        for (i, m) in [Modality::PcSensorRobot, Modality::ImageRobot, Modality::PcDense, Modality::Robot].into_iter().enumerate() {
            let mut model = Model::new(tiny_config(m), i as u64).unwrap();
            jitter(&mut model, 0.1, 20 + i as u64);
            let sample = tiny_sample(30 + i as u64);
            let err = model_grad_check(&model, &sample, 1e-6).unwrap();
            assert!(err < 1e-4, "{m}: {err}");
        }
    }

    #[test]
    fn overfits_single_dent_frame() {
        let mut s = tiny_sample(11);
        // Dense enough that every face carries samples, so a perfect fit scores 0.
        let draws = sample_surface(&s.template, 2000, 3).unwrap();
        s.gt_samples = draws.replay(&s.gt).unwrap().points;
        s.provenance = draws.provenance;
        let mut model = Model::new(tiny_config(Modality::Robot), 5).unwrap();
        let adam = crate::nn::AdamConfig { lr: 3e-3, ..Default::default() };
        let first = loss_and_grads(&model, &model.store, &s).unwrap().0.pfd;
        for _ in 0..300 {
            let (_, g, _) = loss_and_grads(&model, &model.store, &s).unwrap();
            model.store.adam_step(&g, &adam).unwrap();
        }
        let last = loss_and_grads(&model, &model.store, &s).unwrap().0.pfd;
        assert!(last * 10.0 <= first, "{first:e} -> {last:e}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = Model::new(tiny_config(Modality::PcDense), 6).unwrap();
        jitter(&mut model, 0.1, 1);
        model.save(&path, serde_json::json!({ "epoch": 3 })).unwrap();
        let (back, meta) = Model::load(&path).unwrap();
        assert_eq!(meta["epoch"], 3);
        assert_eq!(back.config(), model.config());
        let sample = tiny_sample(2);
        let a = model.predict(sample.template.vertices(), &sample.history).unwrap().0;
        let b = back.predict(sample.template.vertices(), &sample.history).unwrap().0;
        assert_eq!(a, b);
    }
}
