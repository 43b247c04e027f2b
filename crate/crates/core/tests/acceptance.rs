//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//! The training criteria dominate the runtime (about an hour on one core).

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flexmesh::encoders::{DepthImage, EncoderConfig, Fusion, ImageEncoder, PointEncoder, RobotEncoder};
use flexmesh::flow::{points_tensor, ConditionalRealNvp, FlowConfig, MaskScheme};
use flexmesh::mesh::{make_primitive, sample_surface, signed_volume, Primitive};
use flexmesh::metrics::{cd_ul1, jaccard_index, pfd_loss, roi_loss, ContactInfo};
use flexmesh::nn::gradcheck::grad_check_store;
use flexmesh::nn::{attention, Activation, AttentionBlock, Dense, Graph, ParamStore, Tensor};
use flexmesh::pipeline::{
    bench_inference, evaluate, evaluate_with, model_grad_check, split_dataset, train, write_scatter_csv, EvalOptions,
    Evaluation, Modality, Model, ModelConfig, Observation, RobotReading, TrainConfig, TrainSample,
};
use flexmesh::synth::{
    align_streams, curate_contact_frames, default_objects, estimate_stiffness, gen_corpus, stiffness_samples,
    ObjectSpec, Protocol, RansacConfig, Sequence, SynthConfig,
};
use flexmesh::{TriangleMesh, Vec3};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Training budget shared by criteria 5 and 6. The optimizer settings are
// the TrainConfig defaults; only the number of frames seen is capped.
const EPOCHS: usize = 40;
const FRAMES_PER_EPOCH: usize = 640;
const VAL_FRAMES: usize = 48;
const EVAL_FRAMES: usize = 20;

// ---------------------------------------------------------------------------
// Brute-force oracles, written independently of the library kernels.

fn seg_dist_sq(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_squared()
}

/// Plane projection when its barycentric coordinates are all non-negative,
/// otherwise the nearest of the three edges.
fn tri_dist_sq(p: &Vec3, t: &[Vec3; 3]) -> f64 {
    let (e0, e1, d) = (t[1] - t[0], t[2] - t[0], p - t[0]);
    let (a, b, c) = (e0.dot(&e0), e0.dot(&e1), e1.dot(&e1));
    let (r0, r1) = (e0.dot(&d), e1.dot(&d));
    let det = a * c - b * b;
    let u = (c * r0 - b * r1) / det;
    let v = (a * r1 - b * r0) / det;
    if u >= 0.0 && v >= 0.0 && u + v <= 1.0 {
        return (d - e0 * u - e1 * v).norm_squared();
    }
    seg_dist_sq(p, &t[0], &t[1]).min(seg_dist_sq(p, &t[1], &t[2])).min(seg_dist_sq(p, &t[2], &t[0]))
}

fn oracle_pfd(pred: &[Vec3], gt: &TriangleMesh) -> f64 {
    let tris: Vec<[Vec3; 3]> = (0..gt.face_count()).map(|f| gt.triangle(f)).collect();
    let a: f64 = pred.iter().map(|p| tris.iter().map(|t| tri_dist_sq(p, t)).fold(f64::INFINITY, f64::min)).sum();
    let b: f64 = tris.iter().map(|t| pred.iter().map(|p| tri_dist_sq(p, t)).fold(f64::INFINITY, f64::min)).sum();
    a / pred.len() as f64 + b / tris.len() as f64
}

fn oracle_roi(pred: &[Vec3], gt: &[Vec3], c: &ContactInfo) -> f64 {
    let mut s = 0.0;
    for p in pred {
        if (p - c.point).norm() <= c.radius && p.y > c.min_height {
            s += gt.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
        }
    }
    s / pred.len() as f64
}

fn oracle_cd(p: &[Vec3], q: &[Vec3]) -> f64 {
    let l1 = |a: &Vec3, b: &Vec3| (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs();
    1e3 * p.iter().map(|a| q.iter().map(|b| l1(a, b)).fold(f64::INFINITY, f64::min)).sum::<f64>() / p.len() as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn rand_vec(rng: &mut impl Rng, s: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
}

fn random_soup(rng: &mut impl Rng, faces: usize) -> TriangleMesh {
    let nv = rng.gen_range(6..=12);
    let v: Vec<Vec3> = (0..nv).map(|_| rand_vec(rng, 0.5)).collect();
    let mut f = Vec::new();
    while f.len() < faces {
        let t = [rng.gen_range(0..nv), rng.gen_range(0..nv), rng.gen_range(0..nv)];
        let area = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]])).norm();
        if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && area > 1e-3 {
            f.push(t);
        }
    }
    TriangleMesh::new("soup", v, f).unwrap()
}

fn c1_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst, mut in_roi) = (0.0f64, 0usize);
    let n = 60;
    for _ in 0..n {
        let faces = rng.gen_range(1..=20);
        let gt = random_soup(&mut rng, faces);
        let pred: Vec<Vec3> = (0..rng.gen_range(1..=500)).map(|_| rand_vec(&mut rng, 0.6)).collect();
        let gts: Vec<Vec3> = (0..rng.gen_range(1..=500)).map(|_| rand_vec(&mut rng, 0.6)).collect();
        let contact = ContactInfo::new(rand_vec(&mut rng, 0.3), rng.gen_range(0.2..0.6), rng.gen_range(-0.6..0.0), Vec3::x())
            .map_err(|e| e.to_string())?;
        in_roi += pred.iter().filter(|p| contact.contains(p)).count();
        let pairs = [
            (pfd_loss(&pred, &gt).map_err(|e| e.to_string())?, oracle_pfd(&pred, &gt)),
            (roi_loss(&pred, &gts, &contact).map_err(|e| e.to_string())?, oracle_roi(&pred, &gts, &contact)),
            (cd_ul1(&pred, &gts).map_err(|e| e.to_string())?, oracle_cd(&pred, &gts)),
        ];
        for (lib, oracle) in pairs {
            if oracle != 0.0 || lib != 0.0 {
                worst = worst.max(rel(lib, oracle));
            }
        }
    }
    check(worst <= 1e-9 && in_roi > 0, format!("{n} instances, max relative deviation {worst:.2e}"))
}

// ---------------------------------------------------------------------------

fn cube(offset: Vec3) -> TriangleMesh {
    make_primitive(&Primitive::Box { size: Vec3::new(1.0, 1.0, 1.0) }, 2).unwrap().translated(&offset)
}

fn c2_jaccard() -> Outcome {
    let a = cube(Vec3::zeros());
    let same = jaccard_index(&a, &a, 64).map_err(|e| e.to_string())?;
    let half = jaccard_index(&a, &cube(Vec3::new(0.5, 0.0, 0.0)), 64).map_err(|e| e.to_string())?;
    // Offsets off the lattice so that cell boundaries never line up.
    let b = cube(Vec3::new(0.31, 0.17, 0.09));
    let exact = 0.69 * 0.83 * 0.91 / (2.0 - 0.69 * 0.83 * 0.91);
    let mut errs = Vec::new();
    for res in [16, 32, 64, 128] {
        errs.push((jaccard_index(&a, &b, res).map_err(|e| e.to_string())? - exact).abs());
    }
    let shrinking = errs[2] < errs[0] && errs[3] < errs[1];
    check(
        (same - 1.0).abs() <= 0.02 && (half - 1.0 / 3.0).abs() <= 0.02 && shrinking,
        format!("identical {same:.4}, half overlap {half:.4}, error at 16/32/64/128: {:.2e} {:.2e} {:.2e} {:.2e}", errs[0], errs[1], errs[2], errs[3]),
    )
}

// ---------------------------------------------------------------------------

fn c3_flow() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let template = make_primitive(&Primitive::Sphere { radius: 0.4 }, 2).unwrap();
    let mut worst = 0.0f64;
    let mut topo = true;
    for draw in 0..20 {
        let mask = if draw % 2 == 0 { MaskScheme::TwoFixed } else { MaskScheme::OneFixed };
        let cfg = FlowConfig { cond_dim: 8, mask, ..FlowConfig::default() };
        let mut store = ParamStore::new();
        let flow = ConditionalRealNvp::new(&mut store, cfg, &mut rng).map_err(|e| e.to_string())?;
        let x: Vec<f64> = store.flatten().iter().map(|_| rng.gen_range(-0.3..0.3)).collect();
        store.unflatten(&x).map_err(|e| e.to_string())?;
        let cond: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pts: Vec<Vec3> = (0..10_000).map(|_| rand_vec(&mut rng, 0.5)).collect();
        let y = flow.forward(&store, &pts, &cond).map_err(|e| e.to_string())?;
        let back = flow.inverse(&store, &y, &cond).map_err(|e| e.to_string())?;
        for (a, b) in back.iter().zip(&pts) {
            worst = worst.max((a - b).amax());
        }
        let d = flow.deform_template(&store, &template, &cond).map_err(|e| e.to_string())?;
        topo &= d.faces() == template.faces() && d.vertices() != template.vertices();
    }
    check(worst < 1e-6 && topo, format!("20 draws x 10^4 points, max roundtrip error {worst:.2e}, faces preserved: {topo}"))
}

// ---------------------------------------------------------------------------

fn small_sphere() -> TriangleMesh {
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
    if signed_volume(&m).unwrap() < 0.0 {
        m.flipped()
    } else {
        m
    }
}

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        dim: 16,
        point_hidden: [16, 16],
        image_size: 16,
        patch: 4,
        conv_channels: 2,
        conv_kernel: 4,
        conv_stride: 2,
        ..Default::default()
    }
}

fn depth(rng: &mut impl Rng) -> DepthImage {
    let d = (0..256).map(|i| if i % 7 == 0 { DepthImage::BACKGROUND } else { rng.gen_range(0.2..0.8) }).collect();
    DepthImage::new(16, 16, d).unwrap()
}

fn tiny_sample(rng: &mut impl Rng) -> TrainSample {
    let template = small_sphere();
    let gt_v = template.vertices().iter().map(|v| if v.x > 0.2 { v - Vec3::new(0.08, 0.0, 0.0) } else { v * 1.02 }).collect();
    let gt = template.with_vertices(gt_v).unwrap();
    let s = sample_surface(&template, 40, 5).unwrap();
    let history = (0..5)
        .map(|_| Observation {
            points: Some((0..10).map(|_| rand_vec(rng, 0.5)).collect()),
            image: Some(depth(rng)),
            robot: Some(RobotReading { force: rand_vec(rng, 2.0), contact: Vec3::new(0.5, rng.gen_range(-0.1..0.1), 0.0) }),
        })
        .collect();
    TrainSample {
        gt_samples: s.replay(&gt).unwrap().points,
        provenance: s.provenance,
        template,
        history,
        gt,
        contact: ContactInfo::new(Vec3::new(0.45, 0.0, 0.0), 0.4, -0.45, Vec3::x()).unwrap(),
    }
}

fn scalar_loss(g: &mut Graph, v: flexmesh::nn::Var) -> flexmesh::nn::Var {
    let t = g.tanh(v);
    g.sum(t)
}

fn layer_checks(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    let cfg = tiny_encoder();
    let mut out = Vec::new();
    let input = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let jitter = |store: &mut ParamStore, rng: &mut ChaCha8Rng| {
        let x: Vec<f64> = store.flatten().iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        store.unflatten(&x).unwrap();
    };

    let mut s = ParamStore::new();
    let dense = Dense::new(&mut s, "d", 6, 5, Activation::Tanh, rng).unwrap();
    let x = input(rng, 4, 6);
    out.push(("dense", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let y = dense.forward(&mut g, st, xi).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let (q, k, v) = (input(rng, 3, 4), input(rng, 5, 4), input(rng, 5, 4));
    let qid = s.add("q", q).unwrap();
    let kid = s.add("k", k).unwrap();
    let vid = s.add("v", v).unwrap();
    out.push(("attention", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let (q, k, v) = (g.param(st, qid), g.param(st, kid), g.param(st, vid));
        let y = attention(&mut g, q, k, v).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let block = AttentionBlock::new(&mut s, "a", 8, rng).unwrap();
    let (q, c) = (input(rng, 1, 8), input(rng, 5, 8));
    out.push(("attention block", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let (qi, ci) = (g.input(q.clone()), g.input(c.clone()));
        let y = block.forward(&mut g, st, qi, ci).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let pe = PointEncoder::new(&mut s, "pc", &cfg, rng).unwrap();
    let pts: Vec<Vec3> = (0..10).map(|_| rand_vec(rng, 0.5)).collect();
    out.push(("point encoder", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let y = pe.encode_points(&mut g, st, &pts).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let ie = ImageEncoder::new(&mut s, "img", &cfg, rng).unwrap();
    jitter(&mut s, rng);
    let img = depth(rng);
    out.push(("image encoder", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let y = ie.encode(&mut g, st, &img).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let re = RobotEncoder::new(&mut s, "rob", &cfg, rng).unwrap();
    let (f, c) = (rand_vec(rng, 2.0), rand_vec(rng, 0.5));
    out.push(("robot encoder", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let y = re.encode(&mut g, st, &f, &c).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let fu = Fusion::new(&mut s, "fuse", 8, rng).unwrap();
    let rows: Vec<Tensor> = (0..6).map(|_| input(rng, 1, 8)).collect();
    out.push(("fusion", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let a: Vec<_> = rows[..3].iter().map(|t| g.input(t.clone())).collect();
        let b: Vec<_> = rows[3..].iter().map(|t| g.input(t.clone())).collect();
        let y1 = fu.fuse_history(&mut g, st, &a).unwrap();
        let y2 = fu.cross_fuse(&mut g, st, &a, &b).unwrap();
        let y = g.add(y1, y2).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));

    let mut s = ParamStore::new();
    let flow = ConditionalRealNvp::new(&mut s, FlowConfig { blocks: 3, hidden: 8, cond_dim: 4, ..Default::default() }, rng)
        .unwrap();
    jitter(&mut s, rng);
    let (pts, cond) = (points_tensor(&(0..6).map(|_| rand_vec(rng, 0.5)).collect::<Vec<_>>()), input(rng, 1, 4));
    out.push(("coupling flow", grad_check_store(&mut s, 1e-6, |st| {
        let mut g = Graph::new();
        let (x, c) = (g.input(pts.clone()), g.input(cond.clone()));
        let y = flow.forward_graph(&mut g, st, x, c).unwrap();
        let l = scalar_loss(&mut g, y);
        (g, l)
    })));
    out
}

fn c4_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let layers = layer_checks(&mut rng);
    let layer_worst = layers.iter().map(|l| l.1).fold(0.0, f64::max);
    let mut model_worst = 0.0f64;
    for m in [Modality::PcDense, Modality::Image, Modality::Robot, Modality::PcSensorRobot] {
        let cfg = ModelConfig {
            modality: m,
            history: 5,
            dense_points: 10,
            sparse_points: 10,
            encoder: tiny_encoder(),
            flow: FlowConfig { blocks: 3, hidden: 16, cond_dim: 16, ..Default::default() },
        };
        let mut model = Model::new(cfg, 7).map_err(|e| e.to_string())?;
        // Off the zero-initialized heads so every upstream gradient is live.
        let x: Vec<f64> = model.store.flatten().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
        model.store.unflatten(&x).map_err(|e| e.to_string())?;
        let sample = tiny_sample(&mut rng);
        model_worst = model_worst.max(model_grad_check(&model, &sample, 1e-6).map_err(|e| e.to_string())?);
    }
    let detail = layers.iter().fold(format!("full model {model_worst:.2e}; layers"), |mut s, (n, e)| {
        let _ = write!(s, " {n} {e:.1e}");
        s
    });
    check(model_worst < 1e-4 && layer_worst < 1e-6, detail)
}

// ---------------------------------------------------------------------------

struct Corpus {
    seqs: Vec<Sequence>,
    objects: Vec<ObjectSpec>,
}

fn corpus() -> Corpus {
    let objects = default_objects().unwrap();
    let cfg = SynthConfig { sensor_clouds: true, depth_images: false, ..SynthConfig::default() };
    let seqs = gen_corpus(&objects, Protocol::Poke, &cfg, 1).unwrap();
    Corpus { seqs, objects }
}

fn train_eval(c: &Corpus, modality: Modality) -> Result<(Evaluation, f64), String> {
    let t0 = Instant::now();
    let split = split_dataset(&c.seqs, 0).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig {
        epochs: EPOCHS,
        frames_per_epoch: Some(FRAMES_PER_EPOCH),
        val_frames: Some(VAL_FRAMES),
        ..TrainConfig::default()
    };
    cfg.model.modality = modality;
    let out = train(&cfg, &c.seqs, &split, None).map_err(|e| e.to_string())?;
    let opts = EvalOptions { max_frames_per_sequence: Some(EVAL_FRAMES), ..EvalOptions::from_train(&cfg) };
    let ev = evaluate(&out.model, &c.seqs, &split, &opts).map_err(|e| e.to_string())?;
    Ok((ev, t0.elapsed().as_secs_f64()))
}

fn table(ev: &Evaluation) -> String {
    let mut s = String::new();
    for r in &ev.report.rows {
        let _ = write!(
            s,
            "\n    {:18} model pfd {:.4} roi {:.4} cd {:.3} J {:.4} | identity pfd {:.4} roi {:.4} cd {:.3} J {:.4}",
            r.object,
            r.model.l_pfd_e3,
            r.model.l_roi_e3,
            r.model.cd_ul1_mm,
            r.model.jaccard,
            r.identity.l_pfd_e3,
            r.identity.l_roi_e3,
            r.identity.cd_ul1_mm,
            r.identity.jaccard
        );
    }
    s
}

fn c5_learning(c: &Corpus, dense: &Result<(Evaluation, f64), String>) -> Outcome {
    let (ev, secs) = dense.as_ref().map_err(|e| e.clone())?;
    let mut beaten = 0;
    let mut within_cd = true;
    for r in &ev.report.rows {
        let (m, id) = (&r.model, &r.identity);
        if m.l_pfd_e3 < id.l_pfd_e3 && m.l_roi_e3 < id.l_roi_e3 && m.cd_ul1_mm < id.cd_ul1_mm && m.jaccard > id.jaccard {
            beaten += 1;
        }
        let diag_mm = c.objects.iter().find(|o| o.name == r.object).map_or(f64::NAN, |o| o.diagonal() * 1e3);
        within_cd &= r.model.cd_ul1_mm <= 0.05 * diag_mm;
    }
    let n = ev.report.rows.len();
    let mean_j = ev.report.mean.jaccard;
    let detail = format!(
        "beats identity on all metrics for {beaten}/{n} objects, mean J {mean_j:.4}, CD within 5% of diagonal: {within_cd}, {:.0} s{}",
        secs,
        table(ev)
    );
    check(beaten == n && mean_j >= 0.85 && within_cd, detail)
}

fn c6_trend(runs: &[(Modality, Result<(Evaluation, f64), String>)]) -> Outcome {
    let mut pfd = Vec::new();
    let mut tbl = String::new();
    for (m, r) in runs {
        let (ev, _) = r.as_ref().map_err(|e| format!("{m}: {e}"))?;
        pfd.push(ev.report.mean.l_pfd_e3);
        let _ = write!(tbl, "\n  {m}: mean L_PFD·10³ {:.4}{}", ev.report.mean.l_pfd_e3, table(ev));
    }
    let ok = pfd[0] <= pfd[1] * 1.05 && pfd[1] <= pfd[2] * 1.05;
    check(ok, format!("dense {:.4} / sparse {:.4} / sensor {:.4}{}", pfd[0], pfd[1], pfd[2], if ok { String::new() } else { tbl }))
}

fn c7_rates() -> Outcome {
    let template = default_objects().unwrap()[0].template.clone();
    let mut hz = Vec::new();
    for m in [Modality::Robot, Modality::PcDense] {
        let model = Model::new(ModelConfig { modality: m, ..ModelConfig::default() }, 0).map_err(|e| e.to_string())?;
        // One discarded repeat: rates keep climbing for a few seconds after start.
        // It also sizes the timed repeats to ~4 s so the batch median rides out
        // short scheduler stalls.
        let probe = bench_inference(&model, &template, 30, 200).map_err(|e| e.to_string())?;
        let timed = ((probe.hz * 4.0) as usize).max(200);
        let reps: Vec<f64> = (0..3)
            .map(|_| bench_inference(&model, &template, 10, timed).map(|b| b.hz))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let mean = reps.iter().sum::<f64>() / 3.0;
        // Coefficient of variation (sample std over mean).
        let spread = (reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 2.0).sqrt() / mean;
        hz.push((mean, spread));
    }
    let (robot, dense) = (hz[0], hz[1]);
    check(
        robot.0 > dense.0 && robot.1 < 0.1 && dense.1 < 0.1,
        format!("robot {:.0} Hz (cv {:.1}%), pc_dense {:.1} Hz (cv {:.1}%)", robot.0, robot.1 * 100.0, dense.0, dense.1 * 100.0),
    )
}

// ---------------------------------------------------------------------------

fn c8_stiffness(c: &Corpus) -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k: f64 = (rng.gen_range(148f64.ln()..2156f64.ln())).exp();
        let n = 100;
        let mut x = Vec::with_capacity(n);
        let mut f = Vec::with_capacity(n);
        for i in 0..n {
            let xi = rng.gen_range(0.001..0.02);
            x.push(xi);
            f.push(if i % 5 == 0 { rng.gen_range(0.0..2.0 * k * 0.02) } else { k * xi + rng.gen_range(-0.01..0.01) });
        }
        let fit = estimate_stiffness(&x, &f, &RansacConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        worst = worst.max(rel(fit.k, k));
    }
    let mut defaults = Vec::new();
    let mut in_range = true;
    for o in &c.objects {
        let seq = c.seqs.iter().find(|s| s.object == o.name).unwrap();
        let (x, f) = stiffness_samples(seq, 0.5);
        let k = estimate_stiffness(&x, &f, &RansacConfig::default()).map_err(|e| e.to_string())?.k;
        // Round-off allowance at the range ends, where two defaults sit.
        in_range &= (148.0 * (1.0 - 1e-9)..=2156.0 * (1.0 + 1e-9)).contains(&k) && rel(k, o.stiffness) < 0.01;
        defaults.push(format!("{} {k:.1}", o.name));
    }
    check(
        worst < 0.01 && in_range,
        format!("100 trials with 20% outliers, max error {:.3}%; defaults: {}", worst * 100.0, defaults.join(", ")),
    )
}

fn c9_alignment(c: &Corpus) -> Outcome {
    let ticks = |rate: f64, n: usize, off: f64| (0..n).map(|i| i as f64 / rate + off).collect::<Vec<f64>>();
    let mut ideal = 0.0f64;
    for k in 0..=10 {
        let off = k as f64 / 10.0 * (0.5 / 120.0) * 0.999_999;
        let a = align_streams(&ticks(120.0, 1200, 0.0), &ticks(30.0, 300, off), 0.5 / 120.0).map_err(|e| e.to_string())?;
        if !a.unpaired.is_empty() {
            return Err(format!("offset {off}: {} ticks unpaired", a.unpaired.len()));
        }
        ideal = ideal.max(a.max_error());
    }
    let mut oracle_ok = true;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rt: Vec<f64> = (0..600).map(|i| i as f64 / 120.0 + rng.gen_range(-0.002..0.002)).collect();
        rt.sort_by(f64::total_cmp);
        let ct: Vec<f64> = (0..150).map(|i| i as f64 / 30.0 + rng.gen_range(-0.005..0.005)).collect();
        let a = align_streams(&rt, &ct, 1.0).map_err(|e| e.to_string())?;
        for p in &a.pairs {
            let best = rt.iter().map(|r| (r - ct[p.camera]).abs()).fold(f64::INFINITY, f64::min);
            oracle_ok &= p.error == best && (rt[p.robot] - ct[p.camera]).abs() == best;
        }
    }
    let mut seq = c.seqs[0].clone();
    for (i, f) in seq.frames.iter_mut().enumerate() {
        let r = f.robot.as_mut().ok_or("corpus frame without robot reading")?;
        r.force = Vec3::new(if i % 5 < 2 { 3.0 } else { 0.1 }, 0.0, 0.0);
    }
    let total = seq.frames.len();
    let cur = curate_contact_frames(&seq, 0.5).map_err(|e| e.to_string())?;
    let exact = cur.retained * 5 == total * 2 && total % 5 == 0;
    check(
        ideal <= 1.0 / 240.0 && oracle_ok && exact,
        format!(
            "ideal max error {:.3} ms, oracle agreement {oracle_ok}, curation kept {}/{} frames",
            ideal * 1e3,
            cur.retained,
            total
        ),
    )
}

fn c10_scatter(c: &Corpus) -> Outcome {
    let split = split_dataset(&c.seqs, 0).map_err(|e| e.to_string())?;
    let opts = EvalOptions { max_frames_per_sequence: Some(10), samples: 2000, ..EvalOptions::default() };
    let ev = evaluate_with(&c.seqs, &split.validation, &opts, |seq, _, _| Ok(seq.template.clone())).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("scatter.csv");
    write_scatter_csv(&ev.identity_scatter, &path).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header_ok = lines.next() == Some("object,d_J,J");
    let mut rows = 0;
    let mut exact = true;
    for l in lines {
        let cells: Vec<&str> = l.split(',').collect();
        let (d, j): (f64, f64) = (cells[1].parse().map_err(|_| l.to_string())?, cells[2].parse().map_err(|_| l.to_string())?);
        exact &= j == 1.0 - d;
        rows += 1;
    }
    check(header_ok && rows > 0 && exact, format!("{rows} identity rows, J == 1 - d_J on every row: {exact}"))
}

fn main() {
    // Numeric arguments select criteria; other libtest flags are ignored.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    let t0 = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let t = Instant::now();
        let r = f();
        let status = if r.is_ok() { "PASS" } else { "FAIL" };
        let detail = r.as_ref().unwrap_or_else(|e| e);
        println!("criterion {id:2} {name}: {status} ({:.0} s) {detail}", t.elapsed().as_secs_f64());
        results.push((id, name, r));
    };
    run(1, "loss and metric oracles", &mut c1_oracles);
    run(2, "jaccard correctness", &mut c2_jaccard);
    run(3, "flow homeomorphism", &mut c3_flow);
    run(4, "gradient integrity", &mut c4_gradients);
    let c = corpus();
    run(8, "stiffness recovery", &mut || c8_stiffness(&c));
    run(9, "stream alignment and curation", &mut || c9_alignment(&c));
    run(10, "deformation scatter output", &mut || c10_scatter(&c));
    run(7, "inference-rate ordering", &mut c7_rates);
    let mut runs: Vec<(Modality, Result<(Evaluation, f64), String>)> = Vec::new();
    if wanted(5) || wanted(6) {
        let modalities = if wanted(6) { &[Modality::PcDense, Modality::PcSparse, Modality::PcSensor][..] } else { &[Modality::PcDense] };
        runs = modalities.iter().map(|&m| (m, train_eval(&c, m))).collect();
    }
    run(5, "synthetic end-to-end learning", &mut || c5_learning(&c, &runs[0].1));
    run(6, "modality trend", &mut || c6_trend(&runs));

    results.sort_by_key(|r| r.0);
    let failed: Vec<String> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0.to_string()).collect();
    println!("\nsummary ({:.0} s):", t0.elapsed().as_secs_f64());
    for (id, name, r) in &results {
        println!("  {id:2} {name}: {}", if r.is_ok() { "PASS" } else { "FAIL" });
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
