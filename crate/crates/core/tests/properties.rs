//! Property tests over randomly drawn inputs.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flexmesh::flow::{points_tensor, tensor_points, ConditionalRealNvp, FlowConfig, MaskScheme};
use flexmesh::mesh::{make_primitive, sample_surface, NormalizationTransform, Primitive};
use flexmesh::metrics::{cd_ul1, jaccard_index, total_loss_with_grad, ContactInfo};
use flexmesh::nn::{attention, cosine_lr, read_checkpoint, write_checkpoint, Graph, ParamStore, Tensor};
use flexmesh::synth::{align_streams, estimate_stiffness, RansacConfig};
use flexmesh::{TriangleMesh, Vec3};

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn boxed(size: Vec3, offset: Vec3) -> TriangleMesh {
    make_primitive(&Primitive::Box { size }, 2).unwrap().translated(&offset)
}

fn size() -> impl Strategy<Value = Vec3> {
    (0.05..2.0f64, 0.05..2.0f64, 0.05..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn random_params(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = store.flatten().iter().map(|_| rng.gen_range(-scale..scale)).collect();
    store.unflatten(&x).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn samples_replay_from_provenance(s in size(), n in 1usize..400, seed in any::<u64>()) {
        let mesh = boxed(s, Vec3::zeros());
        let sp = sample_surface(&mesh, n, seed).unwrap();
        prop_assert_eq!(sp.points.len(), n);
        for (p, prov) in sp.points.iter().zip(&sp.provenance) {
            prop_assert!(prov.bary.iter().all(|&w| w >= 0.0));
            prop_assert!((prov.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((prov.locate(&mesh) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn normalization_fits_unit_cube(s in size(), off in vec3()) {
        let mesh = boxed(s, off * 3.0);
        let t = NormalizationTransform::from_template(&mesh).unwrap();
        prop_assert!(t.scale > 0.0);
        let (lo, hi) = t.apply_mesh(&mesh).unwrap().bounding_box();
        let ext = hi - lo;
        prop_assert!((ext.max() - 1.0).abs() < 1e-12);
        prop_assert!(lo.iter().all(|&c| c >= -0.5 - 1e-12) && hi.iter().all(|&c| c <= 0.5 + 1e-12));
        for v in mesh.vertices() {
            prop_assert!((t.invert(&t.apply(v)) - v).norm() < 1e-12);
        }
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in size(), b in size(), off in vec3()) {
        let ma = boxed(a, Vec3::zeros());
        let mb = boxed(b, off);
        let ab = jaccard_index(&ma, &mb, 24).unwrap();
        let ba = jaccard_index(&mb, &ma, 24).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn total_loss_weights_and_signs(seed in any::<u64>(), shift in vec3(), radius in 0.05..1.0f64) {
        let template = make_primitive(&Primitive::Sphere { radius: 0.4 }, 2).unwrap();
        let gt_v: Vec<Vec3> = template.vertices().iter().map(|v| if v.x > 0.1 { v + shift * 0.1 } else { *v }).collect();
        let gt = template.with_vertices(gt_v).unwrap();
        let sp = sample_surface(&template, 300, seed).unwrap();
        let gt_samples = sp.replay(&gt).unwrap().points;
        let contact = ContactInfo::new(Vec3::new(0.4, 0.0, 0.0), radius, -0.3, Vec3::x()).unwrap();
        let r = total_loss_with_grad(template.vertices(), template.faces(), &sp.provenance, &gt, &gt_samples, &contact).unwrap();
        prop_assert!(r.pfd >= 0.0 && r.roi >= 0.0);
        prop_assert_eq!(r.total, r.pfd + 0.5 * r.roi);
        prop_assert!(r.grad.iter().all(|g| g.iter().all(|c| c.is_finite())));
        let same = total_loss_with_grad(gt.vertices(), gt.faces(), &sp.provenance, &gt, &gt_samples, &contact).unwrap();
        prop_assert!(same.roi == 0.0);
    }

    #[test]
    fn chamfer_nonnegative_and_zero_on_self(pts in prop::collection::vec(vec3(), 1..60), q in prop::collection::vec(vec3(), 1..60)) {
        prop_assert_eq!(cd_ul1(&pts, &pts).unwrap(), 0.0);
        prop_assert!(cd_ul1(&pts, &q).unwrap() >= 0.0);
    }

    #[test]
    fn coupling_keeps_masked_coordinates(seed in any::<u64>(), two in any::<bool>()) {
        let mask = if two { MaskScheme::TwoFixed } else { MaskScheme::OneFixed };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flow = ConditionalRealNvp::new(&mut store, FlowConfig { blocks: 3, hidden: 8, cond_dim: 3, mask, ..Default::default() }, &mut rng).unwrap();
        random_params(&mut store, seed ^ 1, 0.5);
        let pts: Vec<Vec3> = (0..40).map(|_| Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5))).collect();
        let cond = Tensor::row(vec![0.3, -0.2, 0.9]);
        for block in flow.blocks() {
            let mut g = Graph::new();
            let x = g.input(points_tensor(&pts));
            let c = g.input(cond.clone());
            let y = block.forward(&mut g, &store, x, c).unwrap();
            let back = block.inverse(&mut g, &store, y, c).unwrap();
            let out = tensor_points(g.value(y));
            for (a, b) in out.iter().zip(&pts) {
                for &k in &block.fixed {
                    prop_assert_eq!(a[k], b[k]);
                }
            }
            for (a, b) in tensor_points(g.value(back)).iter().zip(&pts) {
                prop_assert!((a - b).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn attention_ignores_key_order(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize| Tensor::matrix(r, 4, (0..r * 4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (q, k, v) = (m(1), m(n), m(n));
        let rev = |t: &Tensor| Tensor::from_rows(&(0..n).rev().map(|i| t.row_slice(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let mut g = Graph::new();
        let (qi, ki, vi) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
        let a = attention(&mut g, qi, ki, vi).unwrap();
        let (kr, vr) = (g.input(rev(&k)), g.input(rev(&v)));
        let b = attention(&mut g, qi, kr, vr).unwrap();
        for (x, y) in g.value(a).data().iter().zip(g.value(b).data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_schedule_bounded_and_decreasing(total in 1usize..300, lo in 1e-8..1e-5f64, hi in 1e-4..1e-2f64) {
        let mut prev = f64::INFINITY;
        for e in 0..=total {
            let lr = cosine_lr(e, total, hi, lo).unwrap();
            prop_assert!(lr >= lo * (1.0 - 1e-12) && lr <= hi * (1.0 + 1e-12));
            prop_assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50)) {
        let mut store = ParamStore::new();
        store.add("a", Tensor::row(vals.clone())).unwrap();
        store.add("b.c", Tensor::matrix(1, 2, vec![vals[0], -1.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, &serde_json::json!({"k": 1})).unwrap();
        let (back, meta) = read_checkpoint(&buf[..]).unwrap();
        prop_assert_eq!(meta["k"].as_u64(), Some(1));
        let bits = |s: &ParamStore| s.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&store));
    }

    #[test]
    fn alignment_pairs_within_tolerance(seed in any::<u64>(), tol in 0.001..0.02f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rt: Vec<f64> = (0..200).map(|i| i as f64 / 120.0 + rng.gen_range(-0.003..0.003)).collect();
        rt.sort_by(f64::total_cmp);
        let ct: Vec<f64> = (0..50).map(|i| i as f64 / 30.0 + rng.gen_range(-0.01..0.01)).collect();
        if let Ok(a) = align_streams(&rt, &ct, tol) {
            prop_assert_eq!(a.pairs.len() + a.unpaired.len(), ct.len());
            for p in &a.pairs {
                prop_assert!(p.error <= tol);
                prop_assert_eq!(p.error, (rt[p.robot] - ct[p.camera]).abs());
            }
        }
    }

    #[test]
    fn stiffness_exact_on_clean_data(k in 148.0..2156.0f64, n in 2usize..60) {
        let x: Vec<f64> = (1..=n).map(|i| i as f64 * 0.0005).collect();
        let f: Vec<f64> = x.iter().map(|x| k * x).collect();
        let fit = estimate_stiffness(&x, &f, &RansacConfig::default()).unwrap();
        prop_assert!((fit.k - k).abs() <= 1e-9 * k);
        prop_assert_eq!(fit.inliers, n);
    }
}
