use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use flexmesh::mesh::{make_primitive, save_obj, Primitive};
use flexmesh::pipeline::{Modality, Model, ModelConfig};
use flexmesh::Vec3;
use flexmesh_ffi::*;

fn last_error() -> String {
    let p = fm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cube_arrays(offset: f64) -> (Vec<f64>, Vec<u32>) {
    let m = make_primitive(&Primitive::Box { size: Vec3::new(1.0, 1.0, 1.0) }, 1).unwrap();
    let v = m.vertices().iter().flat_map(|p| [p.x + offset, p.y, p.z]).collect();
    let f = m.faces().iter().flat_map(|f| f.map(|i| i as u32)).collect();
    (v, f)
}

unsafe fn new_mesh(v: &[f64], f: &[u32]) -> *mut FmMesh {
    let mut m = ptr::null_mut();
    assert_eq!(fm_mesh_new(v.as_ptr(), v.len() / 3, f.as_ptr(), f.len() / 3, &mut m), FmStatus::Ok);
    m
}

#[test]
fn mesh_roundtrip_and_jaccard() {
    unsafe {
        let (v, f) = cube_arrays(0.0);
        let a = new_mesh(&v, &f);
        assert_eq!(fm_mesh_vertex_count(a), v.len() / 3);
        assert_eq!(fm_mesh_face_count(a), f.len() / 3);
        let mut back = vec![0.0; v.len()];
        assert_eq!(fm_mesh_vertices(a, back.as_mut_ptr(), back.len()), FmStatus::Ok);
        assert_eq!(back, v);
        assert_eq!(fm_mesh_vertices(a, back.as_mut_ptr(), 2), FmStatus::InvalidArgument);

        let (v2, f2) = cube_arrays(0.5);
        let b = new_mesh(&v2, &f2);
        let mut j = 0.0;
        assert_eq!(fm_jaccard_index(a, a, 32, &mut j), FmStatus::Ok);
        assert!((j - 1.0).abs() < 0.02, "{j}");
        assert_eq!(fm_jaccard_index(a, b, 64, &mut j), FmStatus::Ok);
        assert!((j - 1.0 / 3.0).abs() < 0.02, "{j}");

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("a.obj").to_str().unwrap()).unwrap();
        assert_eq!(fm_mesh_save_obj(a, path.as_ptr()), FmStatus::Ok);
        let mut c = ptr::null_mut();
        assert_eq!(fm_mesh_load_obj(path.as_ptr(), &mut c), FmStatus::Ok);
        assert_eq!(fm_mesh_face_count(c), f.len() / 3);
        fm_mesh_free(a);
        fm_mesh_free(b);
        fm_mesh_free(c);
    }
}

#[test]
fn status_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(fm_mesh_load_obj(ptr::null(), &mut m), FmStatus::NullPointer);
        let missing = CString::new("/nonexistent/flexmesh/x.obj").unwrap();
        assert_eq!(fm_mesh_load_obj(missing.as_ptr(), &mut m), FmStatus::Io);
        assert!(last_error().contains("/nonexistent/flexmesh/x.obj"));
        assert!(m.is_null());

        let v = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let bad = [0u32, 1, 7];
        assert_eq!(fm_mesh_new(v.as_ptr(), 3, bad.as_ptr(), 1, &mut m), FmStatus::Data);
        assert!(!last_error().is_empty());

        let mut j = 0.0;
        assert_eq!(fm_jaccard_index(ptr::null(), ptr::null(), 16, &mut j), FmStatus::NullPointer);
        assert_eq!(fm_mesh_vertex_count(ptr::null()), 0);
        fm_mesh_free(ptr::null_mut());
        fm_model_free(ptr::null_mut());
    }
}

#[test]
fn chamfer_and_stiffness() {
    unsafe {
        let p = [0.0, 0.0, 0.0];
        let q = [0.001, 0.002, 0.003];
        let mut cd = 0.0;
        assert_eq!(fm_chamfer_l1(p.as_ptr(), 1, q.as_ptr(), 1, &mut cd), FmStatus::Ok);
        assert!((cd - 6.0).abs() < 1e-9, "{cd}");
        assert_eq!(fm_chamfer_l1(p.as_ptr(), 0, q.as_ptr(), 1, &mut cd), FmStatus::Data);

        let x: Vec<f64> = (1..=20).map(|i| i as f64 * 0.001).collect();
        let f: Vec<f64> = x.iter().map(|x| 500.0 * x).collect();
        let mut k = 0.0;
        assert_eq!(fm_estimate_stiffness(x.as_ptr(), f.as_ptr(), x.len(), 200, 0.1, 0, &mut k), FmStatus::Ok);
        assert!((k - 500.0).abs() < 1e-9, "{k}");
    }
}

#[test]
fn model_inference() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("robot.ckpt");
    let cfg = ModelConfig { modality: Modality::Robot, ..ModelConfig::default() };
    Model::new(cfg, 3).unwrap().save(&ckpt, Default::default()).unwrap();
    let template = make_primitive(&Primitive::Sphere { radius: 0.05 }, 1).unwrap();
    save_obj(&template, dir.path().join("t.obj")).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        let path = CString::new(ckpt.to_str().unwrap()).unwrap();
        assert_eq!(fm_model_load(path.as_ptr(), &mut model), FmStatus::Ok);
        assert_eq!(fm_model_history(model), 5);

        let mut t = ptr::null_mut();
        let tp = CString::new(dir.path().join("t.obj").to_str().unwrap()).unwrap();
        assert_eq!(fm_mesh_load_obj(tp.as_ptr(), &mut t), FmStatus::Ok);

        let frame = |has_robot| FmFrame {
            points: ptr::null(),
            point_count: 0,
            depth: ptr::null(),
            depth_width: 0,
            depth_height: 0,
            has_robot,
            force: [1.0, 0.0, 0.0],
            contact: [0.05, 0.0, 0.0],
        };
        let frames = [frame(1), frame(1)];
        let mut out = ptr::null_mut();
        assert_eq!(fm_model_infer(model, t, frames.as_ptr(), 2, &mut out), FmStatus::Ok);
        assert_eq!(fm_mesh_vertex_count(out), template.vertex_count());
        // Freshly initialized flows are the identity map.
        let mut v = vec![0.0; template.vertex_count() * 3];
        assert_eq!(fm_mesh_vertices(out, v.as_mut_ptr(), v.len()), FmStatus::Ok);
        for (c, p) in v.chunks(3).zip(template.vertices()) {
            assert!((Vec3::new(c[0], c[1], c[2]) - p).norm() < 1e-9);
        }
        fm_mesh_free(out);

        let missing = [frame(0)];
        let mut out = ptr::null_mut();
        assert_eq!(fm_model_infer(model, t, missing.as_ptr(), 1, &mut out), FmStatus::Data);
        assert!(last_error().contains("robot"));
        assert_eq!(fm_model_infer(model, t, missing.as_ptr(), 0, &mut out), FmStatus::InvalidArgument);
        fm_mesh_free(t);
        fm_model_free(model);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/flexmesh.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["fm_mesh_new", "fm_model_infer", "fm_last_error", "FM_STATUS_IO", "typedef struct FmMesh FmMesh"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"flexmesh.h\"\nint main(void) { FmMesh *m = 0; return (int)fm_mesh_face_count(m); }\n")
        .unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler, syntax check skipped");
        return;
    };
    assert!(status.success());
}
