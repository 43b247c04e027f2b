//! C interface to `flexmesh`.
//!
//! Meshes and models are opaque handles created and released through this
//! API. Every fallible call returns an [`FmStatus`]; on failure the message
//! is available from [`fm_last_error`] on the same thread until the next
//! failing call. Coordinates are packed `x, y, z` doubles.

use std::cell::RefCell;
use std::error::Error;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use flexmesh::encoders::{DepthImage, HistoryBuffer};
use flexmesh::mesh::{load_obj, save_obj};
use flexmesh::metrics::{cd_ul1, jaccard_index};
use flexmesh::pipeline::{Model, Observation, RobotReading};
use flexmesh::synth::{estimate_stiffness, RansacConfig};
use flexmesh::{TriangleMesh, Vec3};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Panic = 5,
}

/// Triangle mesh handle.
pub struct FmMesh(TriangleMesh);

/// Trained model handle.
pub struct FmModel(Model);

/// One observation frame for [`fm_model_infer`]. Unused inputs may be null
/// or zero; which ones are required depends on the model's modality.
#[repr(C)]
pub struct FmFrame {
    /// `point_count * 3` doubles, or null.
    pub points: *const f64,
    pub point_count: usize,
    /// Row-major `depth_width * depth_height` depths, or null.
    pub depth: *const f64,
    pub depth_width: usize,
    pub depth_height: usize,
    /// Nonzero when `force` and `contact` hold a robot reading.
    pub has_robot: i32,
    pub force: [f64; 3],
    pub contact: [f64; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FmStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: FmStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn classify(e: &(dyn Error + 'static)) -> FmStatus {
    let mut cur = Some(e);
    while let Some(err) = cur {
        if err.is::<std::io::Error>() {
            return FmStatus::Io;
        }
        cur = err.source();
    }
    FmStatus::Data
}

fn lib_err<E: Error + 'static>(e: E) -> Failure {
    Failure(classify(&e), e.to_string())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|s| *s.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> FfiResult<PathBuf> {
    if p.is_null() {
        return fail(FmStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(FmStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

unsafe fn doubles<'a>(p: *const f64, n: usize, what: &str) -> FfiResult<&'a [f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FmStatus::NullPointer, format!("{what} is null"));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn points<'a>(p: *const f64, n: usize, what: &str) -> FfiResult<Vec<Vec3>> {
    let Some(len) = n.checked_mul(3) else { return fail(FmStatus::InvalidArgument, format!("{what}: count overflows")) };
    Ok(doubles(p, len, what)?.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().map_or_else(|| fail(FmStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().map_or_else(|| fail(FmStatus::NullPointer, format!("{what} is null")), Ok)
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|s| s.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a mesh from `vertex_count * 3` coordinates and `face_count * 3`
/// zero-based vertex indices.
///
/// # Safety
/// Array pointers must be valid for the given counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_new(
    vertices: *const f64,
    vertex_count: usize,
    faces: *const u32,
    face_count: usize,
    out_mesh: *mut *mut FmMesh,
) -> FmStatus {
    guard(|| {
        let dst = out(out_mesh, "out_mesh")?;
        let v = points(vertices, vertex_count, "vertices")?;
        if face_count > 0 && faces.is_null() {
            return fail(FmStatus::NullPointer, "faces is null");
        }
        let Some(n) = face_count.checked_mul(3) else { return fail(FmStatus::InvalidArgument, "face count overflows") };
        let idx = if n == 0 { &[][..] } else { slice::from_raw_parts(faces, n) };
        let f = idx.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect();
        let mesh = TriangleMesh::new("ffi", v, f).map_err(lib_err)?;
        *dst = Box::into_raw(Box::new(FmMesh(mesh)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_mesh` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_load_obj(path: *const c_char, out_mesh: *mut *mut FmMesh) -> FmStatus {
    guard(|| {
        let dst = out(out_mesh, "out_mesh")?;
        let mesh = load_obj(path_arg(path)?).map_err(lib_err)?;
        *dst = Box::into_raw(Box::new(FmMesh(mesh)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_save_obj(mesh: *const FmMesh, path: *const c_char) -> FmStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        save_obj(&m.0, path_arg(path)?).map_err(lib_err)
    })
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_vertex_count(mesh: *const FmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertex_count())
}

/// Face count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_face_count(mesh: *const FmMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.face_count())
}

/// Copies vertex coordinates into `out`, which must hold `vertex_count * 3`
/// doubles.
///
/// # Safety
/// `out` must be writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_vertices(mesh: *const FmMesh, out_coords: *mut f64, capacity: usize) -> FmStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        let need = m.0.vertex_count() * 3;
        if capacity < need {
            return fail(FmStatus::InvalidArgument, format!("buffer holds {capacity} doubles, need {need}"));
        }
        if out_coords.is_null() {
            return fail(FmStatus::NullPointer, "out_coords is null");
        }
        let dst = slice::from_raw_parts_mut(out_coords, need);
        for (d, v) in dst.chunks_exact_mut(3).zip(m.0.vertices()) {
            d.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_mesh_free(mesh: *mut FmMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Volumetric Jaccard index of two watertight meshes on a `resolution`³
/// grid over their joint bounding box.
///
/// # Safety
/// Handles must come from this library; `out_j` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_jaccard_index(
    a: *const FmMesh,
    b: *const FmMesh,
    resolution: usize,
    out_j: *mut f64,
) -> FmStatus {
    guard(|| {
        let dst = out(out_j, "out_j")?;
        *dst = jaccard_index(&handle(a, "a")?.0, &handle(b, "b")?.0, resolution).map_err(lib_err)?;
        Ok(())
    })
}

/// Unidirectional L1 chamfer distance from `p` to `q`, in millimetres for
/// inputs in metres.
///
/// # Safety
/// `p` and `q` must hold `3 * count` doubles; `out_mm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_chamfer_l1(
    p: *const f64,
    p_count: usize,
    q: *const f64,
    q_count: usize,
    out_mm: *mut f64,
) -> FmStatus {
    guard(|| {
        let dst = out(out_mm, "out_mm")?;
        *dst = cd_ul1(&points(p, p_count, "p")?, &points(q, q_count, "q")?).map_err(lib_err)?;
        Ok(())
    })
}

/// Hooke stiffness `k` (N/m) from displacement (m) and force (N) pairs by
/// zero-intercept RANSAC.
///
/// # Safety
/// `displacement` and `force` must hold `count` doubles; `out_k` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fm_estimate_stiffness(
    displacement: *const f64,
    force: *const f64,
    count: usize,
    iterations: usize,
    inlier_tol: f64,
    seed: u64,
    out_k: *mut f64,
) -> FmStatus {
    guard(|| {
        let dst = out(out_k, "out_k")?;
        let x = doubles(displacement, count, "displacement")?;
        let f = doubles(force, count, "force")?;
        let cfg = RansacConfig { iterations, inlier_tol, seed };
        *dst = estimate_stiffness(x, f, &cfg).map_err(lib_err)?.k;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_model_load(path: *const c_char, out_model: *mut *mut FmModel) -> FmStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let (model, _) = Model::load(&path_arg(path)?).map_err(lib_err)?;
        *dst = Box::into_raw(Box::new(FmModel(model)));
        Ok(())
    })
}

/// Observation frames the model attends over, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn fm_model_history(model: *const FmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config().history)
}

unsafe fn observation(f: &FmFrame) -> FfiResult<Observation> {
    let pts = (f.point_count > 0).then(|| points(f.points, f.point_count, "frame points")).transpose()?;
    let image = if f.depth_width > 0 || f.depth_height > 0 {
        let Some(n) = f.depth_width.checked_mul(f.depth_height) else {
            return fail(FmStatus::InvalidArgument, "depth size overflows");
        };
        let d = doubles(f.depth, n, "frame depth")?.to_vec();
        Some(DepthImage::new(f.depth_width, f.depth_height, d).map_err(lib_err)?)
    } else {
        None
    };
    let robot = (f.has_robot != 0).then(|| RobotReading {
        force: Vec3::from(f.force),
        contact: Vec3::from(f.contact),
    });
    Ok(Observation { points: pts, image, robot })
}

/// Deforms `template` from the most recent `frame_count` frames, oldest
/// first, and returns the result as a new mesh.
///
/// # Safety
/// Handles must come from this library; `frames` must hold `frame_count`
/// entries whose arrays are valid for their counts.
#[no_mangle]
pub unsafe extern "C" fn fm_model_infer(
    model: *const FmModel,
    template: *const FmMesh,
    frames: *const FmFrame,
    frame_count: usize,
    out_mesh: *mut *mut FmMesh,
) -> FmStatus {
    guard(|| {
        let dst = out(out_mesh, "out_mesh")?;
        let m = &handle(model, "model")?.0;
        let t = &handle(template, "template")?.0;
        if frame_count == 0 {
            return fail(FmStatus::InvalidArgument, "no frames");
        }
        if frames.is_null() {
            return fail(FmStatus::NullPointer, "frames is null");
        }
        let mut buf = HistoryBuffer::new(m.config().history);
        for f in slice::from_raw_parts(frames, frame_count) {
            buf.push(observation(f)?);
        }
        let mesh = m.infer(t, &buf).map_err(lib_err)?;
        *dst = Box::into_raw(Box::new(FmMesh(mesh)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_model_free(model: *mut FmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
