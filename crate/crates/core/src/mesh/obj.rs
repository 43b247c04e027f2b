//! ASCII Wavefront OBJ (v / f records, 1-based indices).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MeshError, Result, TriangleMesh, Vec3};

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&text, &name)
}

/// Parses OBJ text. Polygons with more than three corners are fan-triangulated;
/// texture/normal indices (`f 1/2/3 ...`) are ignored. Negative indices are
/// resolved relative to the current vertex count.
pub fn parse_obj(text: &str, name: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut mesh_name = name.to_string();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| MeshError::Parse {
                            line,
                            message: format!("bad coordinate '{t}'"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(MeshError::Parse { line, message: "vertex needs 3 coordinates".into() });
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("bad face index '{tok}'"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(MeshError::Parse { line, message: "face index 0 is invalid".into() });
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("face index {idx} out of range ({} vertices)", vertices.len()),
                        });
                    }
                    corners.push(resolved as usize);
                }
                if corners.len() < 3 {
                    return Err(MeshError::Parse { line, message: "face needs at least 3 corners".into() });
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            "o" | "g" => {
                if let Some(n) = tokens.next() {
                    mesh_name = n.to_string();
                }
            }
            // vt, vn, s, usemtl, mtllib: not needed
            _ => {}
        }
    }
    TriangleMesh::new(mesh_name, vertices, faces)
}

/// Serializes vertices then faces. Coordinates use Rust's shortest
/// round-trip float formatting, so a save/load cycle is exact.
pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    if !mesh.name.is_empty() {
        let _ = writeln!(out, "o {}", mesh.name);
    }
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh)).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}
