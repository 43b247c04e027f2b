use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MeshError, Result, Vec3};

/// Sensor or sampled point set. `valid`, when present, marks usable points
/// (depth sensors drop returns).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub valid: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        Ok(Self { points, valid: None })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points that pass the validity mask.
    pub fn valid_points(&self) -> Vec<Vec3> {
        match &self.valid {
            None => self.points.clone(),
            Some(mask) => self
                .points
                .iter()
                .zip(mask)
                .filter(|(_, &ok)| ok)
                .map(|(p, _)| *p)
                .collect(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MeshError + '_ {
    move |source| MeshError::Io { path: path.to_path_buf(), source }
}

pub fn save_pointcloud_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pts = cloud.valid_points();
    let mut out = String::with_capacity(pts.len() * 40 + 128);
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        pts.len()
    );
    for p in &pts {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn save_pointcloud_csv(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in cloud.valid_points() {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Loads an ASCII PLY (vertex x y z as the first three properties) or a CSV
/// of `x,y,z` rows, chosen by extension.
pub fn load_pointcloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let is_ply = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let points = if is_ply { parse_ply(&text)? } else { parse_csv(&text)? };
    PointCloud::new(points)
}

fn parse_xyz(fields: &[&str], line: usize) -> Result<Vec3> {
    if fields.len() < 3 {
        return Err(MeshError::Parse { line, message: "expected x y z".into() });
    }
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = fields[k].trim().parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("bad coordinate '{}'", fields[k]),
        })?;
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

fn parse_csv(text: &str) -> Result<Vec<Vec3>> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_t = line.trim();
        if line_t.is_empty() || line_t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line_t.split(',').collect();
        // tolerate a header row
        if i == 0 && fields[0].trim().parse::<f64>().is_err() {
            continue;
        }
        pts.push(parse_xyz(&fields, i + 1)?);
    }
    Ok(pts)
}

fn parse_ply(text: &str) -> Result<Vec<Vec3>> {
    let mut lines = text.lines().enumerate();
    let mut count = None;
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(MeshError::Parse { line: 1, message: "missing ply magic".into() }),
    }
    for (i, l) in lines.by_ref() {
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(MeshError::Parse { line: i + 1, message: "only ascii ply is supported".into() })
            }
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| MeshError::Parse {
                    line: i + 1,
                    message: "bad vertex count".into(),
                })?)
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or(MeshError::Parse { line: 0, message: "no vertex element".into() })?;
    let mut pts = Vec::with_capacity(count);
    for (i, l) in lines.take(count) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        pts.push(parse_xyz(&fields, i + 1)?);
    }
    if pts.len() != count {
        return Err(MeshError::Parse { line: 0, message: format!("expected {count} vertices, found {}", pts.len()) });
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_and_csv_round_trip() {
        let cloud = PointCloud::new(vec![Vec3::new(0.1, -2.5, 3.0), Vec3::new(1e-7, 0.0, 42.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["c.ply", "c.csv"] {
            let path = dir.path().join(name);
            if name.ends_with("ply") {
                save_pointcloud_ply(&cloud, &path).unwrap();
            } else {
                save_pointcloud_csv(&cloud, &path).unwrap();
            }
            assert_eq!(load_pointcloud(&path).unwrap().points, cloud.points);
        }
    }

    #[test]
    fn mask_filters_saved_points() {
        let mut cloud = PointCloud::new(vec![Vec3::x(), Vec3::y()]).unwrap();
        cloud.valid = Some(vec![false, true]);
        assert_eq!(cloud.valid_points(), vec![Vec3::y()]);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }
}
