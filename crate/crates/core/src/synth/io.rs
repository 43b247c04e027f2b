//! On-disk sequence layout:
//!
//! ```text
//! <dir>/manifest.json      object, protocol, rates, seed, stiffness, config, frame table
//! <dir>/template.obj
//! <dir>/frames/NNNN.obj    ground-truth meshes
//! <dir>/clouds/NNNN.ply    sensor clouds (optional)
//! <dir>/depth/NNNN.pgm     16-bit depth in millimeters, 65535 = background (optional)
//! <dir>/robot.csv          raw robot log (poking only)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{align_robot_stream, FrameSample, Protocol, Result, Sequence, SynthError};
use crate::encoders::{DepthImage, RobotFrame};
use crate::mesh::{load_obj, load_pointcloud, save_obj, save_pointcloud_ply};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub t: f64,
    pub in_contact: bool,
    pub mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub object: String,
    pub protocol: Protocol,
    pub fps: f64,
    pub seed: u64,
    pub stiffness: f64,
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_rate: Option<f64>,
    /// Effective generation config.
    pub config: serde_json::Value,
    pub frames: Vec<FrameEntry>,
}

pub const MANIFEST: &str = "manifest.json";
const ROBOT_CSV: &str = "robot.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> SynthError {
    SynthError::Format { path: path.to_path_buf(), message: message.into() }
}

/// Writes `seq` under `dir`, creating it. `config` is echoed into the
/// manifest.
pub fn write_sequence(seq: &Sequence, dir: &Path, config: &serde_json::Value) -> Result<()> {
    for sub in ["frames", "clouds", "depth"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    save_obj(&seq.template, dir.join("template.obj"))?;
    let mut entries = Vec::with_capacity(seq.frames.len());
    for f in &seq.frames {
        let mesh = format!("frames/{:04}.obj", f.index);
        save_obj(&f.mesh, dir.join(&mesh))?;
        let cloud = match &f.cloud {
            Some(c) => {
                let rel = format!("clouds/{:04}.ply", f.index);
                save_pointcloud_ply(c, dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        let depth = match &f.depth {
            Some(d) => {
                let rel = format!("depth/{:04}.pgm", f.index);
                save_depth_pgm(d, &dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        entries.push(FrameEntry { index: f.index, t: f.t, in_contact: f.in_contact, mesh, cloud, depth });
    }
    let robot_rate = if seq.robot_stream.is_empty() {
        None
    } else {
        let mut out = String::from(RobotFrame::CSV_HEADER);
        out.push('\n');
        for r in &seq.robot_stream {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        let p = dir.join(ROBOT_CSV);
        fs::write(&p, out).map_err(io_err(&p))?;
        let span = seq.robot_stream.last().unwrap().t - seq.robot_stream[0].t;
        Some(if span > 0.0 { (seq.robot_stream.len() - 1) as f64 / span } else { 1.0 })
    };
    let manifest = SequenceManifest {
        object: seq.object.clone(),
        protocol: seq.protocol,
        fps: seq.fps,
        seed: seq.seed,
        stiffness: seq.stiffness,
        template: "template.obj".into(),
        robot_rate,
        config: config.clone(),
        frames: entries,
    };
    let p = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| format_err(&p, e.to_string()))?;
    fs::write(&p, text).map_err(io_err(&p))
}

pub fn read_manifest(dir: &Path) -> Result<SequenceManifest> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| format_err(&p, e.to_string()))
}

/// Loads a sequence written by [`write_sequence`]; robot readings are
/// re-paired to camera ticks from the raw log.
pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let m = read_manifest(dir)?;
    let mut template = load_obj(dir.join(&m.template))?;
    template.name = m.object.clone();
    let (robot_stream, rate) = match m.robot_rate {
        Some(rate) => (read_robot_csv(&dir.join(ROBOT_CSV))?, rate),
        None => (Vec::new(), 1.0),
    };
    let cam_t: Vec<f64> = m.frames.iter().map(|e| e.t).collect();
    let mut paired = vec![None; m.frames.len()];
    if !robot_stream.is_empty() && !cam_t.is_empty() {
        for p in align_robot_stream(&robot_stream, &cam_t, 0.5 / rate + 1e-9)?.pairs {
            paired[p.camera] = Some(robot_stream[p.robot]);
        }
    }
    let mut frames = Vec::with_capacity(m.frames.len());
    for (e, robot) in m.frames.iter().zip(paired) {
        let path = dir.join(&e.mesh);
        let mesh = load_obj(&path)?;
        if mesh.faces() != template.faces() {
            return Err(format_err(&path, "frame topology differs from the template"));
        }
        let mesh = template.with_vertices(mesh.vertices().to_vec())?;
        let cloud = e.cloud.as_ref().map(|c| load_pointcloud(dir.join(c))).transpose()?;
        let depth = e.depth.as_ref().map(|d| load_depth(&dir.join(d))).transpose()?;
        frames.push(FrameSample { index: e.index, t: e.t, mesh, cloud, depth, robot, in_contact: e.in_contact });
    }
    Ok(Sequence {
        object: m.object,
        protocol: m.protocol,
        fps: m.fps,
        seed: m.seed,
        stiffness: m.stiffness,
        template,
        frames,
        robot_stream,
    })
}

/// Every sequence directory directly under `root`, in name order.
pub fn read_sequences(root: &Path) -> Result<Vec<Sequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(format_err(root, "no sequence directories"));
    }
    dirs.iter().map(|d| read_sequence(d)).collect()
}

fn read_robot_csv(path: &Path) -> Result<Vec<RobotFrame>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RobotFrame::CSV_HEADER) {
        return Err(format_err(path, "missing robot CSV header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| RobotFrame::from_csv_row(l).ok_or_else(|| format_err(path, format!("bad row {}", i + 2))))
        .collect()
}

const PGM_BACKGROUND: u16 = u16::MAX;

/// Binary 16-bit PGM of depth in millimeters; background is 65535.
pub fn save_depth_pgm(img: &DepthImage, path: &Path) -> Result<()> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    for &d in &img.depth {
        let v = if DepthImage::is_background(d) { PGM_BACKGROUND } else { (d * 1000.0).round().clamp(0.0, 65534.0) as u16 };
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_depth_pgm(path: &Path) -> Result<DepthImage> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P5") {
        return Err(format_err(path, "not a binary PGM"));
    }
    let mut num = || token().and_then(|t| t.parse::<usize>().ok());
    let (w, h, maxval) = match (num(), num(), num()) {
        (Some(w), Some(h), Some(m)) if w > 0 && h > 0 && (1..=65535).contains(&m) => (w, h, m),
        _ => return Err(format_err(path, "bad PGM header")),
    };
    let data = &bytes[pos + 1..];
    let bpp = if maxval > 255 { 2 } else { 1 };
    if data.len() < w * h * bpp {
        return Err(format_err(path, "truncated PGM"));
    }
    let depth = (0..w * h)
        .map(|i| {
            let v = if bpp == 2 { u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as usize } else { data[i] as usize };
            if v == maxval {
                DepthImage::BACKGROUND
            } else {
                v as f64 / 1000.0
            }
        })
        .collect();
    Ok(DepthImage { width: w, height: h, depth })
}

/// One row per image row, meters, `inf` for background.
pub fn save_depth_csv(img: &DepthImage, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in img.depth.chunks(img.width) {
        for (i, d) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if DepthImage::is_background(*d) {
                out.push_str("inf");
            } else {
                let _ = write!(out, "{d}");
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_depth_csv(path: &Path) -> Result<DepthImage> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut width = 0;
    let mut depth = Vec::new();
    let mut height = 0;
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", i + 1)))?;
        if i == 0 {
            width = row.len();
        } else if row.len() != width {
            return Err(format_err(path, format!("row {} has {} values, expected {width}", i + 1, row.len())));
        }
        depth.extend(row.into_iter().map(|d| if DepthImage::is_background(d) { DepthImage::BACKGROUND } else { d }));
        height += 1;
    }
    DepthImage::new(width, height, depth).map_err(|e| format_err(path, e.to_string()))
}

/// PGM or CSV by extension.
pub fn load_depth(path: &Path) -> Result<DepthImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => load_depth_csv(path),
        _ => load_depth_pgm(path),
    }
}
