//! Text file formats: maps, sensor sequences, ground truth, keyframes and
//! the CSV outputs.
//!
//! Parsing is strict. Every malformed line is collected with its line number
//! and the whole parse fails if any were found. Floats are written with 17
//! significant digits so that parse(write(x)) reproduces `x` bitwise.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::association::DetectionSet;
use crate::evaluation::{EvalError, FrameError, KeyframeSet};
use crate::frame::{FrameObservation, GpsFix, GroundTruth};
use crate::geometry::{Pose2, Vec2};
use crate::graph::engine::FrameRecord;
use crate::map::{LandmarkMap, MapError, Polyline};
use crate::weighting::FrameWeights;

pub const TRAJECTORY_HEADER: &str = "frame,x,y,theta,ex,ey";
pub const FRAMES_HEADER: &str = "frame,trans_err,rot_err,s,w_a,w_o,w_p";
pub const WEIGHTS_HEADER: &str = "frame,s,pairs,w_a,w_e,w_o,w_p,bias_obs_x,bias_obs_y,step_ms";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {error}")]
    Io { path: String, error: io::Error },
    #[error("{source_name}: {} error(s)\n{}", .errors.len(), join_lines(.errors))]
    Parse { source_name: String, errors: Vec<LineError> },
    #[error("{0}: no polylines")]
    NoPolylines(String),
    #[error("{source_name}: {error}")]
    Map { source_name: String, error: MapError },
}

fn join_lines(errors: &[LineError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl IoError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.display().to_string(), error: source }
    }

    /// Line-numbered problems, empty for non-parse errors.
    pub fn line_errors(&self) -> &[LineError] {
        match self {
            Self::Parse { errors, .. } => errors,
            _ => &[],
        }
    }
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| IoError::io(path, e))
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

fn float(tok: &str, what: &str) -> Result<f64, String> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("{what} must be finite, got '{tok}'")),
        Err(_) => Err(format!("{what}: '{tok}' is not a number")),
    }
}

fn frame_index(tok: &str) -> Result<u64, String> {
    tok.parse::<u64>().map_err(|_| format!("frame index '{tok}' is not a non-negative integer"))
}

fn arity(fields: &[&str], n: usize, usage: &str) -> Result<(), String> {
    if fields.len() == n {
        Ok(())
    } else {
        Err(format!("expected '{usage}', got {} field(s)", fields.len()))
    }
}

fn finish<T>(source_name: &str, errors: Vec<LineError>, value: T) -> Result<T, IoError> {
    if errors.is_empty() {
        Ok(value)
    } else {
        Err(IoError::Parse { source_name: source_name.to_string(), errors })
    }
}

// ---------------------------------------------------------------- map

pub fn parse_map_str(text: &str, source_name: &str) -> Result<Vec<Polyline>, IoError> {
    let mut polylines = Vec::new();
    let mut errors = Vec::new();
    for (line, fields) in records(text) {
        let parsed = (|| {
            if fields[0] != "P" {
                return Err(format!("unknown record type '{}'", fields[0]));
            }
            let coords = &fields[1..];
            if coords.len() < 4 || coords.len() % 2 != 0 {
                return Err(format!("polyline needs an even number (>= 4) of coordinates, got {}", coords.len()));
            }
            let mut vertices = Vec::with_capacity(coords.len() / 2);
            for pair in coords.chunks(2) {
                vertices.push(Vec2::new(float(pair[0], "x")?, float(pair[1], "y")?));
            }
            Polyline::new(vertices).map_err(|e| e.to_string())
        })();
        match parsed {
            Ok(p) => polylines.push(p),
            Err(message) => errors.push(LineError { line, message }),
        }
    }
    let polylines = finish(source_name, errors, polylines)?;
    if polylines.is_empty() {
        return Err(IoError::NoPolylines(source_name.to_string()));
    }
    Ok(polylines)
}

pub fn parse_map(path: &Path) -> Result<Vec<Polyline>, IoError> {
    parse_map_str(&read(path)?, &path.display().to_string())
}

/// Parses a map file and builds its landmarks.
pub fn load_map(path: &Path, resample_step: f64) -> Result<LandmarkMap, IoError> {
    let polylines = parse_map(path)?;
    LandmarkMap::from_polylines(polylines, resample_step)
        .map_err(|error| IoError::Map { source_name: path.display().to_string(), error })
}

pub fn map_to_string(polylines: &[Polyline]) -> String {
    let mut out = String::from("# geoloc map: P x1 y1 x2 y2 ...\n");
    for p in polylines {
        out.push('P');
        for v in p.vertices() {
            let _ = write!(out, " {} {}", fmt_f64(v.x), fmt_f64(v.y));
        }
        out.push('\n');
    }
    out
}

pub fn write_map(path: &Path, polylines: &[Polyline]) -> Result<(), IoError> {
    write_file(path, &map_to_string(polylines))
}

// ----------------------------------------------------------- sequence

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSequence {
    pub frames: Vec<FrameObservation>,
    /// Present when the file carries `T` records for every frame.
    pub gt: Option<GroundTruth>,
    pub source: PathBuf,
    /// Non-fatal notes about the content.
    pub diagnostics: Vec<String>,
}

pub fn parse_sequence_str(text: &str, source: &Path) -> Result<ParsedSequence, IoError> {
    let source_name = source.display().to_string();
    let mut frames: Vec<FrameObservation> = Vec::new();
    let mut truth: Vec<(u64, Pose2)> = Vec::new();
    let mut errors = Vec::new();
    for (line, fields) in records(text) {
        let result = (|| -> Result<(), String> {
            match fields[0] {
                "F" => {
                    arity(&fields, 6, "F <frame> ODO <dx> <dy> <dtheta>")?;
                    let frame = frame_index(fields[1])?;
                    if fields[2] != "ODO" {
                        return Err(format!("expected 'ODO' after the frame index, got '{}'", fields[2]));
                    }
                    let odometry = Pose2::new(float(fields[5], "dtheta")?, float(fields[3], "dx")?, float(fields[4], "dy")?);
                    if let Some(last) = frames.last() {
                        if frame <= last.frame_index {
                            return Err(format!("frame {frame} does not follow frame {}", last.frame_index));
                        }
                    }
                    frames.push(FrameObservation { frame_index: frame, odometry, detections: DetectionSet::new(frame, Vec::new()), gps: None });
                }
                "D" | "G" => {
                    let detection = fields[0] == "D";
                    if detection {
                        arity(&fields, 4, "D <frame> <x> <y>")?;
                    } else {
                        arity(&fields, 5, "G <frame> <x> <y> <sigma_xy>")?;
                    }
                    let frame = frame_index(fields[1])?;
                    let current = match frames.last_mut() {
                        Some(f) if f.frame_index == frame => f,
                        Some(f) if f.frame_index > frame => {
                            return Err(format!("{} record for frame {frame} appears after frame {}", fields[0], f.frame_index))
                        }
                        _ => return Err(format!("{} record for frame {frame} has no preceding F record", fields[0])),
                    };
                    let p = Vec2::new(float(fields[2], "x")?, float(fields[3], "y")?);
                    if detection {
                        current.detections.points.push(p);
                    } else {
                        let sigma_xy = float(fields[4], "sigma_xy")?;
                        if sigma_xy < 0.0 {
                            return Err(format!("sigma_xy must be >= 0, got {sigma_xy}"));
                        }
                        if current.gps.is_some() {
                            return Err(format!("duplicate G record for frame {frame}"));
                        }
                        current.gps = Some(GpsFix { position: p, sigma_xy });
                    }
                }
                "T" => {
                    let (frame, pose) = pose_record(&fields, "T")?;
                    if truth.last().is_some_and(|&(last, _)| frame <= last) {
                        return Err(format!("T record for frame {frame} is out of order"));
                    }
                    truth.push((frame, pose));
                }
                other => return Err(format!("unknown record type '{other}'")),
            }
            Ok(())
        })();
        if let Err(message) = result {
            errors.push(LineError { line, message });
        }
    }
    let mut diagnostics = Vec::new();
    let gt = if truth.is_empty() {
        None
    } else if truth.len() != frames.len() || truth.iter().zip(&frames).any(|((t, _), f)| *t != f.frame_index) {
        errors.push(LineError { line: 0, message: format!("T records cover {} frame(s) but the sequence has {}", truth.len(), frames.len()) });
        None
    } else {
        let (frame_indices, poses) = truth.into_iter().unzip();
        Some(GroundTruth { frame_indices, poses, bias: Vec::new() })
    };
    finish(&source_name, errors, ())?;
    let without_gps = frames.iter().filter(|f| f.gps.is_none()).count();
    if without_gps > 0 {
        diagnostics.push(format!("{without_gps} of {} frame(s) have no GPS fix", frames.len()));
    }
    let without_det = frames.iter().filter(|f| f.detections.is_empty()).count();
    if without_det > 0 {
        diagnostics.push(format!("{without_det} of {} frame(s) have no detections", frames.len()));
    }
    Ok(ParsedSequence { frames, gt, source: source.to_path_buf(), diagnostics })
}

pub fn parse_sequence(path: &Path) -> Result<ParsedSequence, IoError> {
    parse_sequence_str(&read(path)?, path)
}

pub fn sequence_to_string(frames: &[FrameObservation]) -> String {
    let mut out = String::from("# geoloc sequence: F <frame> ODO dx dy dtheta | G <frame> x y sigma_xy | D <frame> x y\n");
    for f in frames {
        let o = &f.odometry;
        let _ = writeln!(out, "F {} ODO {} {} {}", f.frame_index, fmt_f64(o.x()), fmt_f64(o.y()), fmt_f64(o.theta()));
        if let Some(g) = &f.gps {
            let _ = writeln!(out, "G {} {} {} {}", f.frame_index, fmt_f64(g.position.x), fmt_f64(g.position.y), fmt_f64(g.sigma_xy));
        }
        for d in &f.detections.points {
            let _ = writeln!(out, "D {} {} {}", f.frame_index, fmt_f64(d.x), fmt_f64(d.y));
        }
    }
    out
}

pub fn write_sequence(path: &Path, frames: &[FrameObservation]) -> Result<(), IoError> {
    write_file(path, &sequence_to_string(frames))
}

// -------------------------------------------------------- ground truth

fn pose_record(fields: &[&str], tag: &str) -> Result<(u64, Pose2), String> {
    arity(fields, 5, &format!("{tag} <frame> <x> <y> <theta>"))?;
    let frame = frame_index(fields[1])?;
    let pose = Pose2::new(float(fields[4], "theta")?, float(fields[2], "x")?, float(fields[3], "y")?);
    Ok((frame, pose))
}

/// Ground-truth file: `T <frame> <x> <y> <theta>` per frame, optionally
/// followed by `B <frame> <ex> <ey>` with the true GNSS bias of that frame.
/// Bias records must be given for all frames or none.
pub fn parse_ground_truth_str(text: &str, source_name: &str) -> Result<GroundTruth, IoError> {
    let mut gt = GroundTruth::default();
    let mut errors = Vec::new();
    let mut bias_frames = 0usize;
    for (line, fields) in records(text) {
        let result = (|| -> Result<(), String> {
            match fields[0] {
                "T" => {
                    let (frame, pose) = pose_record(&fields, "T")?;
                    if gt.frame_indices.last().is_some_and(|&last| frame <= last) {
                        return Err(format!("frame {frame} does not follow frame {}", gt.frame_indices.last().unwrap()));
                    }
                    gt.frame_indices.push(frame);
                    gt.poses.push(pose);
                }
                "B" => {
                    arity(&fields, 4, "B <frame> <ex> <ey>")?;
                    let frame = frame_index(fields[1])?;
                    if gt.frame_indices.last() != Some(&frame) || gt.bias.len() + 1 != gt.frame_indices.len() {
                        return Err(format!("B record for frame {frame} must directly follow its T record"));
                    }
                    gt.bias.push(Vec2::new(float(fields[2], "ex")?, float(fields[3], "ey")?));
                    bias_frames += 1;
                }
                other => return Err(format!("unknown record type '{other}'")),
            }
            Ok(())
        })();
        if let Err(message) = result {
            errors.push(LineError { line, message });
        }
    }
    if bias_frames > 0 && bias_frames != gt.poses.len() {
        errors.push(LineError { line: 0, message: format!("B records cover {bias_frames} of {} frame(s)", gt.poses.len()) });
    }
    finish(source_name, errors, gt)
}

pub fn parse_ground_truth(path: &Path) -> Result<GroundTruth, IoError> {
    parse_ground_truth_str(&read(path)?, &path.display().to_string())
}

pub fn ground_truth_to_string(gt: &GroundTruth) -> String {
    let mut out = String::from("# geoloc ground truth: T <frame> x y theta [B <frame> ex ey]\n");
    let with_bias = gt.bias.len() == gt.poses.len();
    for (i, (frame, p)) in gt.frame_indices.iter().zip(&gt.poses).enumerate() {
        let _ = writeln!(out, "T {frame} {} {} {}", fmt_f64(p.x()), fmt_f64(p.y()), fmt_f64(p.theta()));
        if with_bias {
            let b = gt.bias[i];
            let _ = writeln!(out, "B {frame} {} {}", fmt_f64(b.x), fmt_f64(b.y));
        }
    }
    out
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<(), IoError> {
    write_file(path, &ground_truth_to_string(gt))
}

// ----------------------------------------------------------- keyframes

pub fn parse_keyframes_str(text: &str, source_name: &str) -> Result<KeyframeSet, IoError> {
    let mut keyframes = Vec::new();
    let mut errors = Vec::new();
    for (line, fields) in records(text) {
        let result = (|| {
            if fields[0] != "K" {
                return Err(format!("unknown record type '{}'", fields[0]));
            }
            let (frame, pose) = pose_record(&fields, "K")?;
            if keyframes.last().is_some_and(|&(last, _)| frame <= last) {
                return Err(format!("keyframe {frame} is not after the previous keyframe"));
            }
            keyframes.push((frame, pose));
            Ok(())
        })();
        if let Err(message) = result {
            errors.push(LineError { line, message });
        }
    }
    let keyframes = finish(source_name, errors, keyframes)?;
    KeyframeSet::new(keyframes).map_err(|e: EvalError| IoError::Parse {
        source_name: source_name.to_string(),
        errors: vec![LineError { line: 0, message: e.to_string() }],
    })
}

pub fn parse_keyframes(path: &Path) -> Result<KeyframeSet, IoError> {
    parse_keyframes_str(&read(path)?, &path.display().to_string())
}

pub fn keyframes_to_string(keyframes: &KeyframeSet) -> String {
    let mut out = String::from("# geoloc keyframes: K <frame> x y theta\n");
    for (frame, p) in keyframes.keyframes() {
        let _ = writeln!(out, "K {frame} {} {} {}", fmt_f64(p.x()), fmt_f64(p.y()), fmt_f64(p.theta()));
    }
    out
}

pub fn write_keyframes(path: &Path, keyframes: &KeyframeSet) -> Result<(), IoError> {
    write_file(path, &keyframes_to_string(keyframes))
}

// ----------------------------------------------------------------- CSV

/// One row of the trajectory CSV: estimated pose plus the bias estimate
/// at that frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub frame: u64,
    pub pose: Pose2,
    pub bias: Vec2,
}

pub fn trajectory_to_string(rows: &[TrajectoryRow]) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.frame,
            fmt_f64(r.pose.x()),
            fmt_f64(r.pose.y()),
            fmt_f64(r.pose.theta()),
            fmt_f64(r.bias.x),
            fmt_f64(r.bias.y)
        );
    }
    out
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<(), IoError> {
    write_file(path, &trajectory_to_string(rows))
}

pub fn parse_trajectory_str(text: &str, source_name: &str) -> Result<Vec<TrajectoryRow>, IoError> {
    let mut rows: Vec<TrajectoryRow> = Vec::new();
    let mut errors = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.replace(' ', "") != TRAJECTORY_HEADER {
                errors.push(LineError { line: i + 1, message: format!("expected header '{TRAJECTORY_HEADER}'") });
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let result = (|| {
            if fields.len() != 6 {
                return Err(format!("expected 6 columns, got {}", fields.len()));
            }
            let frame = frame_index(fields[0])?;
            if rows.last().is_some_and(|r| frame <= r.frame) {
                return Err(format!("frame {frame} is out of order"));
            }
            let pose = Pose2::new(float(fields[3], "theta")?, float(fields[1], "x")?, float(fields[2], "y")?);
            let bias = Vec2::new(float(fields[4], "ex")?, float(fields[5], "ey")?);
            rows.push(TrajectoryRow { frame, pose, bias });
            Ok(())
        })();
        if let Err(message) = result {
            errors.push(LineError { line: i + 1, message });
        }
    }
    finish(source_name, errors, rows)
}

pub fn parse_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, IoError> {
    parse_trajectory_str(&read(path)?, &path.display().to_string())
}

pub fn frames_csv_to_string(per_frame: &[FrameError]) -> String {
    let mut out = format!("{FRAMES_HEADER}\n");
    for f in per_frame {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f.frame,
            fmt_f64(f.trans_err),
            fmt_f64(f.rot_err),
            fmt_f64(f.s),
            fmt_f64(f.w_a),
            fmt_f64(f.w_o),
            fmt_f64(f.w_p)
        );
    }
    out
}

pub fn write_frames_csv(path: &Path, per_frame: &[FrameError]) -> Result<(), IoError> {
    write_file(path, &frames_csv_to_string(per_frame))
}

/// One row of the per-frame weight trace written by a localization run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub frame: u64,
    pub s: f64,
    pub pairs: usize,
    pub weights: FrameWeights,
    /// Bias estimate frozen into the frame's prior factor.
    pub bias_obs: Vec2,
    pub step_ms: f64,
}

impl From<&FrameRecord> for WeightRow {
    fn from(r: &FrameRecord) -> Self {
        Self {
            frame: r.frame_index,
            s: r.info_score,
            pairs: r.pair_count,
            weights: r.weights,
            bias_obs: r.bias_obs,
            step_ms: r.step_time.as_secs_f64() * 1e3,
        }
    }
}

pub fn weights_to_string(rows: &[WeightRow]) -> String {
    let mut out = format!("{WEIGHTS_HEADER}\n");
    for r in rows {
        let w = &r.weights;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            fmt_f64(r.s),
            r.pairs,
            fmt_f64(w.w_a),
            fmt_f64(w.w_e),
            fmt_f64(w.w_o),
            fmt_f64(w.w_p),
            fmt_f64(r.bias_obs.x),
            fmt_f64(r.bias_obs.y),
            fmt_f64(r.step_ms)
        );
    }
    out
}

pub fn write_weights(path: &Path, rows: &[WeightRow]) -> Result<(), IoError> {
    write_file(path, &weights_to_string(rows))
}

pub fn parse_weights_str(text: &str, source_name: &str) -> Result<Vec<WeightRow>, IoError> {
    let mut rows: Vec<WeightRow> = Vec::new();
    let mut errors = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.replace(' ', "") != WEIGHTS_HEADER {
                errors.push(LineError { line: i + 1, message: format!("expected header '{WEIGHTS_HEADER}'") });
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let result = (|| {
            if f.len() != 10 {
                return Err(format!("expected 10 columns, got {}", f.len()));
            }
            let frame = frame_index(f[0])?;
            if rows.last().is_some_and(|r| frame <= r.frame) {
                return Err(format!("frame {frame} is out of order"));
            }
            let pairs = f[2].parse::<usize>().map_err(|_| format!("pairs: '{}' is not a count", f[2]))?;
            rows.push(WeightRow {
                frame,
                s: float(f[1], "s")?,
                pairs,
                weights: FrameWeights { w_a: float(f[3], "w_a")?, w_e: float(f[4], "w_e")?, w_o: float(f[5], "w_o")?, w_p: float(f[6], "w_p")? },
                bias_obs: Vec2::new(float(f[7], "bias_obs_x")?, float(f[8], "bias_obs_y")?),
                step_ms: float(f[9], "step_ms")?,
            });
            Ok(())
        })();
        if let Err(message) = result {
            errors.push(LineError { line: i + 1, message });
        }
    }
    finish(source_name, errors, rows)
}

pub fn parse_weights(path: &Path) -> Result<Vec<WeightRow>, IoError> {
    parse_weights_str(&read(path)?, &path.display().to_string())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_file(path, text)
}
