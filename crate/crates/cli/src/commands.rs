use std::fmt::Write as _;
use std::path::Path;
use std::thread;

use anyhow::{anyhow, Context};

use geoloc::association::DEFAULT_ASSOCIATION_THRESHOLD;
use geoloc::evaluation::{compute_ate_with, interpolate_ground_truth, rms, Aggregate};
use geoloc::io::{self, ParsedSequence, TrajectoryRow, WeightRow};
use geoloc::simulator::{generate, info_profile, Preset};
use geoloc::{Engine, EngineConfig, FrameRecord, GroundTruth, LandmarkMap, PhiVariant};

use crate::config::{Calibration, FileConfig};
use crate::{ConfigContext, Failure};

type CmdResult = Result<(), Failure>;

const DEFAULT_PRESET: &str = "corner-rich";
const DEFAULT_SEED: u64 = 1;

fn aggregate(cfg: &FileConfig) -> Aggregate {
    if cfg.ate_mean.unwrap_or(false) {
        Aggregate::Mean
    } else {
        Aggregate::Rms
    }
}

fn threshold(cfg: &FileConfig) -> Result<f64, Failure> {
    let t = cfg.association_threshold.unwrap_or(DEFAULT_ASSOCIATION_THRESHOLD);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Failure::Config(anyhow!("association_threshold must be positive, got {t}")));
    }
    Ok(t)
}

pub fn simulate(cfg: &FileConfig, out: &Path) -> CmdResult {
    let preset_name = cfg.preset.as_deref().unwrap_or(DEFAULT_PRESET);
    let preset: Preset = preset_name.parse().map_err(|e: String| Failure::Config(anyhow!(e)))?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let mut scenario_cfg = preset.config(seed);
    if cfg.dropout.is_some() {
        scenario_cfg.dropout = cfg.dropout_ranges().config_err()?;
    }
    if let Some(step) = cfg.resample_step {
        scenario_cfg.resample_step = step;
    }
    if cfg.keyframe_every == Some(0) {
        return Err(Failure::Config(anyhow!("keyframe_every must be at least 1")));
    }
    scenario_cfg.validate().config_err()?;
    let scenario = generate(&scenario_cfg).context("generating scenario")?;

    let threshold = threshold(cfg)?;
    let profile = info_profile(&scenario.map, &scenario.frames, &scenario.truth, threshold);
    let s_max = profile.iter().copied().fold(0.0, f64::max);
    let zero = profile.iter().filter(|&&s| s == 0.0).count();

    io::write_map(&out.join("map.txt"), scenario.map.polylines())?;
    io::write_sequence(&out.join("sequence.txt"), &scenario.frames)?;
    io::write_ground_truth(&out.join("truth.gt"), &scenario.truth)?;
    let calibration = Calibration {
        s_max_hint: s_max,
        association_threshold: threshold,
        preset: Some(preset.name().to_string()),
        seed: Some(seed),
    };
    io::write_text(&out.join("calibration.toml"), &toml::to_string(&calibration).context("serializing calibration")?)?;
    if let Some(every) = cfg.keyframe_every {
        let keyframes: Vec<_> = scenario
            .truth
            .frame_indices
            .iter()
            .zip(&scenario.truth.poses)
            .filter(|(f, _)| *f % every == 0)
            .map(|(f, p)| (*f, *p))
            .collect();
        let set = geoloc::evaluation::KeyframeSet::new(keyframes).context("building keyframes")?;
        io::write_keyframes(&out.join("keyframes.txt"), &set)?;
    }
    println!("preset={}", preset.name());
    println!("seed={seed}");
    println!("frames={}", scenario.frames.len());
    println!("landmarks={}", scenario.map.len());
    println!("max_oracle_s={s_max:.6}");
    println!("zero_score_frames={zero}");
    println!("dropout={}", scenario_cfg.dropout.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(","));
    println!("out={}", out.display());
    Ok(())
}

struct Inputs {
    map: LandmarkMap,
    seq: ParsedSequence,
    gt: Option<GroundTruth>,
}

impl Inputs {
    fn load(map: &Path, sequence: &Path, gt: Option<&Path>, resample_step: f64) -> Result<Self, Failure> {
        if !(resample_step > 0.0 && resample_step.is_finite()) {
            return Err(Failure::Config(anyhow!("resample_step must be positive, got {resample_step}")));
        }
        let map = io::load_map(map, resample_step)?;
        let seq = io::parse_sequence(sequence)?;
        for note in &seq.diagnostics {
            eprintln!("note: {}: {note}", sequence.display());
        }
        if seq.frames.is_empty() {
            return Err(anyhow!("{}: no frames", sequence.display()).into());
        }
        let gt = match gt {
            Some(path) => Some(io::parse_ground_truth(path)?),
            None => seq.gt.clone(),
        };
        if let Some(gt) = &gt {
            let frames: Vec<u64> = seq.frames.iter().map(|f| f.frame_index).collect();
            if gt.frame_indices != frames {
                return Err(anyhow!(
                    "ground truth covers {} frame(s) that do not match the sequence's {} frame(s)",
                    gt.len(),
                    frames.len()
                )
                .into());
            }
        }
        Ok(Self { map, seq, gt })
    }
}

fn calibrated_s_max(path: Option<&Path>) -> Result<Option<f64>, Failure> {
    Ok(path.map(Calibration::load).transpose().config_err()?.map(|c| c.s_max_hint))
}

struct RunSummary {
    report: String,
    ate: Option<(f64, f64)>,
    mean_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn run_one(inputs: &Inputs, cfg: EngineConfig, aggregate: Aggregate, out: &Path) -> anyhow::Result<RunSummary> {
    let mut engine = Engine::new(&inputs.map, cfg.clone())?;
    for frame in &inputs.seq.frames {
        engine.step(frame)?;
    }
    let (state, _, records) = engine.into_parts();

    let rows: Vec<TrajectoryRow> = records
        .iter()
        .zip(&state.poses)
        .map(|(r, p)| TrajectoryRow { frame: r.frame_index, pose: *p, bias: r.bias })
        .collect();
    io::write_trajectory(&out.join("trajectory.csv"), &rows)?;
    let weights: Vec<WeightRow> = records.iter().map(WeightRow::from).collect();
    io::write_weights(&out.join("weights.csv"), &weights)?;

    let mut times: Vec<f64> = weights.iter().map(|w| w.step_ms).collect();
    let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);

    let mut report = String::new();
    let _ = writeln!(report, "frames={}", records.len());
    match cfg.fixed_weights {
        Some(c) => {
            let _ = writeln!(report, "fixed_weights={c}");
        }
        None => {
            let w = &cfg.weights;
            let _ = writeln!(report, "phi={}", w.phi_variant);
            let _ = writeln!(report, "s_max={}\nlambda_a={}\nlambda_b={}\nh={}", w.s_max_hint, w.lambda_a, w.lambda_b, w.h);
        }
    }
    let _ = writeln!(report, "bias_estimation={}", if cfg.bias_estimation { "on" } else { "off" });
    let _ = writeln!(report, "final_bias_x={:.9}\nfinal_bias_y={:.9}", state.bias.x, state.bias.y);
    let _ = writeln!(report, "mean_step_ms={mean_ms:.4}");
    let _ = writeln!(report, "p99_step_ms={:.4}", percentile(&times, 0.99));
    let _ = writeln!(report, "max_step_ms={:.4}", times.last().copied().unwrap_or(0.0));
    let flagged: Vec<&FrameRecord> = records.iter().filter(|r| !r.diagnostics.is_empty()).collect();
    let _ = writeln!(report, "frames_with_diagnostics={}", flagged.len());
    if let Some(solve) = records.iter().rev().find_map(|r| r.solve.as_ref()) {
        for line in solve.to_key_value().lines() {
            let _ = writeln!(report, "last_solve_{line}");
        }
    }
    for r in flagged.iter().take(5) {
        eprintln!("note: frame {}: {}", r.frame_index, r.diagnostics.join("; "));
    }

    let mut ate = None;
    if let Some(gt) = &inputs.gt {
        let result = compute_ate_with(&state.poses, gt, Some(&records), aggregate)?;
        io::write_frames_csv(&out.join("frames.csv"), &result.per_frame)?;
        report.push_str(&result.to_key_value());
        if gt.bias.len() == records.len() {
            let errs: Vec<f64> = records.iter().zip(&gt.bias).map(|(r, b)| (r.bias - b).norm()).collect();
            let _ = writeln!(report, "bias_rms_m={:.9}", rms(&errs));
        }
        ate = Some((result.trans_error, result.rot_error));
    }
    io::write_text(&out.join("report.txt"), &report)?;
    Ok(RunSummary { report, ate, mean_ms })
}

pub fn localize(
    cfg: &FileConfig,
    map: &Path,
    sequence: &Path,
    gt: Option<&Path>,
    calibration: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let engine_cfg = cfg.engine_config(calibrated_s_max(calibration)?).config_err()?;
    let inputs = Inputs::load(map, sequence, gt, cfg.resample_step())?;
    let summary = run_one(&inputs, engine_cfg, aggregate(cfg), out)?;
    print!("{}", summary.report);
    Ok(())
}

pub fn evaluate(cfg: &FileConfig, estimate: &Path, gt: &Path, weights: Option<&Path>, out: Option<&Path>) -> CmdResult {
    let rows = io::parse_trajectory(estimate)?;
    let truth = io::parse_ground_truth(gt)?;
    let frames: Vec<u64> = rows.iter().map(|r| r.frame).collect();
    if frames != truth.frame_indices {
        return Err(anyhow!(
            "estimate has {} frame(s) that do not match the {} ground-truth frame(s)",
            frames.len(),
            truth.len()
        )
        .into());
    }
    let poses: Vec<_> = rows.iter().map(|r| r.pose).collect();
    let mut result = compute_ate_with(&poses, &truth, None, aggregate(cfg)).map_err(anyhow::Error::from)?;
    if let Some(path) = weights {
        let w = io::parse_weights(path)?;
        if w.iter().map(|r| r.frame).ne(frames.iter().copied()) {
            return Err(anyhow!("{}: frames do not match the estimate", path.display()).into());
        }
        let scores: Vec<_> = w.iter().map(|r| (r.s, r.weights)).collect();
        result = result.with_scores(&scores).map_err(anyhow::Error::from)?;
    }
    let mut metrics = result.to_key_value();
    if truth.bias.len() == rows.len() {
        let errs: Vec<f64> = rows.iter().zip(&truth.bias).map(|(r, b)| (r.bias - b).norm()).collect();
        let _ = writeln!(metrics, "bias_rms_m={:.9}", rms(&errs));
    }
    if let Some(dir) = out {
        io::write_text(&dir.join("metrics.txt"), &metrics)?;
        io::write_frames_csv(&dir.join("frames.csv"), &result.per_frame)?;
    }
    print!("{metrics}");
    Ok(())
}

pub fn gt_interpolate(cfg: &FileConfig, sequence: &Path, keyframes: &Path, out: &Path) -> CmdResult {
    let solver = cfg.solver_config().config_err()?;
    let seq = io::parse_sequence(sequence)?;
    let keyframes = io::parse_keyframes(keyframes)?;
    let gt = interpolate_ground_truth(&seq.frames, &keyframes, &solver).map_err(anyhow::Error::from)?;
    io::write_ground_truth(out, &gt)?;
    println!("frames={}", gt.len());
    println!("keyframes={}", keyframes.len());
    println!("out={}", out.display());
    Ok(())
}

pub fn calibrate(cfg: &FileConfig, map: &Path, sequence: &Path, gt: Option<&Path>, write: Option<&Path>) -> CmdResult {
    let threshold = threshold(cfg)?;
    let inputs = Inputs::load(map, sequence, gt, cfg.resample_step())?;
    let (scores, source) = match &inputs.gt {
        Some(truth) => (info_profile(&inputs.map, &inputs.seq.frames, truth, threshold), "oracle"),
        None => {
            let engine_cfg = EngineConfig { association_threshold: threshold, ..EngineConfig::default() };
            let mut engine = Engine::new(&inputs.map, engine_cfg).map_err(anyhow::Error::from)?;
            for frame in &inputs.seq.frames {
                engine.step(frame).map_err(anyhow::Error::from)?;
            }
            (engine.records().iter().map(|r| r.info_score).collect(), "engine")
        }
    };
    let s_max = scores.iter().copied().fold(0.0, f64::max);
    println!("s_max={s_max:.6}");
    println!("source={source}");
    println!("frames={}", scores.len());
    println!("zero_score_frames={}", scores.iter().filter(|&&s| s == 0.0).count());
    if let Some(path) = write {
        let c = Calibration { s_max_hint: s_max, association_threshold: threshold, preset: None, seed: None };
        io::write_text(path, &toml::to_string(&c).context("serializing calibration")?)?;
    }
    if s_max <= 0.0 {
        return Err(anyhow!("no frame produced a positive score; the map has no corners in sensor range").into());
    }
    Ok(())
}

const ABLATIONS: [(&str, &str, PhiVariant, bool); 4] = [
    ("a_plus_e", "a+e", PhiVariant::A, true),
    ("a_minus_e", "a-e", PhiVariant::A, false),
    ("b_plus_e", "b+e", PhiVariant::B, true),
    ("b_minus_e", "b-e", PhiVariant::B, false),
];

pub fn ablate(
    cfg: &FileConfig,
    map: &Path,
    sequence: &Path,
    gt: Option<&Path>,
    calibration: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let calibrated = calibrated_s_max(calibration)?;
    let mut configs = Vec::new();
    for (dir, label, phi, bias) in ABLATIONS {
        let c = FileConfig {
            phi: Some(phi.to_string()),
            bias_estimation: Some(bias),
            fixed_weights: None,
            ..cfg.clone()
        };
        configs.push((dir, label, c.engine_config(calibrated).config_err()?));
    }
    let inputs = Inputs::load(map, sequence, gt, cfg.resample_step())?;
    let agg = aggregate(cfg);
    let results: Vec<(&str, anyhow::Result<RunSummary>)> = thread::scope(|scope| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|(dir, label, engine_cfg)| {
                let inputs = &inputs;
                let target = out.join(dir);
                (label, scope.spawn(move || run_one(inputs, engine_cfg, agg, &target)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(label, h)| (label, h.join().unwrap_or_else(|_| Err(anyhow!("worker thread panicked")))))
            .collect()
    });

    let mut table = String::new();
    for (label, result) in results {
        let summary = result.with_context(|| format!("configuration {label}"))?;
        let _ = write!(table, "config={label} mean_step_ms={:.4}", summary.mean_ms);
        if let Some((t, r)) = summary.ate {
            let _ = write!(table, " ate_trans_m={t:.6} ate_rot_deg={r:.6}");
        }
        table.push('\n');
    }
    if table.is_empty() {
        return Err(anyhow!("no configurations ran").into());
    }
    io::write_text(&out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(())
}
