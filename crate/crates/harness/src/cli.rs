//! Subcommands of the `recompose` binary.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use recompose::annotation::AnnotationStore;
use recompose::flowdpo::{separable_pairs, toy_dpo_optimize, write_loss_trace_csv, DPOConfig, LinearVelocityModel};
use recompose::geometry::{draw_quad, guidance_box, homography_pure_rotation, rectangularity, Quad};
use recompose::metrics::{compare_sequences, MotionConfig};
use recompose::pipeline::{
    build_dataset, filter_manifest, grade_histogram, load_frames, load_poses, load_scene, regrade_with_rewards,
    score_sequence, Manifest, PipelineConfig, MANIFEST_FILE,
};
use recompose::preference::{
    fit_rewards_report, predict_accuracy, read_judgments_jsonl, BTTConfig, DEFAULT_TIE_MARGIN,
};
use recompose::scenegen::{planar_views, sample_poses, texture_image};
use recompose::seed::rng_from_seed;
use recompose::trajgen::{sample_away_trajectory, AngleBudget};
use recompose::{CameraIntrinsics, CameraPose, Frame, RewardParams};

use crate::server::{self, AppState};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "recompose", version, about = "Perspective recomposition datasets, grading, preference fitting and evaluation")]
pub struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file, where noted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset of reversed away sequences with a manifest.
    Gen(GenArgs),
    /// Recompute VQ/MQ/CA scores of a dataset from its stored files.
    Score(DatasetArgs),
    /// Re-grade a manifest, optionally on fitted rewards.
    Grade(GradeArgs),
    /// Keep the records that pass the quality gate.
    Filter(FilterArgs),
    /// Fit per-item rewards from pairwise judgments.
    Fit(FitArgs),
    /// Compare a predicted dataset against a reference dataset.
    Eval(EvalArgs),
    /// Optimize a toy velocity model on the Flow-DPO loss.
    DpoDemo(DpoArgs),
    /// Render a guidance-box overlay sequence for a planar image.
    Guide(GuideArgs),
    /// Run the annotation backend.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub variants: Option<u32>,
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Directory holding `manifest.jsonl`.
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Reward JSON from `fit`.
    #[arg(long)]
    pub rewards: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub inclusive: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training judgments (JSONL).
    #[arg(long)]
    pub judgments: PathBuf,
    /// Held-out judgments for per-dimension accuracy.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TIE_MARGIN)]
    pub tie_margin: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct DpoArgs {
    #[arg(long, default_value_t = 64)]
    pub pairs: usize,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct GuideArgs {
    /// PNG treated as the optimal view; a synthetic texture when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub frames: usize,
    /// Rotation budget in degrees.
    #[arg(long, default_value_t = 10.0)]
    pub cap: f64,
    #[arg(long)]
    pub focal: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Judgment log; defaults to `judgments.jsonl` in the dataset.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory with the browser UI.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json(out: Option<&Path>, name: &str, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("plain data serializes");
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(data)?;
            fs::write(dir.join(name), text + "\n").map_err(data)
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    Manifest::read(dir.join(MANIFEST_FILE)).map_err(data)
}

fn read_judgments(path: &Path) -> Result<Vec<recompose::Judgment>> {
    let f = fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    read_judgments_jsonl(BufReader::new(f)).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_rewards(path: &Path) -> Result<RewardParams> {
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_deref();
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen(a) => {
            let mut cfg: PipelineConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o.to_path_buf();
            }
            if let Some(c) = a.count {
                cfg.count = c;
            }
            if let Some(v) = a.variants {
                cfg.variants_per_view = v;
            }
            if let Some(f) = a.frames {
                cfg.frames = f;
            }
            cfg.validate().map_err(config)?;
            let m = build_dataset(&cfg).map_err(data)?;
            let kept = m.records.iter().filter(|r| r.kept).count();
            eprintln!("{} sequences in {}, {kept} pass the gate", m.len(), cfg.out_dir.display());
            for (g, n) in grade_histogram(&m) {
                eprintln!("  {g}: {n}");
            }
            Ok(())
        }
        Command::Score(a) => {
            let cfg: PipelineConfig = load_config(cfg_path)?;
            cfg.validate().map_err(config)?;
            let m = read_manifest(&a.dataset)?;
            let mut lines = String::new();
            for r in &m.records {
                let frames = load_frames(&a.dataset, r).map_err(data)?;
                let poses = load_poses(&a.dataset, r).map_err(data)?;
                let scene = load_scene(&a.dataset, r).map_err(data)?;
                let k = CameraIntrinsics::centered(cfg.focal, frames[0].width(), frames[0].height()).map_err(data)?;
                let scores =
                    score_sequence(&scene, &k, &frames, &poses, r.rotation_cap, &cfg.aesthetics).map_err(data)?;
                let line = json!({ "id": r.id, "scores": scores, "matches_manifest": scores == r.scores });
                lines.push_str(&line.to_string());
                lines.push('\n');
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(data)?;
                    fs::write(dir.join("scores.jsonl"), lines).map_err(data)
                }
                None => {
                    print!("{lines}");
                    Ok(())
                }
            }
        }
        Command::Grade(a) => {
            let cfg: PipelineConfig = load_config(cfg_path)?;
            cfg.validate().map_err(config)?;
            let threshold = a.threshold.unwrap_or(cfg.threshold);
            let mut m = read_manifest(&a.dataset)?;
            match &a.rewards {
                Some(p) => {
                    m = regrade_with_rewards(&m, &read_rewards(p)?, cfg.weights, threshold, cfg.inclusive)
                        .map_err(data)?
                }
                None => {
                    for r in &mut m.records {
                        r.final_raw = recompose::pipeline::aggregate_score(&r.scores, cfg.weights).map_err(data)?;
                        recompose::pipeline::apply_grade(r, threshold, cfg.inclusive).map_err(data)?;
                    }
                }
            }
            let dir = out.unwrap_or(&a.dataset);
            fs::create_dir_all(dir).map_err(data)?;
            m.write_atomic(dir.join(MANIFEST_FILE)).map_err(data)?;
            for (g, n) in grade_histogram(&m) {
                eprintln!("{g}: {n}");
            }
            Ok(())
        }
        Command::Filter(a) => {
            let cfg: PipelineConfig = load_config(cfg_path)?;
            let threshold = a.threshold.unwrap_or(cfg.threshold);
            if !threshold.is_finite() {
                return Err(config("threshold must be finite"));
            }
            let m = read_manifest(&a.dataset)?;
            let kept = filter_manifest(&m, threshold, a.inclusive || cfg.inclusive);
            eprintln!("kept {} of {}", kept.len(), m.len());
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(data)?;
                    kept.write_atomic(dir.join(MANIFEST_FILE)).map_err(data)
                }
                None => {
                    print!("{}", kept.to_jsonl());
                    Ok(())
                }
            }
        }
        Command::Fit(a) => {
            let cfg: BTTConfig = load_config(cfg_path)?;
            cfg.validate().map_err(config)?;
            let train = read_judgments(&a.judgments)?;
            let report = fit_rewards_report(&train, &cfg).map_err(data)?;
            eprintln!(
                "{} items, {} iterations, gradient norm {:.3e}{}",
                report.rewards.rewards.len(),
                report.iterations,
                report.grad_norm,
                if report.converged { "" } else { " (not converged)" }
            );
            if let Some(t) = &a.test {
                let acc = predict_accuracy(&read_judgments(t)?, &report.rewards, a.tie_margin).map_err(data)?;
                for (d, v) in acc {
                    eprintln!("  {d} accuracy {v:.4}");
                }
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(data)?;
                    fs::write(dir.join("rewards.json"), report.rewards.to_json_pretty()).map_err(data)?;
                }
                None => println!("{}", report.rewards.to_json_pretty()),
            }
            if report.converged {
                Ok(())
            } else {
                Err(data("reward fit did not converge"))
            }
        }
        Command::Eval(a) => {
            let cfg: MotionConfig = load_config(cfg_path)?;
            let pred = read_manifest(&a.pred)?;
            let reference = read_manifest(&a.reference)?;
            let mut rows = Vec::new();
            for r in &reference.records {
                let Some(p) = pred.get(&r.id) else {
                    return Err(data(format!("prediction missing sequence {}", r.id)));
                };
                let rf = load_frames(&a.reference, r).map_err(data)?;
                let pf = load_frames(&a.pred, p).map_err(data)?;
                let rp = load_poses(&a.reference, r).map_err(data)?;
                let pp = load_poses(&a.pred, p).map_err(data)?;
                let c = compare_sequences(&pf, &rf, &pp, &rp, &cfg).map_err(data)?;
                rows.push((r.id.clone(), c));
            }
            if rows.is_empty() {
                return Err(data("reference manifest is empty"));
            }
            let n = rows.len() as f64;
            let mean = |f: fn(&recompose::metrics::SequenceComparison) -> f64| rows.iter().map(|(_, c)| f(c)).sum::<f64>() / n;
            let report = json!({
                "sequences": rows.len(),
                "psnr": mean(|c| c.psnr),
                "ssim": mean(|c| c.ssim),
                "cmm": mean(|c| c.cmm),
                "per_sequence": rows.iter().map(|(id, c)| json!({ "id": id, "metrics": c })).collect::<Vec<_>>(),
            });
            write_json(out, "metrics.json", &report)
        }
        Command::DpoDemo(a) => {
            let cfg: DPOConfig = load_config(cfg_path)?;
            cfg.validate().map_err(config)?;
            if a.pairs == 0 || a.dim == 0 {
                return Err(config("pairs and dim must be positive"));
            }
            let mut rng = rng_from_seed(cli.seed.unwrap_or(0));
            let pairs = separable_pairs(a.pairs, a.dim, &cfg, &mut rng).map_err(data)?;
            let zero = LinearVelocityModel::zeros(a.dim);
            let fit = toy_dpo_optimize(&pairs, &zero, &zero, &cfg, a.steps).map_err(data)?;
            let (first, last) = (fit.trace[0], *fit.trace.last().expect("trace is non-empty"));
            eprintln!("loss {first:.6} -> {last:.6} over {} steps", a.steps);
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(data)?;
                    let f = fs::File::create(dir.join("loss.csv")).map_err(data)?;
                    write_loss_trace_csv(std::io::BufWriter::new(f), &fit.trace).map_err(data)
                }
                None => write_loss_trace_csv(std::io::stdout().lock(), &fit.trace).map_err(data),
            }
        }
        Command::Guide(a) => guide(&a, cli.seed.unwrap_or(0), out),
        Command::Serve(a) => {
            let m = read_manifest(&a.dataset)?;
            let store_path = a.store.clone().unwrap_or_else(|| a.dataset.join("judgments.jsonl"));
            let store = AnnotationStore::open_for_manifest(&store_path, &m).map_err(data)?;
            eprintln!("{} pairs, log at {}", store.pairs().count(), store_path.display());
            let state = AppState {
                store: Arc::new(store),
                manifest: Arc::new(m),
                dataset: a.dataset.clone(),
            };
            let rt = tokio::runtime::Runtime::new().map_err(data)?;
            rt.block_on(server::serve(state, a.static_dir.clone(), &a.addr)).map_err(data)
        }
    }
}

fn guide(a: &GuideArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    if a.frames < 2 {
        return Err(config("frames must be at least 2"));
    }
    let budget = AngleBudget::degrees(a.cap);
    budget.validate().map_err(config)?;
    let img = match &a.image {
        Some(p) => Frame::load_png(p).map_err(|e| data(format!("{}: {e}", p.display())))?,
        None => texture_image(256, 256, seed),
    };
    let (w, h) = (img.width(), img.height());
    let k = CameraIntrinsics::centered(a.focal.unwrap_or(w.max(h) as f64), w, h).map_err(config)?;
    let mut rng = rng_from_seed(seed);
    let away = sample_away_trajectory(&CameraPose::identity(), &budget, 4, &mut rng).map_err(data)?;
    let mut views = planar_views(&img, &k, &away.trajectory, a.frames).map_err(data)?;
    let mut poses = sample_poses(&away.trajectory, a.frames).map_err(data)?;
    views.reverse();
    poses.reverse();
    let optimal = poses.last().expect("at least two frames");
    let (mx, my) = (w as f64 * 0.1, h as f64 * 0.1);
    let rect = Quad::rect(mx, my, w as f64 - 1.0 - mx, h as f64 - 1.0 - my);

    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("guide"));
    fs::create_dir_all(&dir).map_err(data)?;
    let mut boxes = Vec::new();
    for (i, (view, pose)) in views.iter_mut().zip(&poses).enumerate() {
        let hm = homography_pure_rotation(&k, &optimal.rotation_to(pose)).map_err(data)?;
        let q = guidance_box(&rect, &hm).map_err(data)?;
        draw_quad(view, &q, [255, 40, 40]);
        view.save_png(dir.join(format!("{i:04}.png"))).map_err(data)?;
        boxes.push(json!({ "index": i, "corners": q.corners.map(|c| [c.x, c.y]), "rectangularity": rectangularity(&q).map_err(data)? }));
    }
    let mut f = fs::File::create(dir.join("guide.json")).map_err(data)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&json!({ "rotation_cap": away.rotation_cap, "boxes": boxes })).expect("json"))
        .map_err(data)?;
    eprintln!("{} guided frames in {}", views.len(), dir.display());
    Ok(())
}
