//! Dataset construction: scene, away path, render, reverse, score, grade,
//! filter, and JSONL manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aesthetics::{
    ca_frame_unit, motion_breakdown, sharpness_term, vq_score, AestheticsConfig, AestheticsError, DimensionScores,
};
use crate::frame::{Frame, FrameError};
use crate::geometry::{geodesic_angle_deg, motion_from_rotation_vector, CameraIntrinsics, CameraPose, GeometryError};
use crate::preference::RewardParams;
use crate::scenegen::{horizon_angle, make_scene, observe_subjects, render_sequence, Scene, SceneError, Template};
use crate::seed::{derive_seed, rng_from_seed};
use crate::trajgen::{reverse, sample_away_trajectory, AngleBudget, Keyframe, Trajectory, TrajectoryError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("weights must be non-negative and sum to 1, got {0:?}")]
    BadWeights([f64; 3]),
    #[error("score is not finite: {0}")]
    NonFinite(f64),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("no reward for item {0:?}")]
    UnknownItem(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Aesthetics(#[from] AestheticsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
    E,
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeBand {
    pub grade: Grade,
    /// Inclusive lower edge.
    pub raw_lo: f64,
    /// Exclusive upper edge.
    pub raw_hi: f64,
    pub standardized: i32,
}

pub const GRADE_BANDS: [GradeBand; 5] = [
    GradeBand { grade: Grade::A, raw_lo: 5.0, raw_hi: f64::INFINITY, standardized: 95 },
    GradeBand { grade: Grade::B, raw_lo: 0.0, raw_hi: 5.0, standardized: 85 },
    GradeBand { grade: Grade::C, raw_lo: -5.0, raw_hi: 0.0, standardized: 75 },
    GradeBand { grade: Grade::D, raw_lo: -15.0, raw_hi: -5.0, standardized: 65 },
    GradeBand { grade: Grade::E, raw_lo: f64::NEG_INFINITY, raw_hi: -15.0, standardized: 50 },
];

pub fn score_to_grade(final_raw: f64) -> Result<(Grade, i32)> {
    if !final_raw.is_finite() {
        return Err(PipelineError::NonFinite(final_raw));
    }
    GRADE_BANDS
        .iter()
        .find(|b| final_raw >= b.raw_lo && final_raw < b.raw_hi)
        .map(|b| (b.grade, b.standardized))
        .ok_or(PipelineError::NonFinite(final_raw))
}

pub const EQUAL_WEIGHTS: [f64; 3] = [1.0 / 3.0; 3];

fn check_weights(w: [f64; 3]) -> Result<()> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PipelineError::BadWeights(w));
    }
    Ok(())
}

/// Weighted mean of `(vq, mq, ca)`.
pub fn aggregate_score(scores: &DimensionScores, weights: [f64; 3]) -> Result<f64> {
    check_weights(weights)?;
    let v = scores.as_array().iter().zip(weights).map(|(s, w)| s * w).sum::<f64>();
    if !v.is_finite() {
        return Err(PipelineError::NonFinite(v));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactFlag {
    Fixedness,
    ExcessiveMotion,
    Blur,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub scene_seed: u64,
    pub template: Template,
    pub variant: u32,
    /// Relative to the manifest directory.
    pub frame_dir: String,
    pub frame_count: usize,
    /// Per-frame poses (exact rotation matrices), relative to the manifest
    /// directory.
    pub poses: String,
    /// Keyframe trajectory JSON, relative to the manifest directory.
    pub trajectory: String,
    pub rotation_cap: f64,
    pub first_frame_hash: String,
    pub scores: DimensionScores,
    pub final_raw: f64,
    pub grade: Grade,
    pub standardized: i32,
    pub kept: bool,
    pub artifact_flags: BTreeSet<ArtifactFlag>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<SequenceRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl Manifest {
    /// Sorts by id and rejects duplicates.
    pub fn new(mut records: Vec<SequenceRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(PipelineError::Manifest {
                line: 0,
                message: format!("duplicate id {}", w[0].id),
            });
        }
        Ok(Manifest { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SequenceRecord> {
        self.records
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("plain data serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: SequenceRecord = serde_json::from_str(line).map_err(|e| PipelineError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        let m = Manifest::new(records)?;
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_jsonl(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// Write through a temporary file and rename, so readers never see a
    /// partial manifest.
    pub fn write_atomic(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("jsonl.tmp");
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_jsonl().as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result.map_err(io_err(path))
    }
}

/// Keep records whose standardized score exceeds the threshold (or meets
/// it, when `inclusive`). Kept flags are set on the survivors.
pub fn filter_manifest(m: &Manifest, threshold: f64, inclusive: bool) -> Manifest {
    Manifest {
        records: m
            .records
            .iter()
            .filter(|r| passes(r.standardized, threshold, inclusive))
            .map(|r| SequenceRecord { kept: true, ..r.clone() })
            .collect(),
    }
}

pub fn passes(standardized: i32, threshold: f64, inclusive: bool) -> bool {
    let s = standardized as f64;
    if inclusive {
        s >= threshold
    } else {
        s > threshold
    }
}

/// Set grade, standardized score and kept flag from `final_raw`.
pub fn apply_grade(r: &mut SequenceRecord, threshold: f64, inclusive: bool) -> Result<()> {
    let (grade, standardized) = score_to_grade(r.final_raw)?;
    r.grade = grade;
    r.standardized = standardized;
    r.kept = passes(standardized, threshold, inclusive);
    Ok(())
}

/// Re-grade every record on fitted rewards: `final_raw` becomes the
/// weighted mean of the record's per-dimension rewards.
pub fn regrade_with_rewards(
    m: &Manifest,
    rewards: &RewardParams,
    weights: [f64; 3],
    threshold: f64,
    inclusive: bool,
) -> Result<Manifest> {
    check_weights(weights)?;
    let mut out = m.clone();
    for r in &mut out.records {
        let rw = rewards
            .rewards
            .get(&r.id)
            .ok_or_else(|| PipelineError::UnknownItem(r.id.clone()))?;
        let s = DimensionScores { vq: rw.vq, mq: rw.mq, ca: rw.ca };
        r.final_raw = aggregate_score(&s, weights)?;
        apply_grade(r, threshold, inclusive)?;
    }
    Ok(out)
}

/// Geodesic angle of every pose to the final (target) pose, in degrees.
pub fn angles_to_target(poses: &[CameraPose]) -> Vec<f64> {
    let Some(target) = poses.last() else { return Vec::new() };
    poses.iter().map(|p| geodesic_angle_deg(&p.rotation_to(target))).collect()
}

pub fn flag_artifacts(
    poses: &[CameraPose],
    frames: &[Frame],
    budget_deg: f64,
    blur_floor: f64,
    cfg: &AestheticsConfig,
) -> Result<BTreeSet<ArtifactFlag>> {
    let m = motion_breakdown(&angles_to_target(poses), budget_deg, cfg)?;
    let mut flags = BTreeSet::new();
    if m.is_static {
        flags.insert(ArtifactFlag::Fixedness);
    }
    if m.too_intense {
        flags.insert(ArtifactFlag::ExcessiveMotion);
    }
    if !frames.is_empty() {
        let sharp = frames.iter().map(|f| sharpness_term(f, cfg)).sum::<f64>() / frames.len() as f64;
        if sharp < blur_floor {
            flags.insert(ArtifactFlag::Blur);
        }
    }
    Ok(flags)
}

/// Composition value of a rendered view; a view with no subject in frame and
/// no horizon counts as the worst composition, 0.
pub fn ca_view_unit(scene: &Scene, k: &CameraIntrinsics, pose: &CameraPose, cfg: &AestheticsConfig) -> f64 {
    let obs = observe_subjects(scene, k, pose);
    ca_frame_unit(k.width, k.height, &obs, horizon_angle(scene, k, pose), cfg).unwrap_or(0.0)
}

/// VQ, MQ and CA of a stored (suboptimal to optimal) sequence.
///
/// The CA score is the final view's composition plus the improvement over
/// the sequence, both on the calibrated scale.
pub fn score_sequence(
    scene: &Scene,
    k: &CameraIntrinsics,
    frames: &[Frame],
    poses: &[CameraPose],
    budget_deg: f64,
    cfg: &AestheticsConfig,
) -> Result<DimensionScores> {
    let vq = vq_score(frames, cfg)?;
    let mq = crate::aesthetics::mq_score(&angles_to_target(poses), budget_deg, cfg)?;
    let (first, last) = match (poses.first(), poses.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AestheticsError::EmptySequence.into()),
    };
    let u_first = ca_view_unit(scene, k, first, cfg);
    let u_last = ca_view_unit(scene, k, last, cfg);
    let cal = cfg.calibration;
    let improvement = cal.apply(u_last) - cal.apply(u_first);
    Ok(DimensionScores { vq, mq, ca: cal.apply(u_last) + improvement })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub count: usize,
    pub seed: u64,
    /// Cycled through by record index.
    pub templates: Vec<Template>,
    pub budget: AngleBudget,
    pub frames: usize,
    pub keyframes: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub threshold: f64,
    /// Keep records meeting the threshold, not only exceeding it.
    pub inclusive: bool,
    pub weights: [f64; 3],
    pub aesthetics: AestheticsConfig,
    pub blur_floor: f64,
    /// Sequences generated per starting view; extra variants share the first
    /// frame and take perturbed routes back.
    pub variants_per_view: u32,
    /// Grade on fitted rewards from this JSON file instead of rule scores.
    pub rewards_path: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            count: 20,
            seed: 0,
            templates: Template::ALL.to_vec(),
            budget: AngleBudget::mix(),
            frames: 16,
            keyframes: 5,
            width: 256,
            height: 256,
            focal: 256.0,
            threshold: 70.0,
            inclusive: false,
            weights: EQUAL_WEIGHTS,
            aesthetics: AestheticsConfig::default(),
            blur_floor: 0.3,
            variants_per_view: 1,
            rewards_path: None,
            out_dir: PathBuf::from("dataset"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(PipelineError::Config("templates must not be empty".into()));
        }
        if self.frames < 3 {
            return Err(PipelineError::Config("frames must be at least 3".into()));
        }
        if self.keyframes < 2 {
            return Err(PipelineError::Config("keyframes must be at least 2".into()));
        }
        if self.variants_per_view == 0 {
            return Err(PipelineError::Config("variants_per_view must be at least 1".into()));
        }
        if !self.threshold.is_finite() || !self.blur_floor.is_finite() {
            return Err(PipelineError::Config("threshold and blur_floor must be finite".into()));
        }
        self.budget.validate()?;
        self.aesthetics.validate()?;
        check_weights(self.weights)?;
        self.intrinsics()?;
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        Ok(CameraIntrinsics::centered(self.focal, self.width, self.height)?)
    }
}

pub fn record_id(index: usize, variant: u32, variants: u32) -> String {
    if variants > 1 {
        format!("seq-{index:05}-{variant}")
    } else {
        format!("seq-{index:05}")
    }
}

/// Everything generated for one record before it is written.
pub struct GeneratedSequence {
    pub record: SequenceRecord,
    pub scene: Scene,
    /// The away path as sampled (optimal to suboptimal).
    pub away: Trajectory,
    /// The stored path (suboptimal to optimal).
    pub stored: Trajectory,
    pub frames: Vec<Frame>,
    pub poses: Vec<CameraPose>,
}

/// Perturb every keyframe after the first by a random rotation of up to
/// `max_deg`, keeping the start view.
fn perturbed_return(stored: &Trajectory, max_deg: f64, rng: &mut impl Rng) -> Result<Trajectory> {
    let mut kfs: Vec<Keyframe> = stored.keyframes().to_vec();
    for kf in kfs.iter_mut().skip(1) {
        let axis: [f64; 3] = rand_distr::Distribution::sample(&rand_distr::UnitSphere, rng);
        let mag = rng.random_range(0.0..max_deg);
        kf.pose = kf.pose.turned(&motion_from_rotation_vector(&(nalgebra::Vector3::from(axis) * mag)));
    }
    Ok(Trajectory::new(kfs)?)
}

/// Generate, score and grade the sequences for starting view `index`,
/// without touching the filesystem.
pub fn generate_view(cfg: &PipelineConfig, index: usize) -> Result<Vec<GeneratedSequence>> {
    let k = cfg.intrinsics()?;
    let sub = derive_seed(cfg.seed, index as u64);
    let mut rng = rng_from_seed(sub);
    let template = cfg.templates[index % cfg.templates.len()];
    let scene_seed: u64 = rng.random();
    let scene = make_scene(scene_seed, template);
    let away = sample_away_trajectory(&CameraPose::identity(), &cfg.budget, cfg.keyframes, &mut rng)?;
    let (away_frames, away_poses) = render_sequence(&scene, &k, &away.trajectory, cfg.frames)?;
    let stored = reverse(&away.trajectory);

    let mut out = Vec::new();
    for variant in 0..cfg.variants_per_view {
        let (traj, frames, poses) = if variant == 0 {
            // reversed frames of the away render are exactly the render of
            // the reversed path
            let mut f = away_frames.clone();
            f.reverse();
            let mut p = away_poses.clone();
            p.reverse();
            (stored.clone(), f, p)
        } else {
            let mut vrng = rng_from_seed(derive_seed(sub, variant as u64));
            let t = perturbed_return(&stored, 2.0 * variant as f64, &mut vrng)?;
            let (f, p) = render_sequence(&scene, &k, &t, cfg.frames)?;
            (t, f, p)
        };
        let scores = score_sequence(&scene, &k, &frames, &poses, away.rotation_cap, &cfg.aesthetics)?;
        let final_raw = aggregate_score(&scores, cfg.weights)?;
        let id = record_id(index, variant, cfg.variants_per_view);
        let mut record = SequenceRecord {
            frame_dir: id.clone(),
            poses: format!("{id}/poses.json"),
            trajectory: format!("{id}/trajectory.json"),
            id,
            scene_seed,
            template,
            variant,
            frame_count: frames.len(),
            rotation_cap: away.rotation_cap,
            first_frame_hash: frames[0].content_hash(),
            scores,
            final_raw,
            grade: Grade::E,
            standardized: 0,
            kept: false,
            artifact_flags: flag_artifacts(&poses, &frames, away.rotation_cap, cfg.blur_floor, &cfg.aesthetics)?,
        };
        apply_grade(&mut record, cfg.threshold, cfg.inclusive)?;
        out.push(GeneratedSequence {
            record,
            scene: scene.clone(),
            away: away.trajectory.clone(),
            stored: traj,
            frames,
            poses,
        });
    }
    Ok(out)
}

pub fn frame_path(out_dir: &Path, record: &SequenceRecord, index: usize) -> PathBuf {
    out_dir.join(&record.frame_dir).join(format!("{index:04}.png"))
}

fn write_sequence(out_dir: &Path, g: &GeneratedSequence) -> Result<()> {
    let dir = out_dir.join(&g.record.frame_dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (i, f) in g.frames.iter().enumerate() {
        f.save_png(frame_path(out_dir, &g.record, i))?;
    }
    let tpath = out_dir.join(&g.record.trajectory);
    fs::write(&tpath, g.stored.to_json_pretty()).map_err(io_err(&tpath))?;
    let ppath = out_dir.join(&g.record.poses);
    fs::write(&ppath, serde_json::to_string(&g.poses).expect("plain data serializes")).map_err(io_err(&ppath))?;
    let spath = dir.join("scene.json");
    fs::write(&spath, g.scene.to_json()).map_err(io_err(&spath))?;
    Ok(())
}

/// Build the dataset under `cfg.out_dir` and write its manifest.
///
/// Records are generated in parallel from per-index sub-seeds and assembled
/// in id order, so the manifest is a pure function of the configuration.
/// On failure every directory created by this run is removed.
pub fn build_dataset(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = cfg.out_dir.as_path();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let rewards = match &cfg.rewards_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            Some(serde_json::from_str::<RewardParams>(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };

    let created: Vec<PathBuf> = (0..cfg.count)
        .flat_map(|i| (0..cfg.variants_per_view).map(move |v| (i, v)))
        .map(|(i, v)| out_dir.join(record_id(i, v, cfg.variants_per_view)))
        .filter(|p| !p.exists())
        .collect();
    let result = (|| {
        let views: Vec<Vec<SequenceRecord>> = (0..cfg.count)
            .into_par_iter()
            .map(|i| {
                let seqs = generate_view(cfg, i)?;
                for g in &seqs {
                    write_sequence(out_dir, g)?;
                }
                Ok(seqs.into_iter().map(|g| g.record).collect())
            })
            .collect::<Result<_>>()?;
        let mut m = Manifest::new(views.into_iter().flatten().collect())?;
        if let Some(r) = &rewards {
            m = regrade_with_rewards(&m, r, cfg.weights, cfg.threshold, cfg.inclusive)?;
        }
        m.write_atomic(out_dir.join(MANIFEST_FILE))?;
        Ok(m)
    })();
    if result.is_err() {
        for p in &created {
            let _ = fs::remove_dir_all(p);
        }
    }
    result
}

pub fn load_frames(out_dir: &Path, record: &SequenceRecord) -> Result<Vec<Frame>> {
    (0..record.frame_count)
        .map(|i| Frame::load_png(frame_path(out_dir, record, i)).map_err(PipelineError::from))
        .collect()
}

pub fn load_poses(out_dir: &Path, record: &SequenceRecord) -> Result<Vec<CameraPose>> {
    let p = out_dir.join(&record.poses);
    let poses: Vec<CameraPose> =
        serde_json::from_str(&fs::read_to_string(&p).map_err(io_err(&p))?).map_err(|e| PipelineError::Manifest {
            line: 0,
            message: format!("{}: {e}", p.display()),
        })?;
    if poses.len() != record.frame_count {
        return Err(PipelineError::Manifest {
            line: 0,
            message: format!("{}: {} poses for {} frames", p.display(), poses.len(), record.frame_count),
        });
    }
    Ok(poses)
}

pub fn load_trajectory(out_dir: &Path, record: &SequenceRecord) -> Result<Trajectory> {
    let p = out_dir.join(&record.trajectory);
    Ok(Trajectory::from_json(&fs::read_to_string(&p).map_err(io_err(&p))?)?)
}

pub fn load_scene(out_dir: &Path, record: &SequenceRecord) -> Result<Scene> {
    let p = out_dir.join(&record.frame_dir).join("scene.json");
    serde_json::from_str(&fs::read_to_string(&p).map_err(io_err(&p))?).map_err(|e| PipelineError::Manifest {
        line: 0,
        message: format!("{}: {e}", p.display()),
    })
}

/// Counts of records per grade.
pub fn grade_histogram(m: &Manifest) -> BTreeMap<Grade, usize> {
    let mut h = BTreeMap::new();
    for r in &m.records {
        *h.entry(r.grade).or_insert(0) += 1;
    }
    h
}
