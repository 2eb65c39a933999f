//! Synthetic scenes, a z-buffered splat renderer and planar homography views.
//!
//! Scenes are laid out so the identity pose is the well-composed view:
//! subjects sit on rule-of-thirds intersections with balanced visual weight
//! and the ground plane, when present, is level.

use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::aesthetics::SubjectObservation;
use crate::frame::Frame;
use crate::geometry::{
    homography_pure_rotation, project_camera_point, warp_image, CameraIntrinsics, CameraPose,
    GeometryError, Pixel, Point3,
};
use crate::seed::rng_from_seed;
use crate::trajgen::{frame_time, interpolate, Trajectory, TrajectoryError};


/// Background fill for every render.
pub const BACKGROUND: [u8; 3] = [128, 128, 128];
/// Ground color below the horizon of landscape scenes.
pub const GROUND: [u8; 3] = [96, 112, 74];
/// Fill for planar-view pixels that map outside the source photo.
pub const PLANAR_FILL: [u8; 3] = [0, 0, 0];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown scene template {0:?}")]
    UnknownTemplate(String),
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("trajectory has non-zero translation; planar views need pure rotation")]
    NonRotationalTrajectory,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, SceneError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    SingleSubject,
    MultiSubject,
    Landscape,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::SingleSubject, Template::MultiSubject, Template::Landscape];

    pub fn as_str(&self) -> &'static str {
        match self {
            Template::SingleSubject => "single_subject",
            Template::MultiSubject => "multi_subject",
            Template::Landscape => "landscape",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Template::SingleSubject => 0x51,
            Template::MultiSubject => 0x4d,
            Template::Landscape => 0x4c,
        }
    }
}

impl std::fmt::Display for Template {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Template {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SceneError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Sphere,
    Box,
    Billboard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Subject,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneElement {
    pub kind: ElementKind,
    pub center: Point3,
    pub size: f64,
    pub color: [u8; 3],
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub elements: Vec<SceneElement>,
    /// Up-pointing normal of the ground plane, in world coordinates.
    pub horizon: Option<Vector3<f64>>,
    pub seed: u64,
    pub template: Template,
}

impl Scene {
    pub fn subjects(&self) -> impl Iterator<Item = &SceneElement> {
        self.elements.iter().filter(|e| e.label == Label::Subject)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

/// Camera-frame direction through pixel `(u, v)` of a centered unit camera
/// with the given aspect, expressed as `(x/z, y/z)` offsets.
///
/// Templates are authored in these normalized offsets so scenes stay well
/// composed for any focal length where `fx = fy`: `(±1/6 · w/f, ±1/6 · h/f)`
/// are the thirds intersections.
fn thirds_direction(k: &CameraIntrinsics, col: f64, row: f64) -> (f64, f64) {
    let u = k.width as f64 * col;
    let v = k.height as f64 * row;
    // match `project`: pixel = f·x/z + c
    ((u - 0.5 - k.cx) / k.fx, (v - 0.5 - k.cy) / k.fy)
}

/// Reference camera the templates are composed for.
pub fn reference_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::centered(256.0, 256, 256).expect("valid constants")
}

fn subject_color(rng: &mut impl Rng) -> [u8; 3] {
    // saturated, away from the background gray and from clipping
    let hue = rng.random_range(0..6);
    let hi = rng.random_range(200..=230u8);
    let lo = rng.random_range(30..=60u8);
    let mid = rng.random_range(60..=200u8);
    match hue {
        0 => [hi, lo, mid / 2],
        1 => [lo, hi, mid / 2],
        2 => [lo, mid / 2, hi],
        3 => [hi, hi.saturating_sub(20), lo],
        4 => [hi, lo, hi],
        _ => [lo, hi, hi],
    }
}

fn place(k: &CameraIntrinsics, col: f64, row: f64, depth: f64) -> Point3 {
    let (dx, dy) = thirds_direction(k, col, row);
    Point3::new(dx * depth, dy * depth, depth)
}

/// Deterministic scene for `(seed, template)`.
pub fn make_scene(seed: u64, template: Template) -> Scene {
    let mut rng = rng_from_seed(seed ^ (template.tag() << 56));
    let k = reference_intrinsics();
    let mut elements = Vec::new();
    let mut horizon = None;

    match template {
        Template::SingleSubject => {
            let col = if rng.random_bool(0.5) { 1.0 / 3.0 } else { 2.0 / 3.0 };
            let row = if rng.random_bool(0.5) { 1.0 / 3.0 } else { 2.0 / 3.0 };
            let depth = rng.random_range(4.0..6.0);
            elements.push(SceneElement {
                kind: if rng.random_bool(0.5) { ElementKind::Sphere } else { ElementKind::Box },
                center: place(&k, col, row, depth),
                size: depth * rng.random_range(0.07..0.10),
                color: subject_color(&mut rng),
                label: Label::Subject,
            });
            // distant backdrop billboards, unlabeled clutter
            for _ in 0..rng.random_range(1..=2) {
                let depth = rng.random_range(14.0..20.0);
                elements.push(SceneElement {
                    kind: ElementKind::Billboard,
                    center: place(&k, rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), depth),
                    size: depth * rng.random_range(0.04..0.08),
                    color: [rng.random_range(100..160), rng.random_range(100..160), rng.random_range(100..160)],
                    label: Label::Background,
                });
            }
        }
        Template::MultiSubject => {
            let count = rng.random_range(2..=5usize);
            // thirds intersections: left column (TL, BL), right column (TR, BR)
            let left = [(1.0 / 3.0, 1.0 / 3.0), (1.0 / 3.0, 2.0 / 3.0)];
            let right = [(2.0 / 3.0, 1.0 / 3.0), (2.0 / 3.0, 2.0 / 3.0)];
            // apparent radius ratio per slot. Each quadrant column and row
            // carries equal total area (area ∝ ratio²), which centers the visual
            // weight; odd counts stack a near and a far subject on one slot.
            let slots: Vec<((f64, f64), f64)> = match count {
                2 => vec![(left[0], 1.0), (right[1], 1.0)],
                3 => vec![(left[0], 1.0), (right[1], 0.8), (right[1], 0.6)],
                4 => vec![(left[0], 1.0), (left[1], 1.0), (right[0], 1.0), (right[1], 1.0)],
                _ => vec![(left[0], 1.0), (left[1], 1.0), (right[0], 1.0), (right[1], 0.8), (right[1], 0.6)],
            };
            let base = rng.random_range(0.05..0.07);
            for ((col, row), ratio) in slots {
                let depth = rng.random_range(4.0..7.0);
                elements.push(SceneElement {
                    kind: ElementKind::Sphere,
                    center: place(&k, col, row, depth),
                    size: depth * base * ratio,
                    color: subject_color(&mut rng),
                    label: Label::Subject,
                });
            }
        }
        Template::Landscape => {
            horizon = Some(Vector3::new(0.0, -1.0, 0.0));
            let camera_height = rng.random_range(1.2..2.0);
            for _ in 0..rng.random_range(3..=6) {
                let depth = rng.random_range(20.0..60.0);
                let size = depth * rng.random_range(0.04..0.10);
                let x = depth * rng.random_range(-0.5..0.5);
                // billboards stand on the ground (y down, ground at +camera_height)
                elements.push(SceneElement {
                    kind: ElementKind::Billboard,
                    center: Point3::new(x, camera_height - size * 1.5, depth),
                    size,
                    color: [rng.random_range(40..90), rng.random_range(70..120), rng.random_range(40..80)],
                    label: Label::Background,
                });
            }
        }
    }
    Scene {
        elements,
        horizon,
        seed,
        template,
    }
}

/// Screen-space footprint of an element: center, half-extents and depth.
#[derive(Debug, Clone, Copy)]
struct Splat {
    center: Pixel,
    half_w: f64,
    half_h: f64,
    depth: f64,
    round: bool,
}

fn splat(k: &CameraIntrinsics, pose: &CameraPose, e: &SceneElement) -> Option<Splat> {
    let pc = pose.to_camera(&e.center);
    let center = project_camera_point(k, &pc).ok()?;
    // radius scales with 1/depth
    let r = k.fx * e.size / pc.z;
    let (half_w, half_h, round) = match e.kind {
        ElementKind::Sphere => (r, r, true),
        ElementKind::Box => (r, r, false),
        ElementKind::Billboard => (r, 1.5 * r, false),
    };
    Some(Splat {
        center,
        half_w,
        half_h,
        depth: pc.z,
        round,
    })
}

/// Z-buffered splat render. Deterministic: a pure function of its inputs.
pub fn render(scene: &Scene, k: &CameraIntrinsics, pose: &CameraPose) -> Frame {
    let (w, h) = (k.width, k.height);
    let mut frame = Frame::filled(w, h, BACKGROUND);

    if let Some(up) = scene.horizon {
        // ground wherever the viewing ray points below the horizon
        let rt = pose.rotation.transpose();
        let kinv = k.inverse_matrix();
        for y in 0..h {
            for x in 0..w {
                let ray = rt * (kinv * Vector3::new(x as f64, y as f64, 1.0));
                if ray.dot(&up) < 0.0 {
                    frame.set(x, y, GROUND);
                }
            }
        }
    }

    let mut zbuf = vec![f64::INFINITY; w as usize * h as usize];
    for e in &scene.elements {
        let Some(s) = splat(k, pose, e) else { continue };
        let x0 = (s.center.x - s.half_w).floor().max(0.0);
        let x1 = (s.center.x + s.half_w).ceil().min(w as f64 - 1.0);
        let y0 = (s.center.y - s.half_h).floor().max(0.0);
        let y1 = (s.center.y + s.half_h).ceil().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as u32..=y1 as u32 {
            for x in x0 as u32..=x1 as u32 {
                let dx = x as f64 - s.center.x;
                let dy = y as f64 - s.center.y;
                let inside = if s.round {
                    dx * dx + dy * dy <= s.half_w * s.half_w
                } else {
                    dx.abs() <= s.half_w && dy.abs() <= s.half_h
                };
                if !inside {
                    continue;
                }
                let idx = y as usize * w as usize + x as usize;
                if s.depth < zbuf[idx] {
                    zbuf[idx] = s.depth;
                    frame.set(x, y, e.color);
                }
            }
        }
    }
    frame
}

/// Render `n` frames at evenly spaced trajectory times; poses alongside.
pub fn render_sequence(
    scene: &Scene,
    k: &CameraIntrinsics,
    traj: &Trajectory,
    n: usize,
) -> Result<(Vec<Frame>, Vec<CameraPose>)> {
    let poses = sample_poses(traj, n)?;
    let frames = poses.par_iter().map(|p| render(scene, k, p)).collect();
    Ok((frames, poses))
}

/// Poses at `frame_time(k, n)` for `k = 0..n`.
pub fn sample_poses(traj: &Trajectory, n: usize) -> Result<Vec<CameraPose>> {
    if n < 2 {
        return Err(SceneError::TooFewFrames(n));
    }
    (0..n)
        .map(|k| interpolate(traj, frame_time(k, n)).map_err(SceneError::from))
        .collect()
}

/// Views of a photograph under a pure-rotation trajectory.
///
/// The photo is taken to be the view from the trajectory's first pose; frame
/// `k` is the photo warped by `K R_k R_0ᵀ K⁻¹`.
pub fn planar_views(img: &Frame, k: &CameraIntrinsics, traj: &Trajectory, n: usize) -> Result<Vec<Frame>> {
    if !traj.is_pure_rotation() {
        return Err(SceneError::NonRotationalTrajectory);
    }
    let poses = sample_poses(traj, n)?;
    let origin = traj.first().clone();
    poses
        .par_iter()
        .map(|pose| {
            if pose.rotation == origin.rotation {
                return Ok(img.clone());
            }
            let h = homography_pure_rotation(k, &origin.rotation_to(pose))?;
            Ok(warp_image(img, &h, k.width, k.height, PLANAR_FILL))
        })
        .collect()
}

/// Project every visible subject. Subjects behind the camera or with their
/// center outside the frame are not observed.
pub fn observe_subjects(scene: &Scene, k: &CameraIntrinsics, pose: &CameraPose) -> Vec<SubjectObservation> {
    let (w, h) = (k.width as f64, k.height as f64);
    scene
        .subjects()
        .filter_map(|e| splat(k, pose, e))
        .filter(|s| k.contains(&s.center))
        .map(|s| {
            let bbox = [
                (s.center.x - s.half_w).max(0.0),
                (s.center.y - s.half_h).max(0.0),
                (s.center.x + s.half_w).min(w - 1.0),
                (s.center.y + s.half_h).min(h - 1.0),
            ];
            let full = if s.round {
                std::f64::consts::PI * s.half_w * s.half_w
            } else {
                4.0 * s.half_w * s.half_h
            };
            let clipped = (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]);
            SubjectObservation {
                centroid: s.center,
                bbox,
                area_fraction: (full.min(clipped.max(0.0)) / (w * h)).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Horizon tilt in degrees (0 = level), if the horizon is in view direction.
///
/// The ground plane with normal `n` vanishes along the image line
/// `l = K⁻ᵀ R n`; its angle to the image x axis is the tilt.
pub fn horizon_angle(scene: &Scene, k: &CameraIntrinsics, pose: &CameraPose) -> Option<f64> {
    let n = scene.horizon?;
    let l = k.inverse_matrix().transpose() * (pose.rotation * n);
    let (a, b) = (l.x, l.y);
    if a.hypot(b) < 1e-15 {
        return None;
    }
    // direction of the line a·x + b·y + c = 0 is (b, -a)
    let mut angle = (-a).atan2(b).to_degrees();
    if angle > 90.0 {
        angle -= 180.0;
    } else if angle < -90.0 {
        angle += 180.0;
    }
    Some(angle)
}

/// Connected regions differing from `background`, as observations.
///
/// Pixels whose luma differs from the background luma by more than
/// `threshold` are foreground; 4-connected components smaller than
/// `min_pixels` are dropped.
pub fn segment_foreground(frame: &Frame, background: [u8; 3], threshold: f64, min_pixels: usize) -> Vec<SubjectObservation> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let bg = 0.299 * background[0] as f64 + 0.587 * background[1] as f64 + 0.114 * background[2] as f64;
    let luma = frame.luma();
    let fg: Vec<bool> = frame
        .pixels()
        .chunks_exact(3)
        .zip(luma.iter())
        .map(|(p, l)| (l - bg).abs() > threshold || p != background)
        .collect();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            sx += x as f64;
            sy += y as f64;
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut push = |j: usize| {
                if fg[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        if count >= min_pixels {
            out.push(SubjectObservation {
                centroid: Pixel::new(sx / count as f64, sy / count as f64),
                bbox: [x0 as f64, y0 as f64, x1 as f64, y1 as f64],
                area_fraction: count as f64 / (w * h) as f64,
            });
        }
    }
    out
}

/// Smooth multi-octave value-noise texture, handy as a stand-in photograph.
pub fn texture_image(width: u32, height: u32, seed: u64) -> Frame {
    let mut rng = rng_from_seed(seed);
    let octaves: Vec<(usize, Vec<[f64; 3]>)> = [6usize, 12, 24, 48]
        .iter()
        .map(|&cells| {
            let grid = (0..(cells + 1) * (cells + 1))
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            (cells, grid)
        })
        .collect();
    Frame::from_fn(width, height, |x, y| {
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for (o, (cells, grid)) in octaves.iter().enumerate() {
            let amp = 0.6f64.powi(o as i32);
            let gx = x as f64 / width as f64 * *cells as f64;
            let gy = y as f64 / height as f64 * *cells as f64;
            let (ix, iy) = ((gx as usize).min(cells - 1), (gy as usize).min(cells - 1));
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            // smoothstep
            let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
            let at = |i: usize, j: usize| grid[j * (cells + 1) + i];
            for c in 0..3 {
                let top = at(ix, iy)[c] * (1.0 - sx) + at(ix + 1, iy)[c] * sx;
                let bot = at(ix, iy + 1)[c] * (1.0 - sx) + at(ix + 1, iy + 1)[c] * sx;
                acc[c] += amp * (top * (1.0 - sy) + bot * sy);
            }
            total += amp;
        }
        acc.map(|v| (20.0 + 215.0 * v / total).round() as u8)
    })
}
