//! Image similarity (PSNR, SSIM) and camera-motion matching.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;
use crate::geometry::{
    estimate_homography_dlt, focal_scale_from_homography, rotation_from_homography, rotation_vector_deg,
    CameraIntrinsics, CameraPose, GeometryError, Homography, Pixel, DEFAULT_NOT_ROTATIONAL_RESIDUAL,
};
use crate::preference::Dimension;

pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("frame sizes differ: {a:?} vs {b:?}")]
    DimMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("frames of {width}x{height} are smaller than the {window}px window")]
    TooSmall { width: u32, height: u32, window: u32 },
    #[error("label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} inputs, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("only {0} usable correspondences")]
    TooFewTracks(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn same_dims(a: &Frame, b: &Frame) -> Result<()> {
    if (a.width(), a.height()) == (b.width(), b.height()) {
        Ok(())
    } else {
        Err(MetricsError::DimMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: f64,
    /// Frames were byte-identical; `db` holds the cap.
    pub exact: bool,
}

/// `10 log10(255² / MSE)` over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Frame, b: &Frame) -> Result<Psnr> {
    same_dims(a, b)?;
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(Psnr { db: PSNR_CAP_DB, exact: true });
    }
    let mse = sse / a.pixels().len() as f64;
    Ok(Psnr {
        db: (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP_DB),
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// Non-overlapping 8×8 blocks with uniform weights.
    #[default]
    Block8,
    /// Sliding 11×11 Gaussian window, σ = 1.5, valid region only.
    Gaussian11,
}

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

fn ssim_from_stats(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Weighted window statistics, two-pass so identical inputs give identical
/// variance and covariance.
fn window_stats(x: &[f64], y: &[f64], w: usize, x0: usize, y0: usize, weights: &[f64], size: usize) -> f64 {
    let (mut mx, mut my) = (0.0, 0.0);
    for j in 0..size {
        for i in 0..size {
            let k = (y0 + j) * w + x0 + i;
            let wt = weights[j * size + i];
            mx += wt * x[k];
            my += wt * y[k];
        }
    }
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for j in 0..size {
        for i in 0..size {
            let k = (y0 + j) * w + x0 + i;
            let wt = weights[j * size + i];
            let (dx, dy) = (x[k] - mx, y[k] - my);
            vx += wt * dx * dx;
            vy += wt * dy * dy;
            cxy += wt * dx * dy;
        }
    }
    ssim_from_stats(mx, my, vx, vy, cxy)
}

fn gaussian_weights(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let mut w: Vec<f64> = (0..size * size).map(|k| g[k / size] * g[k % size]).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean SSIM over windows of the luma channel.
pub fn ssim_with(a: &Frame, b: &Frame, window: SsimWindow) -> Result<f64> {
    same_dims(a, b)?;
    let size = match window {
        SsimWindow::Block8 => 8,
        SsimWindow::Gaussian11 => 11,
    };
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < size || h < size {
        return Err(MetricsError::TooSmall {
            width: a.width(),
            height: a.height(),
            window: size as u32,
        });
    }
    let (x, y) = (a.luma(), b.luma());
    let (weights, stride) = match window {
        SsimWindow::Block8 => (vec![1.0 / 64.0; 64], 8),
        SsimWindow::Gaussian11 => (gaussian_weights(11, 1.5), 1),
    };
    let mut total = 0.0;
    let mut count = 0usize;
    let mut y0 = 0;
    while y0 + size <= h {
        let mut x0 = 0;
        while x0 + size <= w {
            total += window_stats(&x, &y, w, x0, y0, &weights, size);
            count += 1;
            x0 += stride;
        }
        y0 += stride;
    }
    Ok(total / count as f64)
}

pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    ssim_with(a, b, SsimWindow::Block8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MotionLabel {
    PanLeft,
    PanRight,
    TiltUp,
    TiltDown,
    RollCw,
    RollCcw,
    ZoomIn,
    ZoomOut,
    Static,
}

impl MotionLabel {
    /// Label of the same interval traversed backwards.
    pub fn reversed(&self) -> MotionLabel {
        use MotionLabel::*;
        match self {
            PanLeft => PanRight,
            PanRight => PanLeft,
            TiltUp => TiltDown,
            TiltDown => TiltUp,
            RollCw => RollCcw,
            RollCcw => RollCw,
            ZoomIn => ZoomOut,
            ZoomOut => ZoomIn,
            Static => Static,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Smallest per-interval rotation component (degrees) that counts.
    pub rotation_threshold_deg: f64,
    /// Smallest forward camera travel that counts as zoom (pose path).
    pub zoom_translation_threshold: f64,
    /// Smallest `|s - 1|` of the homography focal scale that counts as zoom.
    pub zoom_scale_threshold: f64,
    pub tracker: TrackerConfig,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            rotation_threshold_deg: 0.1,
            zoom_translation_threshold: 1e-3,
            zoom_scale_threshold: 2e-3,
            tracker: TrackerConfig::default(),
        }
    }
}

/// Label of a camera-frame motion rotation vector `(pitch, yaw, roll)`.
fn label_rotation(omega_deg: &Vector3<f64>, threshold: f64) -> Option<MotionLabel> {
    let axis = omega_deg.iamax();
    let v = omega_deg[axis];
    if v.abs() <= threshold {
        return None;
    }
    Some(match (axis, v > 0.0) {
        (0, true) => MotionLabel::TiltUp,
        (0, false) => MotionLabel::TiltDown,
        (1, true) => MotionLabel::PanRight,
        (1, false) => MotionLabel::PanLeft,
        (_, true) => MotionLabel::RollCw,
        (_, false) => MotionLabel::RollCcw,
    })
}

/// `R_rel = R_b R_aᵀ` is the transpose of the camera-frame motion.
fn label_relative_rotation(r_rel: &Matrix3<f64>, threshold: f64) -> Option<MotionLabel> {
    label_rotation(&rotation_vector_deg(&r_rel.transpose()), threshold)
}

pub fn classify_pose_interval(a: &CameraPose, b: &CameraPose, cfg: &MotionConfig) -> MotionLabel {
    if let Some(label) = label_relative_rotation(&a.rotation_to(b), cfg.rotation_threshold_deg) {
        return label;
    }
    // travel along the first camera's optical axis
    let forward = (a.rotation * (b.center() - a.center())).z;
    if forward > cfg.zoom_translation_threshold {
        MotionLabel::ZoomIn
    } else if forward < -cfg.zoom_translation_threshold {
        MotionLabel::ZoomOut
    } else {
        MotionLabel::Static
    }
}

/// One label per consecutive pose pair.
pub fn classify_motion_poses(poses: &[CameraPose], cfg: &MotionConfig) -> Result<Vec<MotionLabel>> {
    if poses.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: poses.len() });
    }
    Ok(poses.windows(2).map(|w| classify_pose_interval(&w[0], &w[1], cfg)).collect())
}

/// Label an interval from the homography taking frame `a` pixels to frame `b`.
pub fn classify_homography(k: &CameraIntrinsics, h: &Homography, cfg: &MotionConfig) -> Result<MotionLabel> {
    let s = focal_scale_from_homography(k, h);
    if s - 1.0 > cfg.zoom_scale_threshold {
        return Ok(MotionLabel::ZoomIn);
    }
    if 1.0 - s > cfg.zoom_scale_threshold {
        return Ok(MotionLabel::ZoomOut);
    }
    let r = rotation_from_homography(k, h, DEFAULT_NOT_ROTATIONAL_RESIDUAL)?;
    Ok(label_relative_rotation(&r, cfg.rotation_threshold_deg).unwrap_or(MotionLabel::Static))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Grid points per side.
    pub grid: usize,
    /// Half-size of the matched patch.
    pub patch_radius: usize,
    /// Largest displacement searched, in pixels.
    pub search_radius: usize,
    /// Patches with less luma variance than this are not tracked.
    pub min_variance: f64,
    /// Reprojection error (pixels) above which a track is dropped before refitting.
    pub inlier_px: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            grid: 8,
            patch_radius: 6,
            search_radius: 14,
            min_variance: 20.0,
            inlier_px: 1.0,
        }
    }
}

fn patch_ssd(a: &[f64], b: &[f64], w: usize, pa: (usize, usize), pb: (usize, usize), r: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..=2 * r {
        let ra = (pa.1 + j - r) * w + pa.0 - r;
        let rb = (pb.1 + j - r) * w + pb.0 - r;
        for i in 0..=2 * r {
            let d = a[ra + i] - b[rb + i];
            s += d * d;
        }
    }
    s
}

fn patch_variance(a: &[f64], w: usize, p: (usize, usize), r: usize) -> f64 {
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for j in 0..=2 * r {
        for i in 0..=2 * r {
            let v = a[(p.1 + j - r) * w + p.0 + i - r];
            s += v;
            s2 += v * v;
        }
    }
    let m = s / n;
    (s2 / n - m * m).max(0.0)
}

/// Parabola vertex offset through three samples, in `[-0.5, 0.5]`.
fn parabolic(l: f64, c: f64, r: f64) -> f64 {
    let den = l - 2.0 * c + r;
    if den <= 0.0 {
        0.0
    } else {
        (0.5 * (l - r) / den).clamp(-0.5, 0.5)
    }
}

/// Block-matching tracks from a fixed grid in `a` into `b`.
pub fn track_grid(a: &Frame, b: &Frame, cfg: &TrackerConfig) -> Result<Vec<(Pixel, Pixel)>> {
    same_dims(a, b)?;
    let (w, h) = (a.width() as usize, a.height() as usize);
    let (r, s) = (cfg.patch_radius, cfg.search_radius);
    let margin = r + s + 1;
    if w <= 2 * margin || h <= 2 * margin || cfg.grid < 2 {
        return Err(MetricsError::TooSmall {
            width: a.width(),
            height: a.height(),
            window: (2 * margin) as u32,
        });
    }
    let (la, lb) = (a.luma(), b.luma());
    let mut out = Vec::new();
    for gy in 0..cfg.grid {
        for gx in 0..cfg.grid {
            let px = margin + gx * (w - 1 - 2 * margin) / (cfg.grid - 1);
            let py = margin + gy * (h - 1 - 2 * margin) / (cfg.grid - 1);
            if patch_variance(&la, w, (px, py), r) < cfg.min_variance {
                continue;
            }
            let side = 2 * s + 1;
            let mut costs = vec![f64::INFINITY; side * side];
            let mut best = (0usize, 0usize, f64::INFINITY);
            for dy in 0..side {
                for dx in 0..side {
                    let q = (px + dx - s, py + dy - s);
                    let c = patch_ssd(&la, &lb, w, (px, py), q, r);
                    costs[dy * side + dx] = c;
                    if c < best.2 {
                        best = (dx, dy, c);
                    }
                }
            }
            let (bx, by, _) = best;
            // the minimum must be interior to refine it
            if bx == 0 || by == 0 || bx == side - 1 || by == side - 1 {
                continue;
            }
            let at = |x: usize, y: usize| costs[y * side + x];
            let ox = parabolic(at(bx - 1, by), at(bx, by), at(bx + 1, by));
            let oy = parabolic(at(bx, by - 1), at(bx, by), at(bx, by + 1));
            let from = Pixel::new(px as f64, py as f64);
            let to = Pixel::new((px + bx) as f64 - s as f64 + ox, (py + by) as f64 - s as f64 + oy);
            out.push((from, to));
        }
    }
    Ok(out)
}

/// Homography from `a` to `b` fitted on tracked correspondences, refitted
/// once on the inliers of the first fit.
pub fn estimate_frame_homography(a: &Frame, b: &Frame, cfg: &TrackerConfig) -> Result<Homography> {
    let tracks = track_grid(a, b, cfg)?;
    if tracks.len() < 8 {
        return Err(MetricsError::TooFewTracks(tracks.len()));
    }
    let h = estimate_homography_dlt(&tracks)?;
    let inliers: Vec<_> = tracks
        .iter()
        .filter(|(p, q)| h.apply(p).map(|m| (m - q).norm() <= cfg.inlier_px).unwrap_or(false))
        .cloned()
        .collect();
    if inliers.len() < 8 {
        return Err(MetricsError::TooFewTracks(inliers.len()));
    }
    Ok(estimate_homography_dlt(&inliers)?)
}

/// One label per consecutive frame pair, through tracked homographies.
pub fn classify_motion_frames(frames: &[Frame], k: &CameraIntrinsics, cfg: &MotionConfig) -> Result<Vec<MotionLabel>> {
    if frames.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: frames.len() });
    }
    frames
        .windows(2)
        .map(|w| {
            if w[0] == w[1] {
                return Ok(MotionLabel::Static);
            }
            let h = estimate_frame_homography(&w[0], &w[1], &cfg.tracker)?;
            classify_homography(k, &h, cfg)
        })
        .collect()
}

/// Fraction of intervals whose labels agree.
pub fn cmm(pred: &[MotionLabel], gt: &[MotionLabel]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    Ok(pred.iter().zip(gt).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub psnr_exact: bool,
    pub ssim: f64,
    pub cmm: f64,
    pub accuracy: BTreeMap<Dimension, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceComparison {
    pub psnr: f64,
    pub psnr_exact: bool,
    pub ssim: f64,
    pub cmm: f64,
}

/// Frame-wise PSNR/SSIM averages and pose-path motion agreement of a
/// predicted sequence against a reference.
pub fn compare_sequences(
    pred_frames: &[Frame],
    ref_frames: &[Frame],
    pred_poses: &[CameraPose],
    ref_poses: &[CameraPose],
    cfg: &MotionConfig,
) -> Result<SequenceComparison> {
    if pred_frames.len() != ref_frames.len() {
        return Err(MetricsError::LengthMismatch(pred_frames.len(), ref_frames.len()));
    }
    if pred_frames.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    let mut ps = 0.0;
    let mut ss = 0.0;
    let mut exact = true;
    for (p, r) in pred_frames.iter().zip(ref_frames) {
        let v = psnr(p, r)?;
        ps += v.db;
        exact &= v.exact;
        ss += ssim(p, r)?;
    }
    let n = pred_frames.len() as f64;
    let cmm = cmm(&classify_motion_poses(pred_poses, cfg)?, &classify_motion_poses(ref_poses, cfg)?)?;
    Ok(SequenceComparison {
        psnr: ps / n,
        psnr_exact: exact,
        ssim: ss / n,
        cmm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{camera_motion, homography_pure_rotation};
    use crate::scenegen::texture_image;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn gray(v: u8) -> Frame {
        Frame::filled(64, 64, [v, v, v])
    }

    #[test]
    fn psnr_examples() {
        let a = texture_image(32, 32, 1);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr { db: 100.0, exact: true });
        assert!((psnr(&gray(0), &gray(255)).unwrap().db).abs() < 1e-12);
        let base = Frame::from_fn(40, 30, |x, y| [(x * 3) as u8, (y * 5) as u8, 100]);
        let mut plus = base.clone();
        plus.pixels_mut().iter_mut().for_each(|v| *v += 1);
        let p = psnr(&base, &plus).unwrap();
        assert!((p.db - 48.1308).abs() < 1e-3 && !p.exact);
        assert!((psnr(&plus, &base).unwrap().db - p.db).abs() == 0.0);
        assert!(matches!(psnr(&base, &gray(1)), Err(MetricsError::DimMismatch { .. })));
    }

    #[test]
    fn psnr_falls_with_noise() {
        let base = texture_image(64, 64, 2);
        let mut last = f64::INFINITY;
        for amp in [2i32, 8, 32] {
            let mut rng = rng_from_seed(77);
            let mut noisy = base.clone();
            noisy.pixels_mut().iter_mut().for_each(|v| {
                *v = (*v as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
            });
            let p = psnr(&base, &noisy).unwrap().db;
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_examples() {
        let a = texture_image(64, 64, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim_with(&a, &a, SsimWindow::Gaussian11).unwrap(), 1.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
        assert!((ssim(&gray(100), &gray(110)).unwrap() - expected).abs() < 1e-6);
        assert!((expected - 0.9955).abs() < 1e-4);

        let mut rng = rng_from_seed(5);
        let noise = Frame::from_fn(256, 256, |_, _| [rng.random(), rng.random(), rng.random()]);
        let img = texture_image(256, 256, 6);
        assert!(ssim(&img, &noise).unwrap() < 0.2);
        assert!((ssim(&img, &noise).unwrap() - ssim(&noise, &img).unwrap()).abs() < 1e-12);
        assert!(matches!(ssim(&Frame::filled(4, 4, [0; 3]), &Frame::filled(4, 4, [0; 3])), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn cmm_examples() {
        use MotionLabel::*;
        assert_eq!(cmm(&[PanLeft, Static], &[PanLeft, Static]).unwrap(), 1.0);
        assert_eq!(cmm(&[PanLeft; 4], &[PanRight; 4]).unwrap(), 0.0);
        assert_eq!(cmm(&[PanLeft, TiltUp, ZoomIn, Static], &[PanLeft, TiltDown, ZoomIn, RollCw]).unwrap(), 0.5);
        assert_eq!(cmm(&[PanLeft], &[]), Err(MetricsError::LengthMismatch(1, 0)));
    }

    #[test]
    fn pose_path_examples() {
        let cfg = MotionConfig::default();
        let p = CameraPose::identity().turned(&camera_motion(4.0, -2.0, 1.0));
        assert_eq!(classify_pose_interval(&p, &p, &cfg), MotionLabel::Static);
        let cases = [
            (camera_motion(2.0, 0.0, 0.0), MotionLabel::PanRight),
            (camera_motion(-2.0, 0.0, 0.0), MotionLabel::PanLeft),
            (camera_motion(0.0, 1.0, 0.0), MotionLabel::TiltUp),
            (camera_motion(0.0, -1.0, 0.0), MotionLabel::TiltDown),
            (camera_motion(0.0, 0.0, 1.0), MotionLabel::RollCw),
            (camera_motion(0.0, 0.0, -1.0), MotionLabel::RollCcw),
        ];
        for (m, label) in cases {
            let q = p.turned(&m);
            assert_eq!(classify_pose_interval(&p, &q, &cfg), label);
            assert_eq!(classify_pose_interval(&q, &p, &cfg), label.reversed());
        }
        let fwd = CameraPose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -0.1)).unwrap();
        assert_eq!(classify_pose_interval(&CameraPose::identity(), &fwd, &cfg), MotionLabel::ZoomIn);
        assert_eq!(classify_pose_interval(&fwd, &CameraPose::identity(), &cfg), MotionLabel::ZoomOut);
        let tiny = p.turned(&camera_motion(0.05, 0.0, 0.0));
        assert_eq!(classify_pose_interval(&p, &tiny, &cfg), MotionLabel::Static);
    }

    #[test]
    fn homography_path_examples() {
        let k = CameraIntrinsics::centered(256.0, 256, 256).unwrap();
        let cfg = MotionConfig::default();
        let pan = homography_pure_rotation(&k, &camera_motion(2.0, 0.0, 0.0).transpose()).unwrap();
        assert_eq!(classify_homography(&k, &pan, &cfg).unwrap(), MotionLabel::PanRight);
        let s = 1.05;
        let zoom = Homography::new(k.matrix() * Matrix3::from_diagonal(&Vector3::new(s, s, 1.0)) * k.inverse_matrix()).unwrap();
        assert_eq!(classify_homography(&k, &zoom, &cfg).unwrap(), MotionLabel::ZoomIn);
        assert_eq!(classify_homography(&k, &zoom.inverse(), &cfg).unwrap(), MotionLabel::ZoomOut);
        assert_eq!(classify_homography(&k, &Homography::identity(), &cfg).unwrap(), MotionLabel::Static);
    }

    #[test]
    fn tracker_recovers_a_shift() {
        let a = texture_image(160, 160, 8);
        let h = Homography::translation(3.0, -2.0);
        let b = crate::geometry::warp_image(&a, &h, 160, 160, [0, 0, 0]);
        let est = estimate_frame_homography(&a, &b, &TrackerConfig::default()).unwrap();
        let p = est.apply(&Pixel::new(80.0, 80.0)).unwrap();
        assert!((p - Pixel::new(83.0, 78.0)).norm() < 0.05, "{p:?}");
    }
}
