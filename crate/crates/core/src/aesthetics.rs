//! Rule-based visual quality (VQ), motion quality (MQ) and composition (CA)
//! scorers.
//!
//! Each scorer works on a `[0, 1]` rubric value `u` which is mapped to the raw
//! scale by the affine [`Calibration`] (`raw = offset + gain * u`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Frame;
use crate::geometry::Pixel;

#[derive(Debug, Error, PartialEq)]
pub enum AestheticsError {
    #[error("empty frame sequence")]
    EmptySequence,
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("frame has no subjects and no horizon")]
    NothingToScore,
    #[error("invalid scorer configuration: {0}")]
    BadConfig(String),
}

pub type Result<T> = std::result::Result<T, AestheticsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub vq: f64,
    pub mq: f64,
    pub ca: f64,
}

impl DimensionScores {
    pub fn as_array(&self) -> [f64; 3] {
        [self.vq, self.mq, self.ca]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectObservation {
    pub centroid: Pixel,
    /// `[x0, y0, x1, y1]`, clipped to the frame.
    pub bbox: [f64; 4],
    pub area_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub offset: f64,
    pub gain: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { offset: -5.0, gain: 5.0 }
    }
}

impl Calibration {
    pub fn apply(&self, u: f64) -> f64 {
        self.offset + self.gain * u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AestheticsConfig {
    pub calibration: Calibration,
    /// Laplacian variance that maps to a sharpness term of 1.
    pub sharpness_reference: f64,
    /// Luma at or below / at or above these counts as clipped.
    pub clip_low: f64,
    pub clip_high: f64,
    /// Thirds, balance and levelness weights.
    pub ca_weights: [f64; 3],
    /// Total motion below this (degrees) is static.
    pub static_threshold_deg: f64,
    /// Total motion above `factor * budget` is too intense.
    pub intensity_factor: f64,
}

impl Default for AestheticsConfig {
    fn default() -> Self {
        AestheticsConfig {
            calibration: Calibration::default(),
            sharpness_reference: 100.0,
            clip_low: 2.0,
            clip_high: 253.0,
            ca_weights: [1.0 / 3.0; 3],
            static_threshold_deg: 0.5,
            intensity_factor: 1.5,
        }
    }
}

impl AestheticsConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.calibration;
        if !(c.offset.is_finite() && c.gain.is_finite() && c.gain > 0.0) {
            return Err(AestheticsError::BadConfig("calibration must be finite with positive gain".into()));
        }
        if !(self.sharpness_reference.is_finite() && self.sharpness_reference > 0.0) {
            return Err(AestheticsError::BadConfig("sharpness_reference must be positive".into()));
        }
        if self.ca_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.ca_weights.iter().sum::<f64>() <= 0.0 {
            return Err(AestheticsError::BadConfig("ca_weights must be non-negative, not all zero".into()));
        }
        if !(self.static_threshold_deg >= 0.0 && self.intensity_factor > 0.0) {
            return Err(AestheticsError::BadConfig("motion thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Variance of the 4-neighbour Laplacian of luma over interior pixels.
pub fn laplacian_variance(frame: &Frame) -> f64 {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let l = frame.luma();
    let n = ((w - 2) * (h - 2)) as f64;
    let (mut s, mut s2) = (0.0, 0.0);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let v = l[i - 1] + l[i + 1] + l[i - w] + l[i + w] - 4.0 * l[i];
            s += v;
            s2 += v * v;
        }
    }
    let mean = s / n;
    (s2 / n - mean * mean).max(0.0)
}

/// Log-scaled sharpness: `ln(1 + lapvar) / ln(1 + reference)`.
pub fn sharpness_term(frame: &Frame, cfg: &AestheticsConfig) -> f64 {
    laplacian_variance(frame).ln_1p() / cfg.sharpness_reference.ln_1p()
}

pub fn clipped_fraction(frame: &Frame, cfg: &AestheticsConfig) -> f64 {
    let l = frame.luma();
    if l.is_empty() {
        return 0.0;
    }
    l.iter().filter(|&&v| v <= cfg.clip_low || v >= cfg.clip_high).count() as f64 / l.len() as f64
}

/// Mean over frames of sharpness minus clipped fraction, calibrated.
pub fn vq_score(frames: &[Frame], cfg: &AestheticsConfig) -> Result<f64> {
    if frames.is_empty() {
        return Err(AestheticsError::EmptySequence);
    }
    let u = frames
        .iter()
        .map(|f| sharpness_term(f, cfg) - clipped_fraction(f, cfg))
        .sum::<f64>()
        / frames.len() as f64;
    Ok(cfg.calibration.apply(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionBreakdown {
    pub jerk: f64,
    pub total_motion: f64,
    pub is_static: bool,
    pub too_intense: bool,
}

/// Motion statistics behind [`mq_score`]. Total motion is the peak-to-peak
/// excursion of the angle series.
pub fn motion_breakdown(angles_deg: &[f64], budget_deg: f64, cfg: &AestheticsConfig) -> Result<MotionBreakdown> {
    if angles_deg.len() < 3 {
        return Err(AestheticsError::TooShort { need: 3, got: angles_deg.len() });
    }
    let jerk = angles_deg
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
        .sum::<f64>()
        / (angles_deg.len() - 2) as f64;
    let max = angles_deg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = angles_deg.iter().cloned().fold(f64::INFINITY, f64::min);
    let total_motion = max - min;
    Ok(MotionBreakdown {
        jerk,
        total_motion,
        is_static: total_motion < cfg.static_threshold_deg,
        too_intense: total_motion > cfg.intensity_factor * budget_deg,
    })
}

/// Penalizes jerk, near-static motion, and motion beyond the budget.
pub fn mq_score(angles_deg: &[f64], budget_deg: f64, cfg: &AestheticsConfig) -> Result<f64> {
    let m = motion_breakdown(angles_deg, budget_deg, cfg)?;
    let penalty = m.jerk + f64::from(u8::from(m.is_static)) + f64::from(u8::from(m.too_intense));
    Ok(cfg.calibration.apply(1.0 - penalty))
}

/// Per-term composition values; `None` where the term does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaTerms {
    pub thirds: Option<f64>,
    pub balance: Option<f64>,
    pub levelness: Option<f64>,
}

/// The four rule-of-thirds intersections in pixel-center coordinates.
pub fn thirds_points(width: u32, height: u32) -> [Pixel; 4] {
    let (w, h) = (width as f64, height as f64);
    let xs = [w / 3.0 - 0.5, 2.0 * w / 3.0 - 0.5];
    let ys = [h / 3.0 - 0.5, 2.0 * h / 3.0 - 0.5];
    [
        Pixel::new(xs[0], ys[0]),
        Pixel::new(xs[1], ys[0]),
        Pixel::new(xs[0], ys[1]),
        Pixel::new(xs[1], ys[1]),
    ]
}

pub fn ca_terms(width: u32, height: u32, subjects: &[SubjectObservation], horizon_angle_deg: Option<f64>) -> CaTerms {
    let (w, h) = (width as f64, height as f64);
    let diag = w.hypot(h);
    let weights: Vec<f64> = subjects.iter().map(|s| s.area_fraction.max(0.0)).collect();
    let wsum: f64 = weights.iter().sum();
    // equal weighting when areas are all zero
    let weight = |i: usize| if wsum > 0.0 { weights[i] / wsum } else { 1.0 / subjects.len() as f64 };

    let (thirds, balance) = if subjects.is_empty() {
        (None, None)
    } else {
        let pts = thirds_points(width, height);
        let thirds = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d = pts.iter().map(|p| (s.centroid - p).norm()).fold(f64::INFINITY, f64::min);
                weight(i) * (1.0 - d / diag).clamp(0.0, 1.0)
            })
            .sum::<f64>();
        let com_x: f64 = subjects.iter().enumerate().map(|(i, s)| weight(i) * s.centroid.x).sum();
        let balance = (1.0 - (com_x - (w - 1.0) / 2.0).abs() / (w / 2.0)).clamp(0.0, 1.0);
        (Some(thirds.clamp(0.0, 1.0)), Some(balance))
    };
    let levelness = horizon_angle_deg.map(|a| (1.0 - a.abs() / 45.0).clamp(0.0, 1.0));
    CaTerms { thirds, balance, levelness }
}

/// Weighted mean of the applicable terms, in `[0, 1]`. Weights of absent
/// terms are dropped and the rest renormalized.
pub fn ca_frame_unit(
    width: u32,
    height: u32,
    subjects: &[SubjectObservation],
    horizon_angle_deg: Option<f64>,
    cfg: &AestheticsConfig,
) -> Result<f64> {
    let t = ca_terms(width, height, subjects, horizon_angle_deg);
    let mut num = 0.0;
    let mut den = 0.0;
    for (term, w) in [t.thirds, t.balance, t.levelness].into_iter().zip(cfg.ca_weights) {
        if let Some(v) = term {
            num += w * v;
            den += w;
        }
    }
    if t.thirds.is_none() && t.levelness.is_none() {
        return Err(AestheticsError::NothingToScore);
    }
    if den <= 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Calibrated composition score of one frame.
pub fn ca_frame_score(
    frame: &Frame,
    subjects: &[SubjectObservation],
    horizon_angle_deg: Option<f64>,
    cfg: &AestheticsConfig,
) -> Result<f64> {
    ca_frame_unit(frame.width(), frame.height(), subjects, horizon_angle_deg, cfg).map(|u| cfg.calibration.apply(u))
}

/// What the composition scorer needs to know about one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaInput {
    pub width: u32,
    pub height: u32,
    pub subjects: Vec<SubjectObservation>,
    pub horizon_angle_deg: Option<f64>,
}

impl CaInput {
    pub fn score(&self, cfg: &AestheticsConfig) -> Result<f64> {
        ca_frame_unit(self.width, self.height, &self.subjects, self.horizon_angle_deg, cfg)
            .map(|u| cfg.calibration.apply(u))
    }
}

/// Last-frame score minus first-frame score.
pub fn ca_improvement(frames: &[CaInput], cfg: &AestheticsConfig) -> Result<f64> {
    if frames.len() < 2 {
        return Err(AestheticsError::TooShort { need: 2, got: frames.len() });
    }
    let first = frames[0].score(cfg)?;
    let last = frames[frames.len() - 1].score(cfg)?;
    Ok(last - first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> AestheticsConfig {
        AestheticsConfig::default()
    }

    fn checkerboard(n: u32, cell: u32) -> Frame {
        Frame::from_fn(n, n, |x, y| if (x / cell + y / cell) % 2 == 0 { [40, 40, 40] } else { [210, 210, 210] })
    }

    fn subject(x: f64, y: f64, area: f64) -> SubjectObservation {
        SubjectObservation {
            centroid: Pixel::new(x, y),
            bbox: [x - 5.0, y - 5.0, x + 5.0, y + 5.0],
            area_fraction: area,
        }
    }

    #[test]
    fn sharp_beats_blurred() {
        let sharp = checkerboard(64, 4);
        let blurred = sharp.box_blur(2);
        assert!(vq_score(&[sharp], &cfg()).unwrap() > vq_score(&[blurred], &cfg()).unwrap());
    }

    #[test]
    fn constant_frames_have_zero_sharpness() {
        let f = Frame::filled(32, 32, [120, 120, 120]);
        assert_eq!(laplacian_variance(&f), 0.0);
        assert_eq!(sharpness_term(&f, &cfg()), 0.0);
        assert_eq!(vq_score(&[f.clone(), f], &cfg()).unwrap(), cfg().calibration.apply(0.0));
        assert_eq!(vq_score(&[], &cfg()), Err(AestheticsError::EmptySequence));
    }

    #[test]
    fn blur_radius_ordering_on_seeded_texture() {
        let base = crate::scenegen::texture_image(96, 96, 17);
        let r1 = vq_score(&[base.box_blur(1)], &cfg()).unwrap();
        let r3 = vq_score(&[base.box_blur(3)], &cfg()).unwrap();
        // direct recomputation of the sharpness terms
        let oracle = |f: &Frame| {
            let l = f.luma();
            let w = f.width() as usize;
            let mut vals = Vec::new();
            for y in 1..f.height() as usize - 1 {
                for x in 1..w - 1 {
                    let i = y * w + x;
                    vals.push(l[i - 1] + l[i + 1] + l[i - w] + l[i + w] - 4.0 * l[i]);
                }
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            var.ln_1p() / 101f64.ln()
        };
        let expected = 5.0 * (oracle(&base.box_blur(1)) - oracle(&base.box_blur(3)));
        assert!(r1 - r3 > 0.0);
        assert!(((r1 - r3) - expected).abs() < 1e-9);
    }

    #[test]
    fn clipping_is_penalized() {
        let mut f = Frame::filled(10, 10, [128, 128, 128]);
        for x in 0..10 {
            f.set(x, 0, [255, 255, 255]);
        }
        assert!((clipped_fraction(&f, &cfg()) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mq_examples() {
        let c = cfg();
        let ramp: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let m = motion_breakdown(&ramp, 10.0, &c).unwrap();
        assert_eq!(m.jerk, 0.0);
        assert!(!m.is_static && !m.too_intense);
        assert_eq!(mq_score(&ramp, 10.0, &c).unwrap(), 0.0);

        let flat = vec![0.0; 8];
        assert!(motion_breakdown(&flat, 10.0, &c).unwrap().is_static);
        assert_eq!(mq_score(&flat, 10.0, &c).unwrap(), -5.0);

        let zigzag: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { -5.0 } else { 5.0 }).collect();
        assert!(mq_score(&zigzag, 10.0, &c).unwrap() < mq_score(&ramp, 10.0, &c).unwrap());

        let far: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        assert!(motion_breakdown(&far, 10.0, &c).unwrap().too_intense);
        assert_eq!(mq_score(&[1.0, 2.0], 10.0, &c), Err(AestheticsError::TooShort { need: 3, got: 2 }));
    }

    #[test]
    fn ca_examples() {
        let c = cfg();
        let [p, ..] = thirds_points(300, 300);
        let t = ca_terms(300, 300, &[subject(p.x, p.y, 0.01)], Some(0.0));
        assert_eq!(t.thirds, Some(1.0));
        assert_eq!(t.levelness, Some(1.0));

        let f = Frame::filled(300, 300, [0, 0, 0]);
        let s = [subject(p.x, p.y, 0.01)];
        assert!(ca_frame_score(&f, &s, Some(10.0), &c).unwrap() < ca_frame_score(&f, &s, Some(0.0), &c).unwrap());

        let pair = [subject(p.x, 150.0, 0.02), subject(299.0 - p.x, 150.0, 0.02)];
        assert_eq!(ca_terms(300, 300, &pair, None).balance, Some(1.0));

        assert_eq!(ca_frame_score(&f, &[], None, &c), Err(AestheticsError::NothingToScore));
        // horizon alone is scorable
        assert_eq!(ca_frame_score(&f, &[], Some(0.0), &c).unwrap(), 0.0);
    }

    #[test]
    fn improvement_examples() {
        let c = cfg();
        let [p, ..] = thirds_points(200, 200);
        let off = CaInput { width: 200, height: 200, subjects: vec![subject(20.0, 180.0, 0.01)], horizon_angle_deg: None };
        let on = CaInput { width: 200, height: 200, subjects: vec![subject(p.x, p.y, 0.01)], horizon_angle_deg: None };
        assert_eq!(ca_improvement(&[on.clone(), on.clone()], &c).unwrap(), 0.0);
        let fwd = ca_improvement(&[off.clone(), on.clone()], &c).unwrap();
        assert!(fwd > 0.0);
        assert_eq!(ca_improvement(&[on, off.clone()], &c).unwrap(), -fwd);
        assert!(matches!(ca_improvement(&[off], &c), Err(AestheticsError::TooShort { .. })));
    }

    proptest! {
        #[test]
        fn improvement_is_antisymmetric(xs in prop::collection::vec((0.0..256.0f64, 0.0..256.0f64, 0.0..0.1f64, -40.0..40.0f64), 2..8)) {
            let c = cfg();
            let seq: Vec<CaInput> = xs
                .iter()
                .map(|&(x, y, a, h)| CaInput { width: 256, height: 256, subjects: vec![subject(x, y, a)], horizon_angle_deg: Some(h) })
                .collect();
            let mut rev = seq.clone();
            rev.reverse();
            prop_assert_eq!(ca_improvement(&rev, &c).unwrap(), -ca_improvement(&seq, &c).unwrap());
        }

        #[test]
        fn mirror_invariance(xs in prop::collection::vec((0.0..200.0f64, 0.0..256.0f64, 0.001..0.1f64), 1..4)) {
            let c = cfg();
            // a mirror-symmetric scene: each subject and its mirror image
            let mut subjects = Vec::new();
            for &(x, y, a) in &xs {
                subjects.push(subject(x, y, a));
                subjects.push(subject(255.0 - x, y, a));
            }
            let mirrored: Vec<_> = subjects.iter().map(|s| subject(255.0 - s.centroid.x, s.centroid.y, s.area_fraction)).collect();
            let a = ca_frame_unit(256, 256, &subjects, None, &c).unwrap();
            let b = ca_frame_unit(256, 256, &mirrored, None, &c).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((ca_terms(256, 256, &subjects, None).balance.unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn appended_copies_leave_vq_unchanged(seed in 0u64..50, copies in 1usize..4) {
            let c = cfg();
            let f = crate::scenegen::texture_image(24, 24, seed);
            let one = vq_score(std::slice::from_ref(&f), &c).unwrap();
            let many = vq_score(&vec![f; copies + 1], &c).unwrap();
            prop_assert!((one - many).abs() < 1e-12);
        }
    }
}
