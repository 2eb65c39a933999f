//! Away trajectories inside an angle budget and their reversal.
//!
//! A sampled trajectory starts at the well-composed (optimal) view and walks
//! away from it; [`reverse`] turns it into the suboptimal→optimal sequence
//! used for training.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{geodesic_angle_deg, motion_from_rotation_vector, CameraPose, GeometryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("rotation budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("translation budget must be non-negative, got {0}")]
    InvalidTranslation(f64),
    #[error("need at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("time {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("keyframe times must start at 0, end at 1 and strictly increase")]
    BadTimes,
    #[error("trajectory has no keyframes")]
    Empty,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("trajectory json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, TrajectoryError>;

const TIME_GRID: f64 = 9_007_199_254_740_992.0; // 2^53

/// Snap a time in `[0, 1]` to the 2⁻⁵³ grid.
///
/// On that grid `1 − t` is exact, so reversal is an exact involution and
/// segment lengths are exact differences.
pub fn snap_time(t: f64) -> f64 {
    (t * TIME_GRID).round() / TIME_GRID
}

/// Time of frame `k` of `n`, symmetric so `frame_time(n-1-k) = 1 - frame_time(k)`.
pub fn frame_time(k: usize, n: usize) -> f64 {
    debug_assert!(n >= 2 && k < n);
    let last = n - 1;
    if 2 * k <= last {
        snap_time(k as f64 / last as f64)
    } else {
        1.0 - snap_time((last - k) as f64 / last as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub t: f64,
    pub pose: CameraPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    keyframes: Vec<Keyframe>,
}

impl Trajectory {
    /// Validates times (snapped to the exact grid) and poses.
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        let mut keyframes = keyframes;
        for kf in &mut keyframes {
            if !(0.0..=1.0).contains(&kf.t) {
                return Err(TrajectoryError::OutOfRange(kf.t));
            }
            kf.t = snap_time(kf.t);
            CameraPose::new(kf.pose.rotation, kf.pose.translation)?;
        }
        if keyframes.len() > 1 {
            let ok = keyframes[0].t == 0.0
                && keyframes[keyframes.len() - 1].t == 1.0
                && keyframes.windows(2).all(|w| w[0].t < w[1].t);
            if !ok {
                return Err(TrajectoryError::BadTimes);
            }
        }
        Ok(Self { keyframes })
    }

    /// Keyframes at evenly spaced times.
    pub fn from_poses(poses: Vec<CameraPose>) -> Result<Self> {
        let n = poses.len();
        if n == 1 {
            return Self::new(vec![Keyframe {
                t: 0.0,
                pose: poses.into_iter().next().unwrap(),
            }]);
        }
        Self::new(
            poses
                .into_iter()
                .enumerate()
                .map(|(k, pose)| Keyframe {
                    t: if n > 1 { frame_time(k, n) } else { 0.0 },
                    pose,
                })
                .collect(),
        )
    }

    /// Explicitly single-pose trajectory.
    pub fn constant(pose: CameraPose) -> Self {
        Self {
            keyframes: vec![Keyframe { t: 0.0, pose }],
        }
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn first(&self) -> &CameraPose {
        &self.keyframes[0].pose
    }

    pub fn last(&self) -> &CameraPose {
        &self.keyframes[self.keyframes.len() - 1].pose
    }

    pub fn is_pure_rotation(&self) -> bool {
        self.keyframes
            .iter()
            .all(|k| k.pose.translation.iter().all(|v| *v == 0.0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_records()).expect("plain data serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_records()).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let records: Vec<KeyframeRecord> =
            serde_json::from_str(s).map_err(|e| TrajectoryError::Json(e.to_string()))?;
        let keyframes = records
            .into_iter()
            .map(|r| {
                let [w, x, y, z] = r.quaternion;
                let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
                let rotation = q.to_rotation_matrix().into_inner();
                Ok(Keyframe {
                    t: r.t,
                    pose: CameraPose::new(rotation, Vector3::from(r.translation))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(keyframes)
    }

    fn to_records(&self) -> Vec<KeyframeRecord> {
        self.keyframes
            .iter()
            .map(|k| {
                let q = k.pose.quaternion();
                let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
                KeyframeRecord {
                    t: k.t,
                    quaternion: [q.w, q.i, q.j, q.k],
                    translation: [k.pose.translation.x, k.pose.translation.y, k.pose.translation.z],
                }
            })
            .collect()
    }
}

/// Serialized keyframe: unit quaternion `(w, x, y, z)` with `w ≥ 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct KeyframeRecord {
    t: f64,
    quaternion: [f64; 4],
    translation: [f64; 3],
}

/// Rotation cap for sampling: a fixed number of degrees, or one of
/// {10°, 20°, 30°} drawn uniformly per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotationCap {
    Degrees(f64),
    Mix(MixTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixTag {
    #[serde(rename = "MIX")]
    Mix,
}

pub const MIX_CAPS: [f64; 3] = [10.0, 20.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBudget {
    pub max_rotation: RotationCap,
    #[serde(default)]
    pub max_translation: f64,
}

impl AngleBudget {
    pub fn degrees(max_rotation: f64) -> Self {
        Self {
            max_rotation: RotationCap::Degrees(max_rotation),
            max_translation: 0.0,
        }
    }

    pub fn deg10() -> Self {
        Self::degrees(10.0)
    }

    pub fn deg20() -> Self {
        Self::degrees(20.0)
    }

    pub fn deg30() -> Self {
        Self::degrees(30.0)
    }

    pub fn mix() -> Self {
        Self {
            max_rotation: RotationCap::Mix(MixTag::Mix),
            max_translation: 0.0,
        }
    }

    pub fn with_translation(mut self, max_translation: f64) -> Self {
        self.max_translation = max_translation;
        self
    }

    /// Parse `"10"`, `"20"`, `"30"`, `"MIX"` or any positive number of degrees.
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mix") {
            return Ok(Self::mix());
        }
        let deg: f64 = s
            .trim_end_matches(['°', 'd'])
            .parse()
            .map_err(|_| TrajectoryError::Json(format!("bad budget {s:?}")))?;
        let b = Self::degrees(deg);
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if let RotationCap::Degrees(d) = self.max_rotation {
            if !(d > 0.0 && d.is_finite()) {
                return Err(TrajectoryError::InvalidBudget(d));
            }
        }
        if !(self.max_translation >= 0.0 && self.max_translation.is_finite()) {
            return Err(TrajectoryError::InvalidTranslation(self.max_translation));
        }
        Ok(())
    }

    /// Concrete cap in degrees for one sample.
    pub fn resolve(&self, rng: &mut impl Rng) -> Result<f64> {
        self.validate()?;
        Ok(match self.max_rotation {
            RotationCap::Degrees(d) => d,
            RotationCap::Mix(_) => MIX_CAPS[rng.random_range(0..MIX_CAPS.len())],
        })
    }
}

/// A sampled away trajectory together with the cap it was drawn under.
#[derive(Debug, Clone, PartialEq)]
pub struct AwayPath {
    pub trajectory: Trajectory,
    pub rotation_cap: f64,
}

/// Random walk away from `start`.
///
/// Each step adds a rotation vector with a uniformly random axis and a random
/// magnitude; the cumulative vectors are then rescaled so the farthest
/// keyframe sits exactly on the cap. Since the geodesic angle of `exp(ω)` is
/// `|ω|` (for `|ω| ≤ π`), every keyframe stays within the budget.
pub fn sample_away_trajectory(
    start: &CameraPose,
    budget: &AngleBudget,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<AwayPath> {
    if steps < 2 {
        return Err(TrajectoryError::TooFewSteps(steps));
    }
    let cap = budget.resolve(rng)?;
    if cap >= 180.0 {
        return Err(TrajectoryError::InvalidBudget(cap));
    }

    let mut omega = Vector3::zeros();
    let mut cumulative = vec![omega];
    for _ in 1..steps {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        let magnitude: f64 = rng.random_range(0.25..1.0);
        omega += Vector3::from(axis) * magnitude;
        cumulative.push(omega);
    }
    let peak = cumulative.iter().map(|w| w.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { cap / peak } else { 0.0 };

    let mut offsets = vec![Vector3::zeros(); steps];
    if budget.max_translation > 0.0 {
        let mut acc = Vector3::zeros();
        for off in offsets.iter_mut().skip(1) {
            let dir: [f64; 3] = UnitSphere.sample(rng);
            acc += Vector3::from(dir) * rng.random_range(0.25..1.0);
            *off = acc;
        }
        let peak_t = offsets.iter().map(|o| o.norm()).fold(0.0, f64::max);
        let reach = budget.max_translation * rng.random_range(0.5..=1.0);
        if peak_t > 0.0 {
            for o in &mut offsets {
                *o *= reach / peak_t;
            }
        }
    }

    let center = start.center();
    let mut poses = Vec::with_capacity(steps);
    poses.push(start.clone());
    for (w, off) in cumulative.iter().zip(offsets.iter()).skip(1) {
        let motion = motion_from_rotation_vector(&(w * scale));
        let rotation = motion.transpose() * start.rotation;
        let c = center + off;
        poses.push(CameraPose {
            rotation,
            translation: -(rotation * c),
        });
    }
    Ok(AwayPath {
        trajectory: Trajectory::from_poses(poses)?,
        rotation_cap: cap,
    })
}

/// Reverse pose order, mapping each time `t` to `1 − t`.
pub fn reverse(traj: &Trajectory) -> Trajectory {
    if traj.keyframes.len() == 1 {
        return traj.clone();
    }
    Trajectory {
        keyframes: traj
            .keyframes
            .iter()
            .rev()
            .map(|k| Keyframe {
                t: 1.0 - k.t,
                pose: k.pose.clone(),
            })
            .collect(),
    }
}

fn quat_key(q: &UnitQuaternion<f64>) -> [u64; 4] {
    [q.w.to_bits(), q.i.to_bits(), q.j.to_bits(), q.k.to_bits()]
}

/// Pose at time `t`: slerp of rotations and lerp of camera centers between
/// the bracketing keyframes.
///
/// The blend always starts from the nearer keyframe (ties broken by a fixed
/// ordering of the two poses), so `interpolate(reverse(T), 1 − t)` is
/// bitwise equal to `interpolate(T, t)`.
pub fn interpolate(traj: &Trajectory, t: f64) -> Result<CameraPose> {
    if !(0.0..=1.0).contains(&t) {
        return Err(TrajectoryError::OutOfRange(t));
    }
    let kfs = &traj.keyframes;
    if kfs.len() == 1 {
        return Ok(kfs[0].pose.clone());
    }
    let t = snap_time(t);
    if let Some(k) = kfs.iter().find(|k| k.t == t) {
        return Ok(k.pose.clone());
    }
    let i = kfs.partition_point(|k| k.t < t);
    let (a, b) = (&kfs[i - 1], &kfs[i]);
    let len = b.t - a.t;
    let da = t - a.t;
    let db = b.t - t;

    let (qa, qb) = (a.pose.quaternion(), b.pose.quaternion());
    let from_a = match da.partial_cmp(&db).expect("finite times") {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => quat_key(&qa) <= quat_key(&qb),
    };
    let (base, other, q_base, q_other, w) = if from_a {
        (&a.pose, &b.pose, qa, qb, da / len)
    } else {
        (&b.pose, &a.pose, qb, qa, db / len)
    };
    let q = q_base
        .try_slerp(&q_other, w, 1e-12)
        .unwrap_or_else(|| q_base.nlerp(&q_other, w));
    let rotation: Matrix3<f64> = q.to_rotation_matrix().into_inner();
    let rotation = Rotation3::from_matrix_unchecked(rotation).into_inner();
    let c_base = base.center();
    let c_other = other.center();
    let center = c_base + (c_other - c_base) * w;
    Ok(CameraPose {
        rotation,
        translation: -(rotation * center),
    })
}

/// Largest geodesic rotation of any keyframe relative to the first, in degrees.
pub fn max_rotation(traj: &Trajectory) -> f64 {
    let first = traj.first();
    traj.keyframes
        .iter()
        .map(|k| geodesic_angle_deg(&first.rotation_to(&k.pose)))
        .fold(0.0, f64::max)
}

/// Largest camera-center offset of any keyframe relative to the first.
pub fn max_translation(traj: &Trajectory) -> f64 {
    let c0 = traj.first().center();
    traj.keyframes
        .iter()
        .map(|k| (k.pose.center() - c0).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{camera_motion, homography_pure_rotation, rotation_angle_from_homography, CameraIntrinsics};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    fn yaw_pose(deg: f64) -> CameraPose {
        CameraPose::identity().turned(&camera_motion(deg, 0.0, 0.0))
    }

    #[test]
    fn sampled_trajectory_respects_budget() {
        let mut rng = rng_from_seed(7);
        let path = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::deg10(), 8, &mut rng).unwrap();
        assert_eq!(path.trajectory.len(), 8);
        assert_eq!(path.trajectory.first(), &CameraPose::identity());
        let m = max_rotation(&path.trajectory);
        assert!(m <= 10.0 + 1e-9 && m > 9.999, "{m}");
        assert_eq!(max_translation(&path.trajectory), 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let run = || {
            let mut rng = rng_from_seed(42);
            sample_away_trajectory(&CameraPose::identity(), &AngleBudget::deg20(), 6, &mut rng)
                .unwrap()
                .trajectory
                .to_json()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mix_caps_are_balanced() {
        let mut counts = [0usize; 3];
        for seed in 0..1000 {
            let mut rng = rng_from_seed(seed);
            let path = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::mix(), 4, &mut rng).unwrap();
            let idx = MIX_CAPS.iter().position(|c| *c == path.rotation_cap).unwrap();
            assert!((max_rotation(&path.trajectory) - path.rotation_cap).abs() < 1e-9);
            counts[idx] += 1;
        }
        for c in counts {
            let freq = c as f64 / 1000.0;
            assert!((freq - 1.0 / 3.0).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn invalid_budget_rejected() {
        let mut rng = rng_from_seed(1);
        let err = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::degrees(0.0), 4, &mut rng);
        assert_eq!(err.unwrap_err(), TrajectoryError::InvalidBudget(0.0));
        assert!(AngleBudget::parse("-5").is_err());
        assert_eq!(AngleBudget::parse("MIX").unwrap(), AngleBudget::mix());
    }

    #[test]
    fn translation_budget_is_respected() {
        let mut rng = rng_from_seed(3);
        let budget = AngleBudget::deg10().with_translation(0.5);
        let path = sample_away_trajectory(&CameraPose::identity(), &budget, 6, &mut rng).unwrap();
        let t = max_translation(&path.trajectory);
        assert!(t > 0.0 && t <= 0.5 + 1e-12);
    }

    #[test]
    fn reverse_examples() {
        let traj = Trajectory::from_poses(vec![yaw_pose(0.0), yaw_pose(3.0), yaw_pose(9.0)]).unwrap();
        let rev = reverse(&traj);
        assert_eq!(reverse(&rev), traj);
        assert_eq!(rev.first(), traj.last());
        assert_eq!(rev.len(), traj.len());
        let single = Trajectory::constant(yaw_pose(4.0));
        assert_eq!(reverse(&single), single);
    }

    #[test]
    fn interpolate_examples() {
        let traj = Trajectory::from_poses(vec![CameraPose::identity(), yaw_pose(20.0)]).unwrap();
        assert_eq!(interpolate(&traj, 0.0).unwrap(), CameraPose::identity());
        assert_eq!(interpolate(&traj, 1.0).unwrap(), traj.last().clone());
        let mid = interpolate(&traj, 0.5).unwrap();
        let angle = geodesic_angle_deg(&mid.rotation);
        assert!((angle - 10.0).abs() < 1e-9, "{angle}");
        assert_eq!(interpolate(&traj, 1.5), Err(TrajectoryError::OutOfRange(1.5)));
    }

    #[test]
    fn interpolate_hits_keyframes_exactly() {
        let traj = Trajectory::from_poses(vec![yaw_pose(0.0), yaw_pose(5.0), yaw_pose(12.0), yaw_pose(2.0)]).unwrap();
        for k in traj.keyframes() {
            assert_eq!(interpolate(&traj, k.t).unwrap(), k.pose);
        }
    }

    #[test]
    fn max_rotation_examples() {
        assert_eq!(max_rotation(&Trajectory::from_poses(vec![yaw_pose(0.0); 4]).unwrap()), 0.0);
        let traj = Trajectory::from_poses(vec![yaw_pose(0.0), yaw_pose(5.0), yaw_pose(12.0)]).unwrap();
        assert!((max_rotation(&traj) - 12.0).abs() < 1e-9);
    }

    #[test]
    fn max_rotation_agrees_with_homography_angle() {
        let k = CameraIntrinsics::centered(256.0, 256, 256).unwrap();
        let mut rng = rng_from_seed(19);
        let path = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::deg20(), 7, &mut rng).unwrap();
        let first = path.trajectory.first().clone();
        let from_h = path
            .trajectory
            .keyframes()
            .iter()
            .map(|kf| {
                let h = homography_pure_rotation(&k, &first.rotation_to(&kf.pose)).unwrap();
                rotation_angle_from_homography(&k, &h).unwrap()
            })
            .fold(0.0, f64::max);
        assert!((from_h - max_rotation(&path.trajectory)).abs() < 1e-6);
    }

    #[test]
    fn json_round_trip_is_close() {
        let mut rng = rng_from_seed(8);
        let traj = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::deg30().with_translation(0.2), 5, &mut rng)
            .unwrap()
            .trajectory;
        let json = traj.to_json();
        let back = Trajectory::from_json(&json).unwrap();
        for (a, b) in traj.keyframes().iter().zip(back.keyframes()) {
            assert_eq!(a.t, b.t);
            assert!((a.pose.rotation - b.pose.rotation).abs().max() < 1e-12);
            assert!((a.pose.translation - b.pose.translation).abs().max() < 1e-12);
        }
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value[0]["quaternion"][0].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn frame_times_are_symmetric() {
        for n in 2..40 {
            for k in 0..n {
                assert_eq!(frame_time(n - 1 - k, n), 1.0 - frame_time(k, n));
            }
        }
    }

    fn arb_trajectory() -> impl Strategy<Value = Trajectory> {
        (any::<u64>(), 2usize..10, 1.0f64..40.0).prop_map(|(seed, steps, cap)| {
            let mut rng = rng_from_seed(seed);
            sample_away_trajectory(&CameraPose::identity(), &AngleBudget::degrees(cap), steps, &mut rng)
                .unwrap()
                .trajectory
        })
    }

    proptest! {
        #[test]
        fn budget_soundness(seed in any::<u64>(), steps in 2usize..16, cap in 0.5f64..60.0) {
            let mut rng = rng_from_seed(seed);
            let path = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::degrees(cap), steps, &mut rng).unwrap();
            prop_assert!(max_rotation(&path.trajectory) <= cap + 1e-9);
        }

        #[test]
        fn reversal_is_an_involution(traj in arb_trajectory()) {
            let rev = reverse(&traj);
            prop_assert_eq!(&reverse(&rev), &traj);
            prop_assert_eq!(rev.first(), traj.last());
            prop_assert_eq!(rev.last(), traj.first());
        }

        #[test]
        fn interpolation_commutes_with_reversal(traj in arb_trajectory(), t in 0.0f64..=1.0) {
            let t = snap_time(t);
            let a = interpolate(&traj, t).unwrap();
            let b = interpolate(&reverse(&traj), 1.0 - t).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn interpolation_is_continuous(traj in arb_trajectory(), t in 0.0f64..0.999) {
            let d = 1e-4;
            let a = interpolate(&traj, t).unwrap();
            let b = interpolate(&traj, t + d).unwrap();
            let step = geodesic_angle_deg(&a.rotation_to(&b));
            // segment angle ≤ 2·cap, segment length ≥ 1/(steps-1)
            let bound = 2.0 * max_rotation(&traj) * (traj.len() - 1) as f64 * d + 1e-9;
            prop_assert!(step <= bound, "step {} bound {}", step, bound);
        }
    }
}
