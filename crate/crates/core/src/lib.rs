//! Perspective recomposition toolkit.
//!
//! Instead of cropping a photo, the camera itself is moved toward a better
//! viewpoint. This crate holds the machinery around that idea:
//!
//! - [`geometry`]: pinhole projection, homographies (analytic, DLT, warping),
//!   guidance boxes and rotation extraction.
//! - [`trajgen`]: seeded "away" camera paths inside an angle budget and their
//!   reversal into suboptimal→optimal training sequences.
//! - [`scenegen`]: deterministic synthetic scenes, a z-buffered splat renderer
//!   and the planar (homography) view path for real photographs.
//! - [`aesthetics`]: rule-based visual, motion and composition scorers.
//! - [`preference`]: Bradley-Terry with ties (Rao-Kupper) probabilities,
//!   likelihood, fitting and accuracy.
//! - [`flowdpo`]: rectified-flow samples, the noise/velocity identity and the
//!   Flow-DPO loss with a toy linear optimizer.
//! - [`metrics`]: PSNR, SSIM and camera-motion matching.
//! - [`pipeline`]: dataset construction, grading, filtering and manifests.
//! - [`annotation`]: the append-only judgment store behind the review service.
//!
//! Every runnable capability has a matching program under `examples/`.

pub mod aesthetics;
pub mod annotation;
pub mod flowdpo;
pub mod frame;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod preference;
pub mod scenegen;
pub mod seed;
pub mod trajgen;

pub use frame::Frame;
pub use geometry::{CameraIntrinsics, CameraPose, Homography, Pixel, Point3, Quad};
pub use trajgen::{AngleBudget, Trajectory};
pub use preference::{Dimension, Judgment, Outcome, RewardParams};
