//! Rule-based VQ, MQ and CA for a view that drifts back onto the thirds grid.

use recompose::aesthetics::{mq_score, vq_score, AestheticsConfig};
use recompose::geometry::camera_motion;
use recompose::pipeline::{angles_to_target, ca_view_unit, score_sequence};
use recompose::scenegen::{make_scene, reference_intrinsics, render, Template};
use recompose::CameraPose;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AestheticsConfig::default();
    let k = reference_intrinsics();
    let scene = make_scene(4, Template::MultiSubject);
    let poses: Vec<CameraPose> = (0..10)
        .map(|i| CameraPose::identity().turned(&camera_motion(14.0 * (9 - i) as f64 / 9.0, 0.0, 0.0)))
        .collect();
    let frames: Vec<_> = poses.iter().map(|p| render(&scene, &k, p)).collect();

    for (i, p) in poses.iter().enumerate().step_by(3) {
        println!("frame {i}: composition unit {:.4}", ca_view_unit(&scene, &k, p, &cfg));
    }
    println!("VQ {:.3}", vq_score(&frames, &cfg)?);
    println!("MQ {:.3}", mq_score(&angles_to_target(&poses), 14.0, &cfg)?);
    let s = score_sequence(&scene, &k, &frames, &poses, 14.0, &cfg)?;
    println!("sequence scores {s:?}");

    let mut backwards = frames.clone();
    backwards.reverse();
    let mut rev_poses = poses.clone();
    rev_poses.reverse();
    let r = score_sequence(&scene, &k, &backwards, &rev_poses, 14.0, &cfg)?;
    println!("played backwards, CA drops from {:.3} to {:.3}", s.ca, r.ca);
    Ok(())
}
