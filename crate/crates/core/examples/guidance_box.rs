//! The guidance box: the optimal framing drawn into each view of a path that
//! converges on it. Its rectangularity climbs to 1 at the target.
//!
//! `cargo run --example guidance_box -- out_dir` also writes the overlays.

use recompose::geometry::{camera_motion, draw_quad, guidance_box, homography_pure_rotation, rectangularity};
use recompose::scenegen::{planar_views, sample_poses, texture_image};
use recompose::trajgen::Trajectory;
use recompose::{CameraIntrinsics, CameraPose, Quad};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let img = texture_image(320, 240, 5);
    let k = CameraIntrinsics::centered(320.0, 320, 240)?;
    let target = CameraPose::identity();
    let start = target.turned(&camera_motion(-12.0, 6.0, 4.0));
    // views are rendered relative to the first pose, so walk away then reverse
    let away = Trajectory::from_poses(vec![target.clone(), start])?;
    let mut views = planar_views(&img, &k, &away, 9)?;
    let mut poses = sample_poses(&away, 9)?;
    views.reverse();
    poses.reverse();

    let rect = Quad::rect(32.0, 24.0, 287.0, 215.0);
    for (i, (view, pose)) in views.iter_mut().zip(&poses).enumerate() {
        let h = homography_pure_rotation(&k, &target.rotation_to(pose))?;
        let q = guidance_box(&rect, &h)?;
        println!("frame {i}: rectangularity {:.5}", rectangularity(&q)?);
        if let Some(dir) = &out {
            draw_quad(view, &q, [255, 0, 0]);
            std::fs::create_dir_all(dir)?;
            view.save_png(format!("{dir}/guide_{i:02}.png"))?;
        }
    }
    Ok(())
}
