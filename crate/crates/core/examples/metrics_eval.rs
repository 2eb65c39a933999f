//! PSNR, SSIM and camera-motion matching between a sequence and a slightly
//! perturbed copy of it.

use recompose::geometry::{camera_motion, homography_pure_rotation, warp_image};
use recompose::metrics::{classify_motion_frames, classify_motion_poses, compare_sequences, psnr, ssim, MotionConfig};
use recompose::scenegen::texture_image;
use recompose::{CameraIntrinsics, CameraPose};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::centered(256.0, 256, 256)?;
    let img = texture_image(256, 256, 8);
    let mut poses = vec![CameraPose::identity()];
    for m in [camera_motion(1.5, 0.0, 0.0), camera_motion(0.0, -1.0, 0.0), camera_motion(0.0, 0.0, 0.0), camera_motion(0.0, 0.0, 2.0)] {
        let next = poses.last().unwrap().turned(&m);
        poses.push(next);
    }
    let frames: Vec<_> = poses
        .iter()
        .map(|p| warp_image(&img, &homography_pure_rotation(&k, &poses[0].rotation_to(p)).unwrap(), 256, 256, [0; 3]))
        .collect();
    let cfg = MotionConfig::default();
    println!("pose labels  {:?}", classify_motion_poses(&poses, &cfg)?);
    println!("frame labels {:?}", classify_motion_frames(&frames, &k, &cfg)?);

    let noisy: Vec<_> = frames.iter().map(|f| f.box_blur(1)).collect();
    println!("frame 0: PSNR {:.2} dB, SSIM {:.4}", psnr(&frames[0], &noisy[0])?.db, ssim(&frames[0], &noisy[0])?);
    println!("{:?}", compare_sequences(&noisy, &frames, &poses, &poses, &cfg)?);
    Ok(())
}
