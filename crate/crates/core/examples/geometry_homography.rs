//! Pure-rotation homographies: build one from a camera turn, recover it from
//! point matches with DLT, and read the rotation back out.

use recompose::geometry::{
    apply_homography, camera_motion, estimate_homography_dlt, homography_pure_rotation, rotation_angle_from_homography,
};
use recompose::{CameraIntrinsics, CameraPose, Pixel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::centered(500.0, 640, 480)?;
    let start = CameraPose::identity();
    let turned = start.turned(&camera_motion(8.0, -3.0, 1.5));
    let h = homography_pure_rotation(&k, &start.rotation_to(&turned))?;
    println!("H =\n{:.6}", h.matrix());

    let grid: Vec<Pixel> = (0..5)
        .flat_map(|i| (0..4).map(move |j| Pixel::new(40.0 + 140.0 * i as f64, 40.0 + 130.0 * j as f64)))
        .collect();
    let matches: Vec<_> = grid.iter().map(|p| (*p, apply_homography(&h, p).unwrap())).collect();
    let est = estimate_homography_dlt(&matches)?;
    let worst = matches
        .iter()
        .map(|(p, q)| (apply_homography(&est, p).unwrap() - q).norm())
        .fold(0.0, f64::max);
    println!("DLT from {} matches, worst transfer error {worst:.2e} px", matches.len());
    println!("rotation angle from H: {:.6} deg", rotation_angle_from_homography(&k, &est)?);
    Ok(())
}
