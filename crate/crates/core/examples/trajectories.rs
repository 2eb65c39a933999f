//! Away trajectories under each rotation budget, and their reversal into
//! suboptimal-to-optimal sequences.

use recompose::geometry::geodesic_angle_deg;
use recompose::scenegen::sample_poses;
use recompose::seed::rng_from_seed;
use recompose::trajgen::{max_rotation, reverse, sample_away_trajectory, AngleBudget};
use recompose::CameraPose;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from_seed(21);
    for budget in [AngleBudget::deg10(), AngleBudget::deg20(), AngleBudget::deg30(), AngleBudget::mix()] {
        let away = sample_away_trajectory(&CameraPose::identity(), &budget, 5, &mut rng)?;
        let back = reverse(&away.trajectory);
        let poses = sample_poses(&back, 8)?;
        let target = poses.last().unwrap();
        let angles: Vec<String> = poses
            .iter()
            .map(|p| format!("{:.2}", geodesic_angle_deg(&p.rotation_to(target))))
            .collect();
        println!(
            "{:?}: cap {} deg, peak keyframe {:.3} deg, distance to target per frame [{}]",
            budget.max_rotation,
            away.rotation_cap,
            max_rotation(&away.trajectory),
            angles.join(", ")
        );
    }
    let away = sample_away_trajectory(&CameraPose::identity(), &AngleBudget::deg10(), 3, &mut rng)?;
    println!("{}", away.trajectory.to_json_pretty());
    Ok(())
}
