//! Flow-DPO on a toy linear velocity field: the noise/velocity identity, the
//! loss at its fixed point, and a short optimization run.

use recompose::flowdpo::{
    flow_dpo_loss, make_flow_sample, noise_velocity_identity, pair_batch, random_vector, separable_pairs,
    toy_dpo_optimize, DPOConfig, LinearVelocityModel,
};
use recompose::seed::rng_from_seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rng_from_seed(12);
    let s = make_flow_sample(random_vector(8, &mut rng), random_vector(8, &mut rng), 0.3)?;
    let (lhs, rhs) = noise_velocity_identity(&s, &random_vector(8, &mut rng))?;
    println!("noise error {lhs:.6} = (1-t)^2 velocity error {rhs:.6}");

    let cfg = DPOConfig::default();
    let pairs = separable_pairs(48, 3, &cfg, &mut rng)?;
    let reference = LinearVelocityModel::zeros(3);
    println!("loss at reference: {:.6} (ln 2 = {:.6})", flow_dpo_loss(&pair_batch(&pairs, &reference, &reference)?, &cfg)?, 2f64.ln());
    let fit = toy_dpo_optimize(&pairs, &reference, &reference, &cfg, 100)?;
    for (i, l) in fit.trace.iter().enumerate().step_by(20) {
        println!("step {i:3}: {l:.6}");
    }
    println!("final {:.6}", fit.trace.last().unwrap());
    Ok(())
}
