//! Simulate ties-aware pairwise judgments from known rewards, fit them back
//! and measure held-out accuracy.

use rand::Rng;
use recompose::preference::{
    btt_probabilities, fit_rewards_report, predict_accuracy, sample_outcome, BTTConfig, DEFAULT_TIE_MARGIN,
};
use recompose::seed::rng_from_seed;
use recompose::{Dimension, Judgment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = BTTConfig::default();
    println!("equal rewards: {:?}", btt_probabilities(0.0, 0.0, cfg.theta)?);

    let truth = [-1.5, -0.5, 0.0, 0.8, 2.0];
    let mut rng = rng_from_seed(99);
    let mut all = Vec::new();
    for n in 0..4000 {
        let (a, b) = (rng.random_range(0..truth.len()), rng.random_range(0..truth.len()));
        if a == b {
            continue;
        }
        let dimension = Dimension::ALL[n % 3];
        all.push(Judgment {
            pair_id: format!("p{n}"),
            item_a: format!("v{a}"),
            item_b: format!("v{b}"),
            dimension,
            outcome: sample_outcome(truth[a], truth[b], cfg.theta, &mut rng)?,
            annotator_id: "sim".into(),
            timestamp: 0,
        });
    }
    let (train, test) = all.split_at(all.len() * 4 / 5);
    let report = fit_rewards_report(train, &cfg)?;
    println!("{} iterations, gradient norm {:.2e}", report.iterations, report.grad_norm);
    for (item, r) in &report.rewards.rewards {
        println!("{item}: VQ {:+.3} MQ {:+.3} CA {:+.3}", r.vq, r.mq, r.ca);
    }
    for (d, acc) in predict_accuracy(test, &report.rewards, DEFAULT_TIE_MARGIN)? {
        println!("{d} held-out accuracy {acc:.3}");
    }
    Ok(())
}
