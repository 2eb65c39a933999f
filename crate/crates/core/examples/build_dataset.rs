//! Build a small dataset, look at its grades, and apply the quality gate.
//!
//! `cargo run --release --example build_dataset -- out_dir`

use recompose::pipeline::{build_dataset, filter_manifest, grade_histogram, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("recompose-dataset"));
    let cfg = PipelineConfig { count: 6, seed: 1, frames: 8, variants_per_view: 2, out_dir: out, ..PipelineConfig::default() };
    let m = build_dataset(&cfg)?;
    for r in &m.records {
        println!(
            "{} {:<14} cap {:>2} VQ {:+.2} MQ {:+.2} CA {:+.2} -> {} ({}) {:?}",
            r.id, r.template.as_str(), r.rotation_cap, r.scores.vq, r.scores.mq, r.scores.ca, r.grade, r.standardized, r.artifact_flags
        );
    }
    println!("grades {:?}", grade_histogram(&m));
    let kept = filter_manifest(&m, cfg.threshold, cfg.inclusive);
    println!("{} of {} pass {}; manifest in {}", kept.len(), m.len(), cfg.threshold, cfg.out_dir.display());
    Ok(())
}
