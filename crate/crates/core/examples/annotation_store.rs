//! Pair queue and judgment log behind the annotation service, including a
//! rejected duplicate and a supersede.

use recompose::annotation::{AnnotationStore, PairSpec, Submission};
use recompose::preference::{fit_rewards, BTTConfig};
use recompose::Dimension;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("recompose-store-{}", std::process::id()));
    let pairs = (0..3)
        .map(|i| PairSpec {
            pair_id: format!("view{i}"),
            seq_a: format!("view{i}-a"),
            seq_b: format!("view{i}-b"),
            frames_a: 16,
            frames_b: 16,
            first_frame_hash: format!("h{i}"),
        })
        .collect();
    let store = AnnotationStore::open(dir.join("judgments.jsonl"), pairs)?;
    let vote = |pair: &str, outcome: &str| Submission {
        pair_id: pair.into(),
        item_a: None,
        item_b: None,
        dimension: "CA".into(),
        outcome: outcome.into(),
        annotator_id: "alice".into(),
        timestamp: None,
    };
    while let Some(task) = store.next_pair(Dimension::Ca, "alice")? {
        println!("task {} ({} vs {}), pending {:?}", task.pair_id, task.seq_a, task.seq_b, task.dimensions_pending);
        store.submit_raw(&vote(&task.pair_id, "A_WINS"))?;
    }
    println!("duplicate: {}", store.submit_raw(&vote("view0", "TIE")).unwrap_err());
    store.supersede_raw(&vote("view0", "TIE"))?;
    println!("{}", serde_json::to_string_pretty(&store.progress())?);
    print!("{}", store.export_string());
    println!("{}", fit_rewards(&store.judgments(), &BTTConfig::default())?.to_json_pretty());
    std::fs::remove_dir_all(dir)?;
    Ok(())
}
