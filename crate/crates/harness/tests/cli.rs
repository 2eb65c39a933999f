use std::path::Path;
use std::process::{Command, Output};

fn recompose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recompose")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("pipeline.json");
    std::fs::write(
        &p,
        r#"{"count": 4, "frames": 5, "keyframes": 3, "width": 48, "height": 48, "focal": 48.0, "variants_per_view": 2}"#,
    )
    .unwrap();
    p
}

#[test]
fn dataset_round_trip_through_subcommands() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let data = d.path().join("data");
    let o = recompose(&["gen", "--config", s(&cfg), "--seed", "5", "--out", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 8);

    let o = recompose(&["score", "--config", s(&cfg), "--dataset", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 8);
    assert!(stdout.lines().all(|l| l.contains("\"matches_manifest\":true")));

    let graded = d.path().join("graded");
    let o = recompose(&["grade", "--config", s(&cfg), "--dataset", s(&data), "--out", s(&graded)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(graded.join("manifest.jsonl")).unwrap(), manifest);

    let filtered = d.path().join("filtered");
    let o = recompose(&["filter", "--dataset", s(&data), "--threshold", "0", "--out", s(&filtered)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(filtered.join("manifest.jsonl")).unwrap().lines().count(), 8);

    let o = recompose(&["eval", "--pred", s(&data), "--reference", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["psnr"], 100.0);
    assert_eq!(report["ssim"], 1.0);
    assert_eq!(report["cmm"], 1.0);
}

#[test]
fn fit_dpo_and_guide() {
    let d = tempfile::tempdir().unwrap();
    let js = d.path().join("j.jsonl");
    let mut lines = String::new();
    for (i, (a, b, o)) in [("x", "y", "A_WINS"), ("y", "z", "A_WINS"), ("x", "z", "TIE"), ("x", "y", "A_WINS")].iter().enumerate() {
        lines.push_str(&format!(
            "{{\"pair_id\":\"p{i}\",\"item_a\":\"{a}\",\"item_b\":\"{b}\",\"dimension\":\"VQ\",\"outcome\":\"{o}\",\"annotator_id\":\"t\",\"timestamp\":0}}\n"
        ));
    }
    std::fs::write(&js, lines).unwrap();
    let out = d.path().join("fit");
    let o = recompose(&["fit", "--judgments", s(&js), "--test", s(&js), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("rewards.json")).unwrap()).unwrap();
    assert!(r["x"]["VQ"].as_f64().unwrap() > r["z"]["VQ"].as_f64().unwrap());

    let dpo = d.path().join("dpo");
    let o = recompose(&["dpo-demo", "--steps", "20", "--seed", "3", "--out", s(&dpo)]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dpo.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    let losses: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(losses[20] < std::f64::consts::LN_2);

    let guide = d.path().join("guide");
    let o = recompose(&["guide", "--frames", "6", "--cap", "10", "--out", s(&guide)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(guide.join("0005.png").exists());
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(guide.join("guide.json")).unwrap()).unwrap();
    let rect: Vec<f64> = g["boxes"].as_array().unwrap().iter().map(|b| b["rectangularity"].as_f64().unwrap()).collect();
    assert!((rect[5] - 1.0).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, "{\"count\": \"many\"}").unwrap();
    assert_eq!(code(&recompose(&["gen", "--config", s(&bad), "--out", s(d.path())])), 2);
    std::fs::write(&bad, "{\"frames\": 1}").unwrap();
    assert_eq!(code(&recompose(&["gen", "--config", s(&bad), "--out", s(d.path())])), 2);
    assert_eq!(code(&recompose(&["gen", "--config", s(&d.path().join("missing.json"))])), 2);
    assert_eq!(code(&recompose(&["bogus"])), 2);
    assert_eq!(code(&recompose(&["grade", "--dataset", s(&d.path().join("nowhere"))])), 3);
    let js = d.path().join("j.jsonl");
    std::fs::write(&js, "{not json}\n").unwrap();
    assert_eq!(code(&recompose(&["fit", "--judgments", s(&js)])), 3);
}
