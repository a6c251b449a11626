use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn latfuse(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latfuse"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LATFUSE_LM_ENDPOINT")
        .output()
        .unwrap()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("latfuse-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn synthesize_decode_and_report() {
    let dir = workdir("decode");
    std::fs::write(dir.join("spec.json"), r#"{"corpus": {"utterance_count": 3, "noise_level": 0.0}}"#).unwrap();
    stdout(&latfuse(&["synthesize", "--spec", "spec.json", "--out", "corpus", "--lm-out", "lm.json"], &dir));
    let refs = std::fs::read_to_string(dir.join("corpus/refs.txt")).unwrap();
    let first = refs.lines().next().unwrap();

    for mode in ["segment", "frame"] {
        let out = latfuse(
            &["decode", "--lattice", "corpus/00000.cnjl", "--lm-model", "lm.json", "--mode", mode, "--report", "r.json"],
            &dir,
        );
        assert_eq!(stdout(&out).trim(), first);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
        assert_eq!(report["mode"], mode);
        assert_eq!(report["transcript"], first);
        assert!(report["counters"]["n_frames"].as_u64().unwrap() > 0);
    }
    let report: serde_json::Value = {
        latfuse(
            &["decode", "--lattice", "corpus/00000.cnjl", "--lm-model", "lm.json", "--segment-seconds", "0.5", "--report", "r.json"],
            &dir,
        );
        serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap()
    };
    let segs = report["segments"].as_array().unwrap();
    assert!(segs.len() > 1);
    let entry = &segs[0]["nbest"][0];
    for key in ["lm_log_score", "final_log_score"] {
        assert!(entry[key].is_number());
    }
    assert!(entry["hypothesis"]["asr_log_score"].is_number());
    assert!(segs[1]["prefix_used"].is_string());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_from_synthetic_spec() {
    let dir = workdir("sweep");
    std::fs::write(dir.join("spec.json"), r#"{"corpus": {"utterance_count": 4}}"#).unwrap();
    std::fs::write(dir.join("grid.json"), r#"{"lambda": [0.15, 0.3, 0.45, 0.6]}"#).unwrap();
    latfuse(&["sweep", "--grid", "grid.json", "--synthesize", "spec.json", "--out", "rows.csv"], &dir);
    let csv = std::fs::read_to_string(dir.join("rows.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# latfuse-sweep v1");
    assert!(lines[1].starts_with("index,mode,segmenter"));
    assert_eq!(lines.len(), 2 + 5);

    let missing = latfuse(&["sweep", "--grid", "grid.json", "--out", "x.csv"], &dir);
    assert!(!missing.status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn wer_over_line_aligned_files() {
    let dir = workdir("wer");
    std::fs::write(dir.join("ref.txt"), "the cat sat\nA b\n").unwrap();
    std::fs::write(dir.join("hyp.txt"), "the bat sat\na b b b\n").unwrap();
    let out = stdout(&latfuse(&["wer", "--ref", "ref.txt", "--hyp", "hyp.txt"], &dir));
    assert_eq!(out.trim(), "WER 60.00% (S=1 I=2 D=0 N=5, 2 lines)");

    std::fs::write(dir.join("hyp.txt"), "only one\n").unwrap();
    assert!(!latfuse(&["wer", "--ref", "ref.txt", "--hyp", "hyp.txt"], &dir).status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_ngram_then_decode_with_it() {
    let dir = workdir("train");
    std::fs::write(dir.join("spec.json"), r#"{"corpus": {"utterance_count": 2, "noise_level": 0.0}}"#).unwrap();
    stdout(&latfuse(&["synthesize", "--spec", "spec.json", "--out", "corpus"], &dir));
    let pieces: Vec<String> = (0..24).map(|i| format!("\"▁w{i:02}\"")).collect();
    std::fs::write(
        dir.join("vocab.json"),
        format!(r#"{{"pieces": [{}], "unk": "<unk>", "boundary_marker": "▁"}}"#, pieces.join(",")),
    )
    .unwrap();
    std::fs::copy(dir.join("corpus/refs.txt"), dir.join("text.txt")).unwrap();
    stdout(&latfuse(
        &["train-ngram", "--corpus", "text.txt", "--vocab", "vocab.json", "--order", "2", "--out", "lm.json"],
        &dir,
    ));
    let out = latfuse(
        &["decode", "--lattice", "corpus/00001.cnjl", "--lm-model", "lm.json", "--asr-vocab", "vocab.json", "--lm-vocab", "vocab.json"],
        &dir,
    );
    let refs = std::fs::read_to_string(dir.join("corpus/refs.txt")).unwrap();
    assert_eq!(stdout(&out).trim(), refs.lines().nth(1).unwrap());

    let no_model = latfuse(&["decode", "--lattice", "corpus/00001.cnjl"], &dir);
    assert!(!no_model.status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}
