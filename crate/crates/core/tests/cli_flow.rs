use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use complication_risk::cli::{main_with_args, Manifest, EXIT_DATA, EXIT_OK, EXIT_USAGE, MANIFEST_FILE};
use complication_risk::labeler::ComplicationKind;

const CONFIG: &str = r#"
master_seed = 11
n_search = 2
n_bootstrap = 50
families = ["lr"]

[paths]
input = "synth/cohort.jsonl"
models = "train/models.json"

[synth]
n_encounters = 500
"#;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let cfg = dir.join("run.toml");
    let mut argv = vec!["complication-risk".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--config".to_string(), cfg.display().to_string()]);
    main_with_args(argv)
}

fn out(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.toml"), CONFIG).unwrap();
    tmp
}

fn full_flow(dir: &Path, jobs: &str) {
    for (cmd, sub) in [
        ("synth", "synth"),
        ("label", "label"),
        ("train", "train"),
        ("evaluate", "evaluate"),
    ] {
        assert_eq!(
            run(dir, &[cmd, "--jobs", jobs, "--out", &out(dir, sub)]),
            EXIT_OK,
            "{cmd}"
        );
    }
    assert_eq!(
        run(dir, &["predict", "--percent", "--out", &out(dir, "predict")]),
        EXIT_OK
    );
}

#[test]
fn commands_write_manifested_outputs() {
    let tmp = setup();
    let dir = tmp.path();
    full_flow(dir, "1");

    for sub in ["synth", "label", "train", "evaluate", "predict"] {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join(sub).join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest.command, sub);
        assert_eq!(manifest.master_seed, 11);
        assert!(!manifest.files.is_empty());
        for f in &manifest.files {
            let bytes = fs::read(dir.join(sub).join(&f.path)).unwrap();
            let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            assert_eq!(digest, f.sha256, "{sub}/{}", f.path);
        }
    }

    let labels = fs::read_to_string(dir.join("label/labels.csv")).unwrap();
    let header = labels.lines().next().unwrap();
    for kind in ComplicationKind::ALL {
        assert!(header.contains(&format!("{}_onset_min", kind.code())));
    }

    let preds = fs::read_to_string(dir.join("predict/predictions.csv")).unwrap();
    let mut rows = 0;
    for line in preds.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            assert!(
                cell == "NA" || (cell.ends_with('%') && cell[..cell.len() - 1].parse::<u32>().is_ok()),
                "{cell}"
            );
        }
        rows += 1;
    }
    assert!(rows > 100);
    assert!(preds.contains("NA"), "early complications yield NA entries");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let a = setup();
    let b = setup();
    full_flow(a.path(), "1");
    full_flow(b.path(), "2");
    for file in [
        "train/models.json",
        "train/validation.csv",
        "evaluate/evaluation.json",
        "predict/predictions.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn seed_flag_changes_the_cohort() {
    let tmp = setup();
    let dir = tmp.path();
    assert_eq!(run(dir, &["synth", "--out", &out(dir, "a")]), EXIT_OK);
    assert_eq!(run(dir, &["synth", "--seed", "12", "--out", &out(dir, "b")]), EXIT_OK);
    assert_ne!(
        fs::read(dir.join("a/cohort.jsonl")).unwrap(),
        fs::read(dir.join("b/cohort.jsonl")).unwrap()
    );
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = setup();
    let dir = tmp.path();
    // input file does not exist yet
    assert_eq!(run(dir, &["label", "--out", &out(dir, "label")]), EXIT_DATA);
    assert_eq!(run(dir, &["synth", "--jobs", "0"]), EXIT_USAGE);
    assert_eq!(main_with_args(["complication-risk", "frobnicate"]), EXIT_USAGE);

    fs::write(dir.join("bad.toml"), "k = \"three\"\n").unwrap();
    let bad = dir.join("bad.toml").display().to_string();
    assert_eq!(
        main_with_args(["complication-risk", "synth", "--config", &bad]),
        EXIT_USAGE
    );

    fs::write(dir.join("empty.jsonl"), "").unwrap();
    fs::write(dir.join("empty.toml"), "[paths]\ninput = \"empty.jsonl\"\n").unwrap();
    let empty = dir.join("empty.toml").display().to_string();
    let label_out = out(dir, "e");
    assert_eq!(
        main_with_args(["complication-risk", "label", "--config", &empty, "--out", &label_out]),
        EXIT_DATA
    );
}
