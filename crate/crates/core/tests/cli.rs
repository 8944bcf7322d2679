use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use latent_verifier::io::{read_checkpoint, read_dataset, write_dataset, DatasetManifest};
use latent_verifier::*;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-verifier"))
        .current_dir(dir)
        .env_remove("LATENT_VERIFIER_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth_small(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", out, "--questions", "40", "--dim", "6", "--paths", "5", "--seed", "9"];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn default_synth_is_readable() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--out-dir", "d"]);
    let (data, manifest) = read_dataset(&tmp.path().join("d")).unwrap();
    assert_eq!(data.len(), 1000);
    assert!(data.iter().all(|q| q.num_paths() == 10));
    assert_eq!(manifest.feature_dim, 64);
    assert!(tmp.path().join("d/synth_config.json").exists());
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path(), "a", &[]);
    synth_small(tmp.path(), "b", &[]);
    for f in ["manifest.json", "metadata.jsonl", "features.bin", "synth_config.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["synth", "--out-dir", "d", "--noise-std", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
    assert!(!tmp.path().join("d/features.bin").exists());

    assert_eq!(run(tmp.path(), &["train"]).status.code(), Some(2));
    assert_eq!(run(tmp.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn zero_step_checkpoint_equals_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path(), "d", &[]);
    ok(
        tmp.path(),
        &["train", "--dataset", "d", "--out-dir", "t", "--max-steps", "0", "--hidden1", "7", "--hidden2", "3", "--seed", "11"],
    );
    let (verifier, optimizer) = read_checkpoint(&tmp.path().join("t/checkpoint.bin")).unwrap();
    let init = VerifierModel::init(6, 7, 3, 11).unwrap();
    let bits = |m: &VerifierModel| m.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&verifier.model), bits(&init));
    assert_eq!(optimizer.unwrap().t, 0);
    for f in ["train_config.json", "train_log.jsonl", "train_summary.json"] {
        assert!(tmp.path().join("t").join(f).exists(), "{f}");
    }
}

#[test]
fn train_flags_reach_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path(), "d", &[]);
    fs::write(tmp.path().join("cfg.toml"), "w_nega = 0.5\nmax_steps = 3\nhidden1 = 4\nhidden2 = 2\n").unwrap();
    ok(
        tmp.path(),
        &["train", "--dataset", "d", "--out-dir", "t", "--config", "cfg.toml", "--w-inter", "0", "--inter-variant", "t_norm", "--max-steps", "2"],
    );
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("t/train_config.json")).unwrap()).unwrap();
    assert_eq!(echo["w_nega"], 0.5);
    assert_eq!(echo["w_inter"], 0.0);
    assert_eq!(echo["max_steps"], 2);
    assert_eq!(echo["inter_variant"], "t_norm");
    let log = fs::read_to_string(tmp.path().join("t/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for k in ["step", "L_total", "L_nega", "L_intra", "L_inter"] {
        assert!(first.get(k).is_some(), "{k}");
    }
    assert_eq!(first["L_inter"], 0.0);
}

#[test]
fn eval_reports_p_at_n_and_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path(), "d", &[]);
    ok(tmp.path(), &["train", "--dataset", "d", "--out-dir", "t", "--max-steps", "5", "--hidden1", "4", "--hidden2", "2"]);
    let table = ok(
        tmp.path(),
        &["eval", "--dataset", "d", "--checkpoint", "t/checkpoint.bin", "--out-dir", "e", "--baseline", "voting,greedy,cot_max,cot_sum"],
    );
    assert!(table.contains("P@N"));
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("e/metrics.json")).unwrap()).unwrap();
    let methods: Vec<&str> = metrics["methods"].as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["verifier_sum", "verifier_max", "voting", "greedy", "cot_max", "cot_sum"]);
    for m in metrics["methods"].as_array().unwrap() {
        assert_eq!(m["p_at_n"], 1.0);
    }
    let preds = fs::read_to_string(tmp.path().join("e/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 40 * 6);
    let ids: Vec<String> = preds
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["question_id"].as_str().unwrap().to_string())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn cot_baseline_without_confidences_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    synth_small(tmp.path(), "d", &[]);
    let (data, manifest) = read_dataset(&tmp.path().join("d")).unwrap();
    let stripped: Vec<QuestionInstance> = data
        .iter()
        .map(|q| {
            let pairs = q
                .pairs()
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    p.answer_confidence = None;
                    p
                })
                .collect();
            let g = group_by_answer(pairs).unwrap();
            match q.gold_answer() {
                Some(a) => g.with_gold_answer(a),
                None => g,
            }
        })
        .collect();
    write_dataset(&tmp.path().join("nc"), &stripped, &DatasetManifest { ..manifest }).unwrap();

    let out = run(tmp.path(), &["baseline", "--dataset", "nc", "--which", "cot_sum", "--out-dir", "b"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: MissingConfidence"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let ok_out = ok(tmp.path(), &["baseline", "--dataset", "nc", "--which", "voting,greedy", "--out-dir", "b"]);
    assert!(ok_out.contains("voting"));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_latent-verifier"))
        .current_dir(tmp.path())
        .env("LATENT_VERIFIER_OUT_DIR", "from_env")
        .args(["synth", "--questions", "5", "--dim", "3", "--paths", "6"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from_env/manifest.json").exists());
}

#[test]
fn missing_dataset_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["baseline", "--dataset", "nope", "--which", "voting", "--out-dir", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: IoError"));
}

#[test]
fn eval_beats_voting_after_training() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--out-dir", "d", "--questions", "300", "--dim", "16", "--paths", "8", "--minority-rate", "0.4", "--seed", "2"]);
    ok(
        tmp.path(),
        &["train", "--dataset", "d", "--out-dir", "t", "--max-steps", "800", "--lr", "1e-3", "--hidden1", "16", "--hidden2", "8"],
    );
    ok(tmp.path(), &["eval", "--dataset", "d", "--checkpoint", "t/checkpoint.bin", "--out-dir", "e", "--strategy", "sum", "--baseline", "voting"]);
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("e/metrics.json")).unwrap()).unwrap();
    let acc = |name: &str| {
        metrics["methods"]
            .as_array()
            .unwrap()
            .iter()
            .find(|m| m["method"] == name)
            .unwrap()["accuracy"]
            .as_f64()
            .unwrap()
    };
    assert!(acc("verifier_sum") > acc("voting"), "{metrics}");
}
