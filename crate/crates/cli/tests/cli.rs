use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pica_service::RewardClient;

const SMALL: &[&str] = &[
    "--set",
    "datagen.tasks=60",
    "--set",
    "trainer.total_training_steps=4",
    "--set",
    "trainer.test_freq=2",
    "--set",
    "policy.train_tasks=40",
    "--set",
    "policy.eval_tasks=20",
    "--set",
    "policy.eval_rollouts=1",
    "--set",
    "reward_model.epochs=2",
];

fn pica(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pica")).arg("--out").arg(out).args(SMALL).args(args).output().unwrap()
}

fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = pica(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

fn fails_with(out: &Path, args: &[&str], code: i32) -> String {
    let o = pica(out, args);
    assert_eq!(o.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stderr).unwrap()
}

fn data_and_rm(out: &Path) -> (PathBuf, PathBuf) {
    let data = ok(out, &["gen-data"]).join("dataset.jsonl");
    let rm = ok(out, &["train-rm", "--data", data.to_str().unwrap()]).join("reward_model.json");
    (data, rm)
}

#[test]
fn exit_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    fails_with(out, &["frobnicate"], 2);
    let msg = fails_with(out, &["--set", "penalty.alpha=1.6", "gen-world"], 2);
    assert!(msg.contains("penalty.alpha") && msg.contains("[1, 1.5]"), "{msg}");
    let msg = fails_with(out, &["--config", "/nonexistent/config.json", "gen-world"], 2);
    assert!(msg.contains("reading config"), "{msg}");
    let msg = fails_with(out, &["train-policy", "--arm", "pica"], 3);
    assert!(msg.contains("missing reward model"), "{msg}");
    let msg = fails_with(out, &["train-policy", "--arm", "pica", "--checkpoint", "/nonexistent/rm.json"], 3);
    assert!(msg.contains("missing reward model"), "{msg}");
    fails_with(out, &["train-rm", "--data", "/nonexistent/dataset.jsonl"], 3);
    fails_with(out, &["ablate"], 3);
    let msg = fails_with(out, &["--set", "trainer.divergence_bound=1e-9", "train-policy", "--arm", "outcome"], 4);
    assert!(msg.contains("diverged"), "{msg}");
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("reward_model.url=127.0.0.1:{port}/get_reward");
    let msg = fails_with(out, &["--set", &url, "train-policy", "--arm", "pica", "--remote"], 5);
    assert!(msg.contains("transport error after 3 attempts"), "{msg}");
}

#[test]
fn gen_data_is_deterministic_and_reproducible_from_the_echoed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = ok(&tmp.path().join("a"), &["--set", "seed=4", "gen-data"]);
    let b = ok(&tmp.path().join("b"), &["--set", "seed=4", "gen-data"]);
    assert_eq!(a.file_name(), b.file_name());
    assert!(a.file_name().unwrap().to_str().unwrap().starts_with("gen-data-seed4-"));
    for f in ["dataset.jsonl", "world.json", "tasks.jsonl", "report.json", "config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let config = a.join("config.json");
    let c = Command::new(env!("CARGO_BIN_EXE_pica"))
        .arg("--out")
        .arg(tmp.path().join("c"))
        .args(["--config", config.to_str().unwrap(), "gen-data"])
        .output()
        .unwrap();
    assert!(c.status.success());
    let c = PathBuf::from(String::from_utf8(c.stdout).unwrap().trim());
    assert_eq!(c.file_name(), a.file_name());
    assert_eq!(std::fs::read(c.join("dataset.jsonl")).unwrap(), std::fs::read(a.join("dataset.jsonl")).unwrap());

    let other = ok(&tmp.path().join("a"), &["--set", "seed=5", "gen-data"]);
    assert_ne!(std::fs::read(other.join("dataset.jsonl")).unwrap(), std::fs::read(a.join("dataset.jsonl")).unwrap());
}

#[test]
fn pipeline_ablate_eval_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let (data, rm) = data_and_rm(out);
    let rm_s = rm.to_str().unwrap();

    let ablate = ok(out, &["ablate", "--checkpoint", rm_s, "--seeds", "1,2"]);
    let wide = std::fs::read_to_string(ablate.join("ablation.csv")).unwrap();
    let mut lines = wide.lines();
    let header = lines.next().unwrap();
    for arm in ["outcome", "penalty", "pica"] {
        assert!(header.contains(&format!("{arm}_success_rate")), "{header}");
    }
    let grid: Vec<(String, String)> = lines.map(|l| l.split(',').take(2).map(String::from).collect::<Vec<_>>()).map(|v| (v[0].clone(), v[1].clone())).collect();
    assert_eq!(grid, [("1", "2"), ("1", "4"), ("2", "2"), ("2", "4")].map(|(a, b)| (a.to_string(), b.to_string())));
    assert!(wide.lines().skip(1).all(|l| !l.split(',').any(str::is_empty)), "every arm has every step:\n{wide}");
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(ablate.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);

    let policy = ok(out, &["train-policy", "--arm", "penalty"]).join("policy.json");
    let eval = ok(out, &["--set", "policy.hops=[2,3]", "--set", "policy.eval_tasks=30", "eval", "--policy", policy.to_str().unwrap()]);
    let per_hop = std::fs::read_to_string(eval.join("eval_per_hop.csv")).unwrap();
    assert!(per_hop.starts_with("seed,arm,step,hops,episodes,em,f1,mean_turns"));
    assert!(per_hop.lines().any(|l| l.contains(",penalty,4,3,")), "{per_hop}");

    let export = ok(
        out,
        &[
            "export",
            "--checkpoint",
            rm_s,
            "--data",
            data.to_str().unwrap(),
            "--curves",
            ablate.join("ablation_long.csv").to_str().unwrap(),
            "--eval",
            ablate.join("evals.json").to_str().unwrap(),
            "--eval",
            eval.join("eval.json").to_str().unwrap(),
            "--bins",
            "10",
        ],
    );
    let hist = std::fs::read_to_string(export.join("reward_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 11);
    assert!(hist.starts_with("bin_lo,bin_hi,pivot,non_pivot,pivot_density,non_pivot_density"));
    let curves = std::fs::read_to_string(export.join("learning_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 3 * 2);
    assert!(export.join("learning_curves_wide.csv").exists());
    let hops = std::fs::read_to_string(export.join("per_hop.csv")).unwrap();
    assert!(hops.lines().count() >= 1 + 6 + 2);
    let steps = std::fs::read_to_string(export.join("step_rewards.csv")).unwrap();
    assert!(steps.starts_with("trajectory,turn,kind,pivot,raw,normalized,deployed"));

    fails_with(out, &["export"], 2);
}

#[test]
fn serve_rm_answers_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let (_, rm) = data_and_rm(out);
    let mut child = Command::new(env!("CARGO_BIN_EXE_pica"))
        .arg("--out")
        .arg(out)
        .args(["serve-rm", "--checkpoint", rm.to_str().unwrap(), "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().rsplit(' ').next().unwrap().to_string();
    let client = RewardClient::new(&url);
    let health = client.health();
    let expected = pica_service::model_version(&std::fs::read(&rm).unwrap());
    let (_, fixture) = pica_core::trajectory::alma_mater_fixture();
    let rewards = client.get_rewards(&[fixture]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(health.unwrap().model_version, expected);
    assert_eq!(rewards.unwrap().rewards[0].len(), 3);
}
