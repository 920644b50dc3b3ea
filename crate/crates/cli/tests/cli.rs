//! End-to-end tests driving the compiled `bidshade` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bidshade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bidshade"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generate a small dataset and return its path.
fn small_dataset(dir: &Path, seed: &str) -> PathBuf {
    let dataset = dir.join(format!("synth-{seed}.csv"));
    let output = bidshade(&[
        "gen-synthetic",
        "--out",
        path_str(&dataset),
        "--horizon",
        "2000",
        "--contexts",
        "3",
        "--seed",
        seed,
    ]);
    assert_code(&output, 0);
    dataset
}

#[test]
fn gen_synthetic_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_dataset(dir.path(), "7");
    let b = dir.path().join("again.csv");
    let output = bidshade(&[
        "gen-synthetic",
        "--out",
        path_str(&b),
        "--horizon",
        "2000",
        "--contexts",
        "3",
        "--seed",
        "7",
    ]);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("wrote 2000 impressions"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("other-seed.csv");
    let output = bidshade(&[
        "gen-synthetic",
        "--out",
        path_str(&c),
        "--horizon",
        "2000",
        "--contexts",
        "3",
        "--seed",
        "8",
    ]);
    assert_code(&output, 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gen_synthetic_accepts_toml_config_and_truths_out() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("env.toml");
    std::fs::write(
        &config,
        r#"
rho = 0.4
price_mu_offset = 0.6
price_sigma = 0.3
horizon = 500
seed = 3

[[contexts]]
base = { mu = 0.0, sigma = 0.4 }
trajectory = { kind = "constant" }

[[contexts]]
base = { mu = 0.8, sigma = 0.5 }
trajectory = { kind = "sinusoidal-mu", amplitude = 0.5 }
"#,
    )
    .unwrap();
    let dataset = dir.path().join("from-config.csv");
    let truths = dir.path().join("truths.jsonl");
    let output = bidshade(&[
        "gen-synthetic",
        "--config",
        path_str(&config),
        "--out",
        path_str(&dataset),
        "--truths-out",
        path_str(&truths),
    ]);
    assert_code(&output, 0);
    let truth_text = std::fs::read_to_string(&truths).unwrap();
    assert_eq!(truth_text.lines().count(), 500);
    assert!(truth_text.lines().next().unwrap().contains("\"theta\""));

    // Flag overrides the file's horizon.
    let shorter = dir.path().join("short.csv");
    let output = bidshade(&[
        "gen-synthetic",
        "--config",
        path_str(&config),
        "--horizon",
        "100",
        "--out",
        path_str(&shorter),
    ]);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("wrote 100 impressions"));

    // Shape flags conflict with --config.
    let output = bidshade(&[
        "gen-synthetic",
        "--config",
        path_str(&config),
        "--contexts",
        "4",
        "--out",
        path_str(&shorter),
    ]);
    assert_code(&output, 1);
}

#[test]
fn stats_prints_n_and_share() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset(dir.path(), "11");
    let output = bidshade(&["stats", "--dataset", path_str(&dataset), "--contexts", "3"]);
    assert_code(&output, 0);
    let text = stdout(&output);
    assert!(text.contains("n: 2000"), "{text}");
    assert!(text.contains("share(x <= p): "), "{text}");
    assert!(text.contains('%'), "{text}");
    assert!(text.contains("context 0: "), "{text}");
    assert!(text.contains("context 2: "), "{text}");
}

#[test]
fn build_ab_constructs_impressions() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("bids.csv");
    // Enough advertisers that both groups are non-empty for some auctions.
    let mut csv = String::from("auction_id,advertiser_id,bid,timestamp_ms\n");
    for auction in 0..50 {
        for advertiser in 0..8 {
            let bid = 1.0 + ((auction * 13 + advertiser * 7) % 17) as f64 / 3.0;
            csv.push_str(&format!("auc{auction},adv{advertiser},{bid},{auction}\n"));
        }
    }
    std::fs::write(&log, csv).unwrap();

    let out = dir.path().join("impressions.csv");
    let output =
        bidshade(&["build-ab", "--input", path_str(&log), "--out", path_str(&out), "--seed", "4"]);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("of 50 auctions"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("id,timestamp_ms,internal_price,competitor_max\n"));
    assert!(text.lines().count() > 1, "some auctions must survive the split");

    // Same invocation, same bytes.
    let out2 = dir.path().join("impressions2.csv");
    let output = bidshade(&[
        "build-ab",
        "--input",
        path_str(&log),
        "--out",
        path_str(&out2),
        "--seed",
        "4",
    ]);
    assert_code(&output, 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn run_requires_dataset_and_rejects_unknown_policy() {
    let output = bidshade(&["run", "--out", "/tmp/irrelevant.csv"]);
    assert_code(&output, 1);
    assert!(stderr(&output).contains("--dataset"));

    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset(dir.path(), "12");
    let out = dir.path().join("m.csv");
    let output = bidshade(&[
        "run",
        "--dataset",
        path_str(&dataset),
        "--out",
        path_str(&out),
        "--policy",
        "zigzag",
    ]);
    assert_code(&output, 1);
    assert!(stderr(&output).contains("unknown policy"));

    let output = bidshade(&["run", "--dataset", "/nonexistent.csv", "--out", path_str(&out)]);
    assert_code(&output, 2);

    let output = bidshade(&["run", "--definitely-not-a-flag"]);
    assert_code(&output, 1);
    assert!(stderr(&output).to_lowercase().contains("usage"));
}

#[test]
fn run_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset(dir.path(), "13");
    let out = dir.path().join("metrics.csv");
    let output = bidshade(&[
        "run",
        "--dataset",
        path_str(&dataset),
        "--out",
        path_str(&out),
        "--policy",
        "fixed@0.7",
        "--contexts",
        "3",
        "--seed",
        "5",
    ]);
    assert_code(&output, 0);
    let text = stdout(&output);
    assert!(text.contains("policy fixed@0.7:"), "{text}");
    assert!(text.contains("converged at n="), "{text}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("policy,n,avg_reward,success_rate,oracle_avg_reward,regret\n"));
    assert_eq!(csv.lines().count(), 1 + 2, "2000 impressions at M=1000 → 2 rows");
}

#[test]
fn compare_emits_three_policies_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset(dir.path(), "14");
    let out1 = dir.path().join("m1.csv");
    let run = |out: &Path| {
        bidshade(&[
            "compare",
            "--dataset",
            path_str(&dataset),
            "--policies",
            "ts,ucb,exp3",
            "--order",
            "shuffled",
            "--seed",
            "7",
            "--contexts",
            "3",
            "--particles",
            "30",
            "--out",
            path_str(out),
        ])
    };
    let output = run(&out1);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("winner: "), "{}", stdout(&output));

    let csv = std::fs::read_to_string(&out1).unwrap();
    let mut policies: Vec<&str> =
        csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    policies.dedup();
    assert_eq!(policies, vec!["ts", "ucb1", "exp3"]);
    // 2 checkpoints per policy on 2000 impressions.
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let out2 = dir.path().join("m2.csv");
    let output = run(&out2);
    assert_code(&output, 0);
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn compare_reads_toml_run_config() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset(dir.path(), "15");
    let out = dir.path().join("m.csv");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"
dataset = "{}"
policies = ["fixed@0.5", "fixed@1.0"]
order = "chronological"
seed = 9
contexts = 3
checkpoint_every = 500
"#,
            dataset.display()
        ),
    )
    .unwrap();
    let output = bidshade(&["compare", "--config", path_str(&config), "--out", path_str(&out)]);
    assert_code(&output, 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    // 2000/500 = 4 rows per policy.
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    assert!(csv.contains("fixed@0.5"));
    assert!(csv.contains("fixed@1"));

    // Flag overrides the file: coarser checkpoints → fewer rows.
    let out2 = dir.path().join("m2.csv");
    let output = bidshade(&[
        "compare",
        "--config",
        path_str(&config),
        "--checkpoint-every",
        "1000",
        "--out",
        path_str(&out2),
    ]);
    assert_code(&output, 0);
    assert_eq!(std::fs::read_to_string(&out2).unwrap().lines().count(), 1 + 2 * 2);
}

#[test]
fn snapshot_roundtrip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_dataset(dir.path(), "16");
    let full = dir.path().join("full.csv");
    let base_args = |out: &Path| -> Vec<String> {
        [
            "run",
            "--dataset",
            path_str(&dataset),
            "--out",
            path_str(out),
            "--policy",
            "ts",
            "--particles",
            "20",
            "--contexts",
            "3",
            "--seed",
            "21",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };

    // Uninterrupted run.
    let output = Command::new(env!("CARGO_BIN_EXE_bidshade"))
        .args(base_args(&full))
        .output()
        .unwrap();
    assert_code(&output, 0);

    // Interrupted run: snapshot at 700, then resume in a fresh process.
    let half = dir.path().join("half.csv");
    let snap = dir.path().join("state.jsonl");
    let mut args = base_args(&half);
    args.extend(["--snapshot-at".into(), "700".into(), "--snapshot-out".into(),
        snap.display().to_string()]);
    let output = Command::new(env!("CARGO_BIN_EXE_bidshade")).args(&args).output().unwrap();
    assert_code(&output, 0);
    assert!(stdout(&output).contains("snapshot at n=700"));

    let resumed = dir.path().join("resumed.csv");
    let output = bidshade(&[
        "run",
        "--dataset",
        path_str(&dataset),
        "--out",
        path_str(&resumed),
        "--resume",
        path_str(&snap),
        "--seed",
        "21",
    ]);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("resumed ts at n=700"));

    // The resumed trajectory equals the uninterrupted one.
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&resumed).unwrap());

    // snapshot-tools inspects and verifies.
    let output = bidshade(&[
        "snapshot-tools",
        "--snapshot",
        path_str(&snap),
        "--dataset",
        path_str(&dataset),
    ]);
    assert_code(&output, 0);
    let text = stdout(&output);
    assert!(text.contains("format: bidshade-run-snapshot"), "{text}");
    assert!(text.contains("position: 700"), "{text}");
    assert!(text.contains("restores cleanly"), "{text}");

    // Corrupt file → data error.
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "definitely not json\n").unwrap();
    let output = bidshade(&["snapshot-tools", "--snapshot", path_str(&broken)]);
    assert_code(&output, 2);
}

#[test]
fn stats_fails_cleanly_on_censored_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("blind.csv");
    std::fs::write(
        &dataset,
        "id,timestamp_ms,internal_price,competitor_max\n0,0,1.5,\n1,1,2.5,\n",
    )
    .unwrap();
    let output = bidshade(&["stats", "--dataset", path_str(&dataset)]);
    assert_code(&output, 2);
    assert!(stderr(&output).contains("cannot adjudicate"), "{}", stderr(&output));

    let out = dir.path().join("m.csv");
    let output = bidshade(&["run", "--dataset", path_str(&dataset), "--out", path_str(&out)]);
    assert_code(&output, 2);
}

#[test]
fn help_and_version_exit_zero() {
    let output = bidshade(&["--help"]);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("gen-synthetic"));
    let output = bidshade(&["--version"]);
    assert_code(&output, 0);
    let output = bidshade(&["run", "--help"]);
    assert_code(&output, 0);
    assert!(stdout(&output).contains("--dataset"));
}
