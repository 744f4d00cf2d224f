mod common;

use std::fs;
use std::path::Path;
use std::process::Stdio;
use std::time::{Duration, Instant};

use common::*;
use moh_core::cli::report::OPTIMIZER_ROW;
use moh_core::cli::{EXIT_BUDGET, EXIT_CONFIG, EXIT_INTERRUPTED, EXIT_TRANSPORT};
use moh_core::instances::{load_dataset, save_dataset, Dataset, Instances, Provenance};
use moh_core::metaloop::{read_jsonl, AuditRecord, Checkpoint, MetricsRecord, StopReason};
use serde_json::Value;

fn code(o: &std::process::Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn train(dir: &Path, config: &str) -> std::process::Output {
    run_moh(&["train", "--config", dir.join(config).to_str().unwrap()])
}

fn metrics(run: &Path) -> Vec<MetricsRecord> {
    read_jsonl(&run.join("metrics.jsonl")).unwrap()
}

#[test]
#[ignore = "rewrites tests/fixtures/replay; run after changing prompts or the training loop"]
fn regenerate_replay_fixture() {
    let fx = fixture_dir();
    for (name, size, seed) in [("bpp_a", "200", "1"), ("bpp_b", "300", "2")] {
        let out = fx.join(format!("{name}.jsonl"));
        let o = run_moh(&["gen-data", "--kind", "bpp", "--size", size, "--count", "3", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let server = FakeLlm::start(Duration::ZERO);
    let tmp = fixture_copy();
    let _ = fs::remove_file(tmp.path().join("transcript.jsonl"));
    let cfg = fs::read_to_string(tmp.path().join("train.toml")).unwrap();
    let llm = format!("[llm]\nmode = \"record\"\ntranscript = \"transcript.jsonl\"\nendpoint = \"{}\"\n", server.url);
    fs::write(tmp.path().join("record.toml"), with_llm(&cfg, &llm)).unwrap();
    let o = moh().env("MOH_LLM_API_KEY", "test").args(["train", "--config"]).arg(tmp.path().join("record.toml")).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::copy(tmp.path().join("transcript.jsonl"), fx.join("transcript.jsonl")).unwrap();

    let infer_transcript = tmp.path().join("infer_transcript.jsonl");
    let o = moh()
        .env("MOH_LLM_API_KEY", "test")
        .args(["infer", "--kind", "online_bpp", "--task-id", "bpp_new", "--size", "120", "--count", "3", "--seed", "9"])
        .args(["--llm-mode", "record", "--run-dir"])
        .arg(tmp.path().join("run"))
        .arg("--transcript")
        .arg(&infer_transcript)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::copy(&infer_transcript, fx.join("infer_transcript.jsonl")).unwrap();

    let replay = fixture_copy();
    let o = train(replay.path(), "train.toml");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::copy(replay.path().join("run/metrics.jsonl"), fx.join("golden_metrics.jsonl")).unwrap();
    fs::copy(replay.path().join("run/best_heuristics.json"), fx.join("golden_best_heuristics.json")).unwrap();
    let o = infer_replay(replay.path(), &replay.path().join("out"), None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::copy(replay.path().join("out/best_heuristic.json"), fx.join("golden_infer_best.json")).unwrap();
}

fn infer_replay(dir: &Path, out: &Path, iterations: Option<&str>) -> std::process::Output {
    let mut c = moh();
    c.args(["infer", "--kind", "online_bpp", "--task-id", "bpp_new", "--size", "120", "--count", "3", "--seed", "9"])
        .args(["--llm-mode", "replay", "--run-dir"])
        .arg(dir.join("run"))
        .arg("--transcript")
        .arg(dir.join("infer_transcript.jsonl"))
        .arg("--out")
        .arg(out);
    if let Some(n) = iterations {
        c.args(["--iterations", n]);
    }
    c.output().unwrap()
}

#[test]
fn replay_training_matches_the_golden_metrics() {
    let a = fixture_copy();
    let b = fixture_copy();
    for d in [&a, &b] {
        let o = train(d.path(), "train.toml");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).contains("seed: 7"));
    }
    let golden = fs::read(fixture_dir().join("golden_metrics.jsonl")).unwrap();
    assert_eq!(fs::read(a.path().join("run/metrics.jsonl")).unwrap(), golden);
    assert_eq!(fs::read(b.path().join("run/metrics.jsonl")).unwrap(), golden);
    let best: Value = serde_json::from_slice(&fs::read(a.path().join("run/best_heuristics.json")).unwrap()).unwrap();
    let gold: Value = serde_json::from_slice(&fs::read(fixture_dir().join("golden_best_heuristics.json")).unwrap()).unwrap();
    assert_eq!(best, gold);

    let m = metrics(&a.path().join("run"));
    assert_eq!(m.len(), 4);
    assert_eq!(m.last().unwrap().stop_reason, Some(StopReason::Completed));
    let audit: Vec<AuditRecord> = read_jsonl(&a.path().join("run/audit.jsonl")).unwrap();
    assert_eq!(audit.len() as u64, m.last().unwrap().evals_used);
    assert!(m.last().unwrap().evals_used <= 1000);
    assert!(a.path().join("run/config.toml").exists());
}

#[test]
fn finished_runs_are_not_repeated() {
    let d = fixture_copy();
    assert_eq!(code(&train(d.path(), "train.toml")), 0);
    let before = fs::read(d.path().join("run/audit.jsonl")).unwrap();
    let o = train(d.path(), "train.toml");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(d.path().join("run/audit.jsonl")).unwrap(), before);
}

#[test]
fn report_emits_the_convergence_series() {
    let d = fixture_copy();
    assert_eq!(code(&train(d.path(), "train.toml")), 0);
    let run = d.path().join("run");
    let o = run_moh(&["report", "--run-dir", run.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# seed: 7"));
    assert_eq!(lines.next(), Some("task,iteration,best_cost,evals_used,elapsed_s"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 3);
    for task in ["bpp_a", "bpp_b", OPTIMIZER_ROW] {
        let series: Vec<f64> = rows.iter().filter(|r| r[0] == task).map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(series.len(), 4, "{task}");
        assert!(series.windows(2).all(|w| w[1] <= w[0]), "{task}: {series:?}");
    }
    let o = run_moh(&["report", "--run-dir", run.to_str().unwrap(), "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["iterations"], 3);
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn report_rejects_non_run_directories() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_moh(&["report", "--run-dir", d.path().to_str().unwrap()])), EXIT_CONFIG);
    let missing = d.path().join("nope");
    assert_eq!(code(&run_moh(&["report", "--run-dir", missing.to_str().unwrap()])), EXIT_CONFIG);
}

#[test]
fn forced_budget_exhaustion_stops_cleanly() {
    let d = fixture_copy();
    let cfg = fs::read_to_string(d.path().join("train.toml")).unwrap().replace("limit = 1000", "limit = 24");
    fs::write(d.path().join("small.toml"), cfg).unwrap();
    let o = train(d.path(), "small.toml");
    assert_eq!(code(&o), EXIT_BUDGET, "{}", stderr(&o));
    let run = d.path().join("run");
    let m = metrics(&run);
    let last = m.last().unwrap();
    assert_eq!(last.stop_reason, Some(StopReason::BudgetExhausted));
    assert_eq!(last.evals_used, 24);
    let audit: Vec<AuditRecord> = read_jsonl(&run.join("audit.jsonl")).unwrap();
    assert_eq!(audit.len(), 24);
    let before = &m[m.len() - 2];
    assert!(before.evals_used < 24 && before.stop_reason.is_none(), "exhaustion must fall inside an iteration");
    let ck = Checkpoint::load(&run).unwrap();
    assert_eq!(ck.budget.used, 24);
    assert_eq!(ck.stop_reason, Some(StopReason::BudgetExhausted));

    let o = train(d.path(), "small.toml");
    assert_eq!(code(&o), EXIT_BUDGET);
    assert_eq!(read_jsonl::<AuditRecord>(&run.join("audit.jsonl")).unwrap().len(), 24);
}

#[test]
fn live_mode_without_a_key_is_an_actionable_error() {
    let d = fixture_copy();
    let cfg = fs::read_to_string(d.path().join("train.toml")).unwrap();
    fs::write(d.path().join("live.toml"), with_llm(&cfg, "[llm]\nmode = \"live\"\n")).unwrap();
    let o = train(d.path(), "live.toml");
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("MOH_LLM_API_KEY"), "{}", stderr(&o));
    assert!(!d.path().join("run").exists());
}

#[test]
fn config_errors_exit_with_the_config_code() {
    let d = fixture_copy();
    let cfg = fs::read_to_string(d.path().join("train.toml")).unwrap();
    fs::write(d.path().join("a.toml"), cfg.replace("[budget]", "[budget]\nlimti = 3")).unwrap();
    let o = train(d.path(), "a.toml");
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("limti"));
    fs::write(d.path().join("b.toml"), cfg.replace("limit = 1000", "limit = 10")).unwrap();
    assert_eq!(code(&train(d.path(), "b.toml")), EXIT_CONFIG);
    fs::write(d.path().join("c.toml"), cfg.replace("bpp_b.jsonl", "missing.jsonl")).unwrap();
    assert_eq!(code(&train(d.path(), "c.toml")), EXIT_CONFIG);
    assert_eq!(code(&run_moh(&["train", "--config", "/nonexistent/x.toml"])), EXIT_CONFIG);
    assert_eq!(code(&run_moh(&["train"])), EXIT_CONFIG);
}

#[test]
fn a_run_directory_keeps_its_configuration() {
    let d = fixture_copy();
    assert_eq!(code(&train(d.path(), "train.toml")), 0);
    let cfg = fs::read_to_string(d.path().join("train.toml")).unwrap().replace("seed = 7", "seed = 8");
    fs::write(d.path().join("other.toml"), cfg).unwrap();
    let o = train(d.path(), "other.toml");
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(stderr(&o).contains("different configuration"));
}

#[test]
fn a_replay_miss_is_a_transport_failure() {
    let d = fixture_copy();
    let lines = read_lines(&d.path().join("transcript.jsonl"));
    fs::write(d.path().join("transcript.jsonl"), lines[..lines.len() - 1].join("\n") + "\n").unwrap();
    let o = train(d.path(), "train.toml");
    assert_eq!(code(&o), EXIT_TRANSPORT, "{}", stderr(&o));
}

#[test]
fn sigint_checkpoints_and_the_run_resumes() {
    let server = FakeLlm::start(Duration::from_millis(150));
    let d = fixture_copy();
    let cfg = fs::read_to_string(d.path().join("train.toml")).unwrap();
    let llm = format!("[llm]\nmode = \"record\"\ntranscript = \"rec.jsonl\"\nendpoint = \"{}\"\n", server.url);
    fs::write(d.path().join("rec.toml"), with_llm(&cfg, &llm)).unwrap();
    let mut child = moh()
        .env("MOH_LLM_API_KEY", "test")
        .args(["train", "--config"])
        .arg(d.path().join("rec.toml"))
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let metrics_path = d.path().join("run/metrics.jsonl");
    let t0 = Instant::now();
    while !metrics_path.exists() || fs::read_to_string(&metrics_path).unwrap().lines().count() == 0 {
        assert!(t0.elapsed() < Duration::from_secs(120), "initialization never finished");
        std::thread::sleep(Duration::from_millis(20));
    }
    unsafe {
        libc::kill(child.id() as i32, libc::SIGINT);
    }
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(EXIT_INTERRUPTED));
    let ck = Checkpoint::load(&d.path().join("run")).unwrap();
    assert_eq!(ck.stop_reason, Some(StopReason::Interrupted));
    assert!(ck.iteration < 3);

    let o = moh().env("MOH_LLM_API_KEY", "test").args(["train", "--config"]).arg(d.path().join("rec.toml")).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = metrics(&d.path().join("run"));
    let last = m.last().unwrap();
    assert_eq!(last.iteration, 3);
    assert_eq!(last.stop_reason, Some(StopReason::Completed));
    let audit: Vec<AuditRecord> = read_jsonl(&d.path().join("run/audit.jsonl")).unwrap();
    assert_eq!(audit.len() as u64, last.evals_used);
    assert!(audit.iter().enumerate().all(|(i, a)| a.seq == i as u64 + 1));
}

#[test]
fn replayed_inference_is_deterministic() {
    let d = fixture_copy();
    assert_eq!(code(&train(d.path(), "train.toml")), 0);
    let golden: Value = serde_json::from_slice(&fs::read(fixture_dir().join("golden_infer_best.json")).unwrap()).unwrap();
    for out in ["o1", "o2"] {
        let o = infer_replay(d.path(), &d.path().join(out), None);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let best: Value = serde_json::from_slice(&fs::read(d.path().join(out).join("best_heuristic.json")).unwrap()).unwrap();
        assert_eq!(best, golden);
        let py = fs::read_to_string(d.path().join(out).join("best_heuristic.py")).unwrap();
        assert_eq!(py, golden["code"].as_str().unwrap());
        let report = read_lines(&d.path().join(out).join("report.csv"));
        assert_eq!(report[0], "# seed: 7");
        assert_eq!(report.len(), 2 + 3);
        let costs: Vec<f64> = report[2..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn inference_with_zero_iterations_emits_the_initial_best() {
    let d = fixture_copy();
    assert_eq!(code(&train(d.path(), "train.toml")), 0);
    let o = infer_replay(d.path(), &d.path().join("z"), Some("0"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_lines(&d.path().join("z/report.csv"));
    assert_eq!(report.len(), 3);
    let best: Value = serde_json::from_slice(&fs::read(d.path().join("z/best_heuristic.json")).unwrap()).unwrap();
    assert_eq!(best["cost"].as_f64().unwrap(), report[2].split(',').nth(2).unwrap().parse::<f64>().unwrap());
}

#[test]
fn inference_needs_a_run_directory() {
    let d = tempfile::tempdir().unwrap();
    let o = run_moh(&["infer", "--run-dir", d.path().join("none").to_str().unwrap(), "--kind", "online_bpp", "--size", "20"]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn gen_data_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let p = |name: &str| d.path().join(name).to_str().unwrap().to_string();
    for out in ["a.jsonl", "b.jsonl"] {
        let o = run_moh(&["gen-data", "--kind", "tsp", "--n", "20", "--count", "128", "--seed", "4", "--no-references", "--out", &p(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(p("a.jsonl")).unwrap(), fs::read(p("b.jsonl")).unwrap());
    assert_eq!(load_dataset(p("a.jsonl")).unwrap().len(), 128);
    assert_eq!(read_lines(Path::new(&p("a.jsonl"))).len(), 1 + 128);

    for out in ["r1.jsonl", "r2.jsonl"] {
        let o = run_moh(&["gen-data", "--kind", "tsp", "--size", "12", "--count", "3", "--seed", "4", "--out", &p(out)]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(p("r1.jsonl")).unwrap(), fs::read(p("r2.jsonl")).unwrap());
    assert!(load_dataset(p("r1.jsonl")).unwrap().references().is_some());

    let o = run_moh(&["gen-data", "--kind", "cvrp", "--size", "12", "--count", "3", "--out", &p("x.jsonl")]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn baseline_prints_a_table_and_csv() {
    let d = tempfile::tempdir().unwrap();
    let p = |name: &str| d.path().join(name).to_str().unwrap().to_string();
    assert_eq!(code(&run_moh(&["gen-data", "--kind", "tsp", "--size", "10", "--count", "8", "--seed", "1", "--out", &p("t.jsonl")])), 0);
    assert_eq!(code(&run_moh(&["gen-data", "--kind", "bpp", "--size", "200", "--count", "4", "--seed", "2", "--out", &p("b.jsonl")])), 0);
    let o = run_moh(&["baseline", "--dataset", &p("t.jsonl"), &p("b.jsonl"), "--gls-rounds", "50", "--csv", &p("out.csv")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("seed: 1 2\n"));
    let csv = read_lines(Path::new(&p("out.csv")));
    assert_eq!(csv[0], "# seed: 1 2");
    assert_eq!(csv[1], moh_core::cli::baseline::CSV_HEADER);
    let methods: Vec<&str> = csv[2..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["nearest_neighbor", "gls_identity", "best_fit", "first_fit"]);
    let gap = |m: &str| -> f64 {
        csv[2..].iter().find(|l| l.split(',').nth(1) == Some(m)).unwrap().split(',').nth(6).unwrap().parse().unwrap()
    };
    assert!(gap("gls_identity") <= gap("nearest_neighbor"));
    assert!(gap("gls_identity") > -1e-9);
    assert!(gap("best_fit") >= 0.0);

    let o = run_moh(&["baseline", "--dataset", &p("b.jsonl"), "--methods", "nearest_neighbor"]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn baseline_rejects_an_empty_dataset() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("empty.jsonl");
    save_dataset(&Dataset::new("empty", Instances::Bpp(Vec::new()), Provenance::default()), &path).unwrap();
    let o = run_moh(&["baseline", "--dataset", path.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn readme_config_example_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").unwrap() + "```toml\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let cfg = moh_core::cli::config::RunConfig::parse(&readme[start..end]).unwrap();
    assert_eq!(cfg.tasks.len(), 1);
    assert_eq!(cfg.sandbox.worker, ["python3", "-m", "worker"]);
}
