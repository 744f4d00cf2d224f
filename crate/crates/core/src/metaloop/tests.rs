use std::sync::atomic::AtomicBool;

use super::*;
use crate::harnesses::rules::find_native_rule;
use crate::harnesses::RuleKind;
use crate::instances::gen_bpp_dataset;
use crate::llm::{FnProvider, TranscriptEntry};
use crate::optimizers::find_native_optimizer;
use crate::scoring::{HarnessParams, TaskKind};

fn rule(name: &str) -> &'static str {
    find_native_rule(RuleKind::BinScore, name).unwrap().source
}

fn fenced(code: &str) -> String {
    format!("Here you go.\n```python\n{code}\n```\n")
}

fn json_list(key: &str, items: &[&str]) -> String {
    format!("```json\n{}\n```", serde_json::json!({ key: items }))
}

/// Answers by prompt content only, so concurrent batches stay deterministic.
fn respond(r: &PromptRequest) -> String {
    let m = r.message.as_str();
    if m.contains("high-level directions") {
        return "```json\n{\"direction\": [{\"content\": \"pack tightly\"}, {\"content\": \"first come\"}, \
                {\"content\": \"spread out\"}, {\"content\": \"be vague\"}]}\n```"
            .into();
    }
    if m.starts_with("Given the following heuristics for the problem") {
        return json_list("insights", &["pack tightly", "penalize waste"]);
    }
    if m.starts_with("Given the following heuristic for subtask") || m.starts_with("The best heuristic so far") {
        return json_list("insights", &["penalize waste", "pack tightly"]);
    }
    if m.starts_with("Improve the following") || m.starts_with("Refine the following") {
        if m.contains("named 'optimize_algorithm'") {
            return fenced(find_native_optimizer("elitist").unwrap().source);
        }
        return fenced(if m.contains("penalize waste") { rule("ratio_penalty") } else { rule("best_fit") });
    }
    if m.contains("Write a function") {
        for (d, name) in [("pack tightly", "best_fit"), ("first come", "first_fit"), ("spread out", "worst_fit"), ("penalize waste", "ratio_penalty")] {
            if m.contains(&format!("direction: {d}.")) {
                return fenced(rule(name));
            }
        }
        if m.contains("direction: be vague.") {
            return "I am not sure how to do that.".into();
        }
        return fenced(rule("first_fit"));
    }
    panic!("unscripted prompt: {}", &m[..m.len().min(120)]);
}

fn scripted_store() -> Arc<TranscriptStore> {
    Arc::new(TranscriptStore::record_in_memory(Arc::new(FnProvider(|r: &PromptRequest| Ok(respond(r)))), 2))
}

fn bpp_task(id: &str, items: usize, seed: u64) -> TaskSpec {
    let ds = gen_bpp_dataset(items, 100, 3, seed).unwrap();
    TaskSpec::new(id, TaskKind::OnlineBpp, Arc::new(ds), 1.0, HarnessParams::default()).unwrap()
}

fn tasks(n: usize) -> Vec<TaskSpec> {
    (0..n).map(|i| bpp_task(&format!("bpp{i}"), 60 + 20 * i, i as u64 + 1)).collect()
}

fn config(t: u32, m: usize, k: usize) -> MetaLoopConfig {
    MetaLoopConfig { iterations: t, candidates: m, heuristics_per_task: k, seed: 7, ..Default::default() }
}

fn engine(cfg: MetaLoopConfig, n: usize, limit: u64, store: Arc<TranscriptStore>) -> MetaLoop {
    MetaLoop::new(cfg, tasks(n), BudgetLedger::new(limit), store).unwrap()
}

fn requests_matching(store: &TranscriptStore, f: impl Fn(&str) -> bool) -> usize {
    store.entries().iter().filter(|e| f(&e.request.message)).count()
}

#[test]
fn config_is_validated() {
    assert!(MetaLoopConfig::default().validate(4, 1000).is_ok());
    assert!(MetaLoopConfig::default().validate(4, 999).is_err());
    assert!(MetaLoopConfig { candidates: 0, ..Default::default() }.validate(1, 1000).is_err());
    assert!(MetaLoopConfig::default().validate(0, 1000).is_err());
    let e = MetaLoop::new(config(1, 1, 1), vec![bpp_task("a", 10, 1), bpp_task("a", 10, 2)], BudgetLedger::new(10), scripted_store());
    assert!(matches!(e, Err(MetaLoopError::Config(_))));
}

#[test]
fn init_keeps_only_working_candidates() {
    let ml = engine(config(1, 1, 1), 1, 100, scripted_store());
    let pops = ml.init_heuristic_populations().unwrap();
    assert_eq!(pops["bpp0"].size(), 3);
    assert_eq!(ml.budget().used(), 3);
    let ideas: Vec<&str> = pops["bpp0"].ranked().iter().map(|i| i.idea.as_str()).collect();
    assert!(ideas.iter().all(|i| !i.is_empty()));
}

#[test]
fn init_without_idea_generation_skips_directions() {
    let store = scripted_store();
    let cfg = MetaLoopConfig { idea_generation_enabled: false, heuristic_capacity: 4, ..config(1, 1, 1) };
    let ml = engine(cfg, 1, 100, store.clone());
    let pops = ml.init_heuristic_populations().unwrap();
    assert_eq!(requests_matching(&store, |m| m.contains("high-level directions")), 0);
    assert_eq!(store.counters().requests, 4);
    assert!(store.entries().iter().all(|e| !e.request.message.contains("direction:")));
    assert_eq!(pops["bpp0"].size(), 1);
}

#[test]
fn init_fails_when_every_candidate_fails() {
    let store = Arc::new(TranscriptStore::live(
        Arc::new(FnProvider(|r: &PromptRequest| {
            Ok(if r.message.contains("high-level directions") { respond(r) } else { "no code".to_string() })
        })),
        1,
    ));
    let ml = engine(config(1, 1, 1), 1, 100, store);
    match ml.init_heuristic_populations() {
        Err(MetaLoopError::TaskInit { task, reason }) => {
            assert_eq!(task, "bpp0");
            assert!(reason.contains("4 initial candidates"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn seed_optimizer_is_evaluated_or_flagged() {
    let ml = engine(config(1, 1, 2), 2, 100, scripted_store());
    let state = ml.initialize().unwrap();
    assert_eq!(state.optimizer_pop.size(), 1);
    assert!(state.seed_evaluated);
    assert!(state.meta_optimizer.cost < WORST_COST);
    assert_eq!(state.meta_optimizer.code, seed_optimizer().source);
    // 3 per task at init, then at most K per task for the seed.
    assert!(ml.budget().used() <= 6 + 4);
    assert_eq!(ml.audit_total(), ml.budget().used());

    let cfg = MetaLoopConfig { evaluate_seed_optimizer: false, ..config(1, 1, 1) };
    let ml = engine(cfg, 1, 100, scripted_store());
    let state = ml.initialize().unwrap();
    assert!(!state.seed_evaluated);
    assert_eq!(state.meta_optimizer.cost, WORST_COST);
    assert_eq!(ml.budget().used(), 3);
}

#[test]
fn single_step_training_trace() {
    let store = scripted_store();
    let ml = engine(config(1, 1, 1), 1, 100, store.clone());
    let state = ml.initialize().unwrap();
    let seed_cost = state.meta_optimizer.cost;
    let used_before = ml.budget().used();
    let before = store.entries().len();
    let state = ml.train(state).unwrap();
    let generation_calls =
        requests_matching(&store, |m| m.starts_with("Improve the following") && m.contains("named 'optimize_algorithm'"));
    assert_eq!(generation_calls, 1);
    assert!(store.entries().len() > before);
    assert!(ml.budget().used() - used_before <= 1);
    assert_eq!(state.iteration, 1);
    assert_eq!(state.stop_reason, Some(StopReason::Completed));
    let candidate = state.optimizer_pop.ranked().into_iter().find(|i| i.origin.source == "meta").cloned();
    match candidate {
        Some(c) if c.cost < seed_cost => assert_eq!(state.meta_optimizer.id, c.id),
        _ => assert_eq!(state.meta_optimizer.code, seed_optimizer().source),
    }
    assert_eq!(state.metrics.len(), 2);
}

#[test]
fn budget_exhaustion_stops_cleanly() {
    // Init uses 3 evaluations and the seed at most 1; the rest is too little
    // for two full candidates.
    let ml = engine(config(1, 2, 1), 1, 5, scripted_store());
    let state = ml.initialize().unwrap();
    assert_eq!(ml.budget().used(), 4);
    let state = ml.train(state).unwrap();
    assert_eq!(state.stop_reason, Some(StopReason::BudgetExhausted));
    assert_eq!(state.metrics.last().unwrap().stop_reason, Some(StopReason::BudgetExhausted));
    assert_eq!(ml.budget().used(), 5);
    assert_eq!(ml.audit_total(), 5);
    // Training again is a no-op.
    let again = ml.train(state.clone()).unwrap();
    assert_eq!(again.metrics.len(), state.metrics.len());

    let ml = engine(config(1, 1, 1), 1, 2, scripted_store());
    assert!(matches!(ml.initialize(), Err(MetaLoopError::Budget(_))));
}

#[test]
fn interruption_is_checkpointed_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let flag = Arc::new(AtomicBool::new(false));
    let ml = engine(config(2, 1, 1), 1, 100, scripted_store()).with_interrupt(flag.clone()).with_run_dir(dir.path()).unwrap();
    let state = ml.initialize().unwrap();
    flag.store(true, Ordering::SeqCst);
    let state = ml.train(state).unwrap();
    assert_eq!(state.stop_reason, Some(StopReason::Interrupted));
    assert_eq!(state.iteration, 0);
    let ck = Checkpoint::load(dir.path()).unwrap();
    assert_eq!(ck.stop_reason, Some(StopReason::Interrupted));

    let mut ml = engine(config(2, 1, 1), 1, 100, scripted_store()).with_run_dir(dir.path()).unwrap();
    let state = ml.resume(&ck).unwrap();
    assert_eq!(ml.budget().used(), ck.budget.used);
    let state = ml.train(state).unwrap();
    assert_eq!(state.iteration, 2);
    assert_eq!(state.stop_reason, Some(StopReason::Completed));
    let audit: Vec<AuditRecord> = read_jsonl(&dir.path().join(AUDIT_FILE)).unwrap();
    assert_eq!(audit.len() as u64, ml.budget().used());
    assert!(audit.iter().enumerate().all(|(i, r)| r.seq == i as u64 + 1));
}

fn run_to_dir(dir: &Path, entries: Vec<TranscriptEntry>, t: u32) -> (RunState, MetaLoop) {
    let store = Arc::new(TranscriptStore::replay(entries).unwrap());
    let ml = engine(config(t, 2, 2), 2, 200, store).with_run_dir(dir).unwrap();
    let state = ml.initialize().unwrap();
    (ml.train(state).unwrap(), ml)
}

#[test]
fn replay_is_deterministic_and_monotone() {
    let store = scripted_store();
    let ml = engine(config(3, 2, 2), 2, 200, store.clone());
    let recorded = ml.train(ml.initialize().unwrap()).unwrap();
    let entries = store.entries();

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (sa, mla) = run_to_dir(a.path(), entries.clone(), 3);
    let (sb, _) = run_to_dir(b.path(), entries, 3);
    let ma = fs::read(a.path().join(METRICS_FILE)).unwrap();
    assert_eq!(ma, fs::read(b.path().join(METRICS_FILE)).unwrap());
    assert_eq!(sa.metrics, recorded.metrics);
    let codes = |s: &RunState| s.best_heuristics().into_iter().map(|(k, v)| (k, v.code)).collect::<Vec<_>>();
    assert_eq!(codes(&sa), codes(&sb));

    let metrics: Vec<MetricsRecord> = read_jsonl(&a.path().join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.len(), 4);
    for w in metrics.windows(2) {
        assert!(w[1].meta_cost <= w[0].meta_cost);
        for (task, c) in &w[1].task_best {
            assert!(*c <= w[0].task_best[task]);
        }
        assert!(w[1].evals_used >= w[0].evals_used);
    }
    assert_eq!(sa.meta_optimizer, *sa.optimizer_pop.best().unwrap());
    assert_eq!(mla.audit_total(), mla.budget().used());
    assert!(mla.budget().used() <= 200);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let store = scripted_store();
    let ml = engine(config(3, 2, 2), 2, 200, store.clone());
    ml.train(ml.initialize().unwrap()).unwrap();
    let entries = store.entries();

    let whole = tempfile::tempdir().unwrap();
    run_to_dir(whole.path(), entries.clone(), 3);

    let split = tempfile::tempdir().unwrap();
    run_to_dir(split.path(), entries.clone(), 1);
    let ck = Checkpoint::load(split.path()).unwrap();
    assert_eq!(ck.stop_reason, Some(StopReason::Completed));
    let store = Arc::new(TranscriptStore::replay(entries).unwrap());
    let mut ml = engine(config(3, 2, 2), 2, 200, store).with_run_dir(split.path()).unwrap();
    let mut state = ml.resume(&ck).unwrap();
    state.stop_reason = None;
    ml.train(state).unwrap();
    let strip = |p: &Path| {
        let mut v: Vec<MetricsRecord> = read_jsonl(&p.join(METRICS_FILE)).unwrap();
        v.iter_mut().for_each(|m| m.stop_reason = None);
        v
    };
    assert_eq!(strip(whole.path()), strip(split.path()));
}

#[test]
fn inference_builds_and_improves_a_population() {
    let store = scripted_store();
    let ml = engine(config(1, 1, 2), 1, 200, store.clone());
    let state = ml.train(ml.initialize().unwrap()).unwrap();
    let trained = state.best_heuristics();
    let new_task = bpp_task("bpp_new", 120, 99);

    let zero = ml.infer(&state.meta_optimizer, &trained, &new_task, 0).unwrap();
    assert_eq!(zero.history.len(), 1);
    assert_eq!(zero.best, *zero.population.best().unwrap());
    assert!(requests_matching(&store, |m| m.starts_with("Given the following heuristics for the problem")) >= 1);

    let live = ml.infer(&state.meta_optimizer, &trained, &new_task, 2).unwrap();
    assert!(live.history.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(live.history.len(), 3);

    let rec = scripted_store();
    let recorded = engine(config(1, 1, 2), 1, 200, rec.clone()).infer(&state.meta_optimizer, &trained, &new_task, 2).unwrap();
    let replay = || {
        let store = Arc::new(TranscriptStore::replay(rec.entries()).unwrap());
        engine(config(1, 1, 2), 1, 200, store).infer(&state.meta_optimizer, &trained, &new_task, 2).unwrap()
    };
    let (r1, r2) = (replay(), replay());
    assert_eq!(r1.best, r2.best);
    assert_eq!(r1.best, recorded.best);
    assert_eq!(r1.history, recorded.history);
}
