use std::path::{Path, PathBuf};

use simloop_core::evaluation::{
    bundled_tasks, load_schemes, report_csv, run_evaluation, summary_csv, EvalOptions, ReplayFactory, TaskClass,
};
use simloop_core::knowledge_base::KnowledgeBase;
use simloop_core::llm::ProviderKind;
use simloop_core::orchestrator::SessionResources;
use simloop_core::retrieval::{build_index, TrigramEmbedder};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn fixture_dir_matches_bundled_kb() {
    assert_eq!(KnowledgeBase::load_dir(&fixtures()).unwrap(), KnowledgeBase::bundled());
}

#[test]
fn task_suite_shape() {
    let kb = KnowledgeBase::bundled();
    let tasks = bundled_tasks(&kb);
    assert_eq!(tasks.len(), 34);
    assert_eq!(tasks.iter().filter(|t| t.class == TaskClass::Normal).count(), 27);
    assert_eq!(tasks.iter().filter(|t| t.class == TaskClass::Complex).count(), 7);
}

#[test]
fn scheme_matrix_loads() {
    let schemes = load_schemes(&fixtures().join("schemes.toml")).unwrap();
    let http = schemes.iter().filter(|s| s.provider.kind == ProviderKind::Http).count();
    assert_eq!(http, 19);
    let full = schemes.iter().find(|s| s.name == "GPT-3.5-Full").unwrap();
    assert!(full.technique.query_planning && full.technique.feedback_loop);
    let nk = schemes.iter().find(|s| s.name == "GPT-3.5-NK").unwrap();
    assert!(!nk.technique.query_planning);
    for s in schemes.iter().filter(|s| s.provider.kind == ProviderKind::Replay) {
        assert!(s.provider.replay_path.as_ref().unwrap().is_dir(), "{}", s.name);
    }
}

#[test]
fn replay_suite_scores_and_reports() {
    let kb = KnowledgeBase::bundled();
    let embedder = TrigramEmbedder::default();
    let index = build_index(&kb.chunks, &embedder).unwrap();
    let res = SessionResources { kb: &kb, index: &index, embedder: &embedder };
    let tasks = bundled_tasks(&kb);
    let schemes = load_schemes(&fixtures().join("schemes.toml")).unwrap();
    let scheme = schemes.iter().find(|s| s.name == "Replay-Full").unwrap();
    let factory = ReplayFactory::open(scheme.provider.replay_path.as_ref().unwrap()).unwrap();

    let serial = run_evaluation(&tasks, scheme, res, &factory, &EvalOptions::default());
    let parallel = run_evaluation(&tasks, scheme, res, &factory, &EvalOptions { jobs: 4, transcript_dir: None });
    assert_eq!(serial, parallel);
    assert_eq!(serial.provider_failures, 0);

    let card = |id: &str| serial.cards.iter().find(|c| c.task_id == id).unwrap().attempt_scores.clone();
    assert_eq!(card("normal-16"), vec![1.0; 3]);
    assert_eq!(card("normal-20"), vec![0.0, 1.0, 1.0]);
    assert_eq!(card("normal-05"), vec![0.5; 3]);
    assert_eq!(card("normal-15"), vec![1.0; 3]);
    assert_eq!(card("normal-01"), vec![0.0; 3]);
    assert_eq!(card("normal-09"), vec![0.0, 1.0, 1.0]);
    assert_eq!(card("complex-03"), vec![0.0; 3]);
    assert_eq!(card("complex-07"), vec![0.0, 0.0, 1.0]);

    let csv = report_csv(std::slice::from_ref(&serial));
    assert_eq!(csv.lines().count(), 34 * 3 + 1);
    let summary = summary_csv(&[serial]);
    assert_eq!(summary.lines().count(), 2);
}
