//! Benchmark harness: task and scheme fixtures, per-attempt scoring,
//! fill-forward of untriggered attempts, accuracy aggregation and reports.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::ANSWER_VAR;
use crate::knowledge_base::KnowledgeBase;
use crate::llm::{HttpClient, LlmClient, LlmError, ProviderConfig, ProviderKind, ReplayClient, ReplayFile};
use crate::orchestrator::{run_session, AttemptOutcome, AttemptRecord, SessionResources, SessionTranscript};
use crate::prompt::{RagMode, TechniqueConfig};
use crate::script::{parse_script, Arg, CallNode, ScriptAst, Value};
use crate::validation::{autocorrect, validate};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("task {id}: {reason}")]
    InvalidTask { id: String, reason: String },
    #[error("scheme {name}: {reason}")]
    InvalidScheme { name: String, reason: String },
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("need between 1 and {n_max} triggered scores, got {got}")]
    InvalidScores { got: usize, n_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskClass {
    Normal,
    Complex,
}

impl TaskClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskClass::Normal => "normal",
            TaskClass::Complex => "complex",
        }
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub class: TaskClass,
    pub request: String,
    pub canonical: String,
    /// Canonical program after auto-correction; validates against the KB.
    pub expected: ScriptAst,
}

#[derive(Deserialize)]
struct TaskFile {
    task: Vec<RawTask>,
}

#[derive(Deserialize)]
struct RawTask {
    id: String,
    class: TaskClass,
    request: String,
    canonical: String,
}

pub fn expected_program(id: &str, canonical: &str, kb: &KnowledgeBase) -> Result<ScriptAst, EvalError> {
    let invalid = |reason: String| EvalError::InvalidTask { id: id.to_string(), reason };
    let ast = parse_script(canonical).map_err(|e| invalid(e.to_string()))?;
    let ast = autocorrect(&ast, kb).ast;
    validate(&ast, kb, canonical).map_err(|r| {
        let msgs: Vec<String> = r.issues.iter().map(|i| i.message.clone()).collect();
        invalid(msgs.join("; "))
    })?;
    Ok(ast)
}

pub fn parse_tasks(text: &str, path: &Path, kb: &KnowledgeBase) -> Result<Vec<TaskSpec>, EvalError> {
    let file: TaskFile = toml::from_str(text)
        .map_err(|e| EvalError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    let mut seen = HashSet::new();
    let mut tasks = Vec::with_capacity(file.task.len());
    for raw in file.task {
        if !seen.insert(raw.id.clone()) {
            return Err(EvalError::InvalidTask { id: raw.id, reason: "duplicate id".into() });
        }
        if raw.request.trim().is_empty() {
            return Err(EvalError::InvalidTask { id: raw.id, reason: "empty request".into() });
        }
        let expected = expected_program(&raw.id, &raw.canonical, kb)?;
        tasks.push(TaskSpec {
            id: raw.id,
            class: raw.class,
            request: raw.request.trim().to_string(),
            canonical: raw.canonical,
            expected,
        });
    }
    Ok(tasks)
}

pub fn load_tasks(path: &Path, kb: &KnowledgeBase) -> Result<Vec<TaskSpec>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_tasks(&text, path, kb)
}

/// The bundled 34-task suite.
pub fn bundled_tasks(kb: &KnowledgeBase) -> Vec<TaskSpec> {
    parse_tasks(include_str!("../fixtures/tasks.toml"), Path::new("tasks.toml"), kb)
        .expect("bundled task suite is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub name: String,
    pub technique: TechniqueConfig,
    pub provider: ProviderConfig,
    pub rag_mode: RagMode,
}

#[derive(Deserialize)]
struct SchemeFile {
    scheme: Vec<RawScheme>,
}

#[derive(Deserialize)]
struct RawScheme {
    name: String,
    rag_mode: RagMode,
    techniques: Vec<String>,
    provider: ProviderConfig,
}

/// Replay paths are resolved against `base_dir`.
pub fn parse_schemes(text: &str, path: &Path, base_dir: &Path) -> Result<Vec<SchemeConfig>, EvalError> {
    let file: SchemeFile = toml::from_str(text)
        .map_err(|e| EvalError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(file.scheme.len());
    for raw in file.scheme {
        let invalid = |reason: String| EvalError::InvalidScheme { name: raw.name.clone(), reason };
        if !seen.insert(raw.name.clone()) {
            return Err(invalid("duplicate name".into()));
        }
        let technique = TechniqueConfig::from_flags(&raw.techniques, raw.rag_mode).map_err(invalid)?;
        technique.validate().map_err(invalid)?;
        let mut provider = raw.provider;
        if let Some(p) = provider.replay_path.take() {
            provider.replay_path = Some(if p.is_absolute() { p } else { base_dir.join(p) });
        }
        provider.validate().map_err(invalid)?;
        out.push(SchemeConfig { name: raw.name, technique, provider, rag_mode: raw.rag_mode });
    }
    Ok(out)
}

pub fn load_schemes(path: &Path) -> Result<Vec<SchemeConfig>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_schemes(&text, path, path.parent().unwrap_or(Path::new(".")))
}

fn binding(call: &CallNode) -> &str {
    call.assign_to.as_deref().unwrap_or(ANSWER_VAR)
}

/// Index of the call that last bound `var` before `at`.
fn producer(calls: &[CallNode], at: usize, var: &str) -> Option<usize> {
    calls[..at].iter().rposition(|c| binding(c) == var)
}

/// Cells are compared as sets; everything else via normalized equality.
fn values_match(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Cell(a), Value::Cell(b)) => {
            let a: HashSet<&String> = a.iter().collect();
            let b: HashSet<&String> = b.iter().collect();
            a == b
        }
        _ => expected.normalized_eq(actual),
    }
}

fn effective<'a>(call: &'a CallNode, name: &str, kb: &'a KnowledgeBase) -> Option<&'a Value> {
    call.option(name).or_else(|| kb.option(name).map(|o| &o.default_value))
}

struct Matcher<'a> {
    expected: &'a [CallNode],
    trace: &'a [CallNode],
    kb: &'a KnowledgeBase,
}

impl Matcher<'_> {
    fn realizes(&self, ei: usize, ti: usize, assigned: &[usize]) -> bool {
        let (e, t) = (&self.expected[ei], &self.trace[ti]);
        if e.function != t.function || e.positional.len() != t.positional.len() {
            return false;
        }
        let args_ok = e.positional.iter().zip(&t.positional).all(|pair| match pair {
            (Arg::Ref(ev), Arg::Ref(tv)) => match producer(self.expected, ei, ev) {
                Some(ep) => producer(self.trace, ti, tv) == Some(assigned[ep]),
                None => false,
            },
            (Arg::Value(ev), Arg::Value(tv)) => values_match(ev, tv),
            _ => false,
        });
        args_ok
            && e.options.iter().all(|o| {
                effective(t, &o.name, self.kb).is_some_and(|v| values_match(&o.value, v))
            })
    }

    /// Explicit options on a matched call that the canonical call does not
    /// set and that differ from their registry defaults.
    fn has_extra_options(&self, ei: usize, ti: usize) -> bool {
        let (e, t) = (&self.expected[ei], &self.trace[ti]);
        t.options.iter().any(|o| {
            e.option(&o.name).is_none()
                && !self.kb.option(&o.name).is_some_and(|spec| values_match(&spec.default_value, &o.value))
        })
    }

    /// Best score over all order-preserving assignments of expected calls to
    /// trace calls (depth-first; programs are a handful of calls).
    fn best(&self, ei: usize, from: usize, assigned: &mut Vec<usize>) -> f64 {
        if ei == self.expected.len() {
            let extra_calls = self.trace.len() > assigned.len();
            let extra_opts = assigned.iter().enumerate().any(|(e, &t)| self.has_extra_options(e, t));
            return if extra_calls || extra_opts { 0.5 } else { 1.0 };
        }
        let mut best = 0.0f64;
        for ti in from..self.trace.len() {
            if self.realizes(ei, ti, assigned) {
                assigned.push(ti);
                best = best.max(self.best(ei + 1, ti + 1, assigned));
                assigned.pop();
                if best == 1.0 {
                    break;
                }
            }
        }
        best
    }
}

/// 1 when the trace realizes the canonical program exactly, 0.5 when it does
/// so with irrelevant extra calls or settings, 0 otherwise.
pub fn score_trace(trace: &[CallNode], expected: &ScriptAst, kb: &KnowledgeBase) -> f64 {
    Matcher { expected: &expected.calls, trace, kb }.best(0, 0, &mut Vec::new())
}

pub fn score_attempt(attempt: &AttemptRecord, expected: &ScriptAst, kb: &KnowledgeBase) -> f64 {
    match (&attempt.outcome, &attempt.execution) {
        (AttemptOutcome::Success, Some(exec)) if exec.is_success() => score_trace(&exec.trace, expected, kb),
        _ => 0.0,
    }
}

/// Pads the triggered scores to `n_max` by repeating the last one.
pub fn fill_untriggered(triggered: &[f64], n_max: usize) -> Result<Vec<f64>, EvalError> {
    let Some(&last) = triggered.last() else {
        return Err(EvalError::InvalidScores { got: 0, n_max });
    };
    if triggered.len() > n_max {
        return Err(EvalError::InvalidScores { got: triggered.len(), n_max });
    }
    let mut out = triggered.to_vec();
    out.resize(n_max, last);
    Ok(out)
}

/// Percentage of the maximum score, rounded half-up to two decimals. Points
/// are whole or half; the rounding is done in exact integer arithmetic.
pub fn accuracy(points_total: f64, n_tasks: usize, n_max: usize) -> f64 {
    assert!(n_tasks >= 1 && n_max >= 1, "accuracy needs at least one task and attempt");
    let denom = (n_tasks * n_max) as u64;
    let halves = (points_total * 2.0).round().max(0.0) as u64;
    // hundredths of a percent = 10000 * points / denom = 5000 * halves / denom
    let hundredths = (2 * 5000 * halves + denom) / (2 * denom);
    hundredths as f64 / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub task_id: String,
    pub class: TaskClass,
    pub attempt_scores: Vec<f64>,
    pub triggered: usize,
    pub diagnostic: Option<String>,
    pub transcript: Option<PathBuf>,
}

impl ScoreCard {
    pub fn points(&self) -> f64 {
        self.attempt_scores.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scheme: String,
    pub n_max: usize,
    pub cards: Vec<ScoreCard>,
    pub points_total: f64,
    pub accuracy_overall: f64,
    pub accuracy_by_class: BTreeMap<TaskClass, f64>,
    pub provider_failures: usize,
}

impl EvaluationReport {
    pub fn from_cards(scheme: &str, n_max: usize, cards: Vec<ScoreCard>) -> Self {
        let points_total: f64 = cards.iter().map(ScoreCard::points).sum();
        let mut accuracy_by_class = BTreeMap::new();
        for class in [TaskClass::Normal, TaskClass::Complex] {
            let of_class: Vec<&ScoreCard> = cards.iter().filter(|c| c.class == class).collect();
            if !of_class.is_empty() {
                let pts: f64 = of_class.iter().map(|c| c.points()).sum();
                accuracy_by_class.insert(class, accuracy(pts, of_class.len(), n_max));
            }
        }
        let accuracy_overall = if cards.is_empty() { 0.0 } else { accuracy(points_total, cards.len(), n_max) };
        let provider_failures = cards.iter().filter(|c| c.diagnostic.is_some()).count();
        Self {
            scheme: scheme.to_string(),
            n_max,
            cards,
            points_total,
            accuracy_overall,
            accuracy_by_class,
            provider_failures,
        }
    }
}

/// Creates one fresh LLM session per task.
pub trait ClientFactory: Sync {
    fn client_for(&self, task_id: &str) -> Result<Box<dyn LlmClient>, LlmError>;
}

/// A replay file shared by all tasks (each task gets a fresh cursor), or a
/// directory holding `<task_id>.replay` per task.
pub enum ReplayFactory {
    File(Arc<ReplayFile>),
    Dir(PathBuf),
}

impl ReplayFactory {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        if path.is_dir() {
            Ok(ReplayFactory::Dir(path.to_path_buf()))
        } else {
            Ok(ReplayFactory::File(Arc::new(ReplayFile::load(path)?)))
        }
    }
}

impl ClientFactory for ReplayFactory {
    fn client_for(&self, task_id: &str) -> Result<Box<dyn LlmClient>, LlmError> {
        let file = match self {
            ReplayFactory::File(f) => f.clone(),
            ReplayFactory::Dir(dir) => {
                let path = dir.join(format!("{task_id}.replay"));
                if !path.exists() {
                    return Err(LlmError::ReplayExhausted);
                }
                Arc::new(ReplayFile::load(&path)?)
            }
        };
        Ok(Box::new(ReplayClient::new(file)))
    }
}

pub struct HttpFactory(pub ProviderConfig);

impl ClientFactory for HttpFactory {
    fn client_for(&self, _task_id: &str) -> Result<Box<dyn LlmClient>, LlmError> {
        Ok(Box::new(HttpClient::new(&self.0)?))
    }
}

pub fn client_factory(provider: &ProviderConfig) -> Result<Box<dyn ClientFactory>, LlmError> {
    provider.validate().map_err(LlmError::InvalidRequest)?;
    match provider.kind {
        ProviderKind::Replay => {
            let path = provider.replay_path.as_deref().expect("validated replay path");
            Ok(Box::new(ReplayFactory::open(path)?))
        }
        ProviderKind::Http => Ok(Box::new(HttpFactory(provider.clone()))),
    }
}

pub struct EvalOptions<'a> {
    pub jobs: usize,
    /// Where per-session transcripts are written, if anywhere.
    pub transcript_dir: Option<&'a Path>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        Self { jobs: 1, transcript_dir: None }
    }
}

fn score_task(
    task: &TaskSpec,
    config: &TechniqueConfig,
    res: SessionResources<'_>,
    factory: &dyn ClientFactory,
    transcript_dir: Option<&Path>,
) -> ScoreCard {
    let n_max = config.n_max;
    let zero = |diagnostic: String, triggered| ScoreCard {
        task_id: task.id.clone(),
        class: task.class,
        attempt_scores: vec![0.0; n_max],
        triggered,
        diagnostic: Some(diagnostic),
        transcript: None,
    };
    let mut client = match factory.client_for(&task.id) {
        Ok(c) => c,
        Err(e) => return zero(format!("provider: {e}"), 0),
    };
    let transcript: SessionTranscript = run_session(&task.request, config, res, client.as_mut());
    let transcript_path = transcript_dir.and_then(|dir| {
        let path = dir.join(format!("{}.json", task.id));
        match transcript.write_json(&path) {
            Ok(()) => Some(path),
            Err(e) => {
                log::warn!("could not write {}: {e}", path.display());
                None
            }
        }
    });
    let provider_error = transcript.attempts.iter().find_map(|a| a.provider_error.clone());
    if let Some(err) = provider_error {
        return ScoreCard { transcript: transcript_path, ..zero(format!("provider: {err}"), transcript.attempts.len()) };
    }
    let triggered: Vec<f64> =
        transcript.attempts.iter().map(|a| score_attempt(a, &task.expected, res.kb)).collect();
    ScoreCard {
        task_id: task.id.clone(),
        class: task.class,
        attempt_scores: fill_untriggered(&triggered, n_max).expect("session makes 1..=n_max attempts"),
        triggered: triggered.len(),
        diagnostic: None,
        transcript: transcript_path,
    }
}

/// Runs every task in a fresh session. Cards come back in task order no
/// matter how many jobs run concurrently.
pub fn run_evaluation(
    tasks: &[TaskSpec],
    scheme: &SchemeConfig,
    res: SessionResources<'_>,
    factory: &dyn ClientFactory,
    opts: &EvalOptions<'_>,
) -> EvaluationReport {
    let config = &scheme.technique;
    let slots: Mutex<Vec<Option<ScoreCard>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let jobs = opts.jobs.clamp(1, tasks.len().max(1));
    let transcript_dir = opts.transcript_dir;
    if let Some(dir) = transcript_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            log::warn!("could not create {}: {e}", dir.display());
        }
    }
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let card = score_task(task, config, res, factory, transcript_dir);
                slots.lock().expect("no panics while holding the lock")[i] = Some(card);
            });
        }
    });
    let cards = slots.into_inner().expect("workers joined").into_iter().map(|c| c.expect("every task scored")).collect();
    EvaluationReport::from_cards(&scheme.name, config.n_max, cards)
}

fn fmt_score(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

/// One row per task per attempt.
pub fn report_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from("scheme,task_id,class,attempt,score\n");
    for r in reports {
        for c in &r.cards {
            for (i, s) in c.attempt_scores.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{}\n", r.scheme, c.task_id, c.class, i + 1, fmt_score(*s)));
            }
        }
    }
    out
}

fn fmt_acc(x: Option<&f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

pub fn summary_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from("scheme,overall,normal,complex\n");
    for r in reports {
        out.push_str(&format!(
            "{},{:.2},{},{}\n",
            r.scheme,
            r.accuracy_overall,
            fmt_acc(r.accuracy_by_class.get(&TaskClass::Normal)),
            fmt_acc(r.accuracy_by_class.get(&TaskClass::Complex)),
        ));
    }
    out
}

pub fn summary_table(reports: &[EvaluationReport]) -> String {
    let width = reports.iter().map(|r| r.scheme.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "scheme", "overall", "normal", "complex");
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>8.2}  {:>8}  {:>8}\n",
            r.scheme,
            r.accuracy_overall,
            fmt_acc(r.accuracy_by_class.get(&TaskClass::Normal)),
            fmt_acc(r.accuracy_by_class.get(&TaskClass::Complex)),
        ));
    }
    out
}

pub fn report_json(reports: &[EvaluationReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::bundled()
    }

    fn expected(src: &str) -> ScriptAst {
        expected_program("t", src, &kb()).unwrap()
    }

    fn score(src: &str, canonical: &str) -> f64 {
        let kb = kb();
        let ast = autocorrect(&parse_script(src).unwrap(), &kb).ast;
        score_trace(&ast.calls, &expected(canonical), &kb)
    }

    const N16: &str = "data = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250);\n\
                       model = train(data, 'LS_CLS', 'LS_CLS.cvNumFold', 5, 'LS_CLS.fixCV', 1);";

    #[test]
    fn exact_realization_scores_one() {
        assert_eq!(score(N16, N16), 1.0);
        let renamed = "d = generate_data('case39','num.testSample',250,'num.trainSample',500); \
                       train(d,'LS_CLS','LS_CLS.fixCV',true,'LS_CLS.cvNumFold',5);";
        assert_eq!(score(renamed, N16), 1.0);
    }

    #[test]
    fn default_valued_extras_are_free() {
        let src = "data = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250, 'data.seed', 88);\n\
                   model = train(data, 'LS_CLS', 'LS_CLS.cvNumFold', 5, 'LS_CLS.fixCV', 1);";
        assert_eq!(score(src, N16), 1.0);
    }

    #[test]
    fn irrelevant_settings_score_half() {
        let canonical = "d = generate_data('case14'); rank(d, {'DLPF_C','PTDF'});";
        assert_eq!(score("d = generate_data('case14'); rank(d, {'PTDF','DLPF_C'});", canonical), 1.0);
        assert_eq!(score("d = generate_data('case14'); rank(d, {'DLPF_C','PTDF'}, 'plot.style', 'light');", canonical), 0.5);
        assert_eq!(
            score("d = generate_data('case14'); e = generate_data('case9'); rank(d, {'DLPF_C','PTDF'});", canonical),
            0.5
        );
    }

    #[test]
    fn mistakes_score_zero() {
        let missing = "data = generate_data('case39', 'num.trainSample', 500);\n\
                       model = train(data, 'LS_CLS', 'LS_CLS.cvNumFold', 5, 'LS_CLS.fixCV', 1);";
        assert_eq!(score(missing, N16), 0.0);
        let rebound = "data = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250);\n\
                       data = normalize_data(data);\n\
                       model = train(data, 'LS_CLS', 'LS_CLS.cvNumFold', 5, 'LS_CLS.fixCV', 1);";
        assert_eq!(score(rebound, N16), 0.0);
        let swapped = "model = train(data, 'LS_CLS');";
        assert_eq!(score(swapped, N16), 0.0);
    }

    #[test]
    fn later_duplicate_is_matched() {
        let canonical = "d = generate_data('case9'); train(d, 'DC');";
        let src = "d = generate_data('case9'); d2 = generate_data('case9'); train(d2, 'DC');";
        assert_eq!(score(src, canonical), 0.5);
    }

    #[test]
    fn fill_forward() {
        assert_eq!(fill_untriggered(&[0.0, 1.0], 3).unwrap(), vec![0.0, 1.0, 1.0]);
        assert_eq!(fill_untriggered(&[1.0], 3).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(fill_untriggered(&[0.0, 0.0, 0.0], 3).unwrap(), vec![0.0; 3]);
        assert!(fill_untriggered(&[], 3).is_err());
        assert!(fill_untriggered(&[0.0; 4], 3).is_err());
    }

    #[test]
    fn accuracy_rounding() {
        assert_eq!(accuracy(0.0, 34, 3), 0.0);
        assert_eq!(accuracy(102.0, 34, 3), 100.0);
        assert_eq!(accuracy(101.0, 34, 3), 99.02);
        assert_eq!(accuracy(1.0, 8, 1), 12.5);
        // 1/16 = 6.25 exactly; 1/32 = 3.125 rounds half-up
        assert_eq!(accuracy(1.0, 32, 1), 3.13);
    }

    #[test]
    fn report_self_consistency() {
        let card = |id: &str, class, s: [f64; 3]| ScoreCard {
            task_id: id.into(),
            class,
            attempt_scores: s.to_vec(),
            triggered: 1,
            diagnostic: None,
            transcript: None,
        };
        let r = EvaluationReport::from_cards(
            "x",
            3,
            vec![card("a", TaskClass::Normal, [0.0, 1.0, 1.0]), card("b", TaskClass::Complex, [0.5, 0.5, 0.5])],
        );
        let csv = report_csv(std::slice::from_ref(&r));
        assert_eq!(csv.lines().count(), 2 * 3 + 1);
        let pts: f64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
        assert_eq!(accuracy(pts, 2, 3), r.accuracy_overall);
        let summary = summary_csv(&[r]);
        assert!(summary.starts_with("scheme,overall,normal,complex\n"));
        assert!(summary.contains("x,58.33,66.67,50.00"));
    }

    #[test]
    fn scheme_parsing() {
        let text = r#"
[[scheme]]
name = "a"
rag_mode = "standard"
techniques = ["query_planning", "manual_in_kb"]
provider = { kind = "replay", replay_path = "r.replay" }
"#;
        let err = parse_schemes(text, Path::new("s.toml"), Path::new("/base")).unwrap_err();
        assert!(matches!(err, EvalError::InvalidScheme { .. }));
        let ok = text.replace("\"query_planning\", ", "");
        let s = parse_schemes(&ok, Path::new("s.toml"), Path::new("/base")).unwrap();
        assert_eq!(s[0].provider.replay_path.as_deref(), Some(Path::new("/base/r.replay")));
        assert!(s[0].technique.manual_in_kb && !s[0].technique.feedback_loop);
    }
}
