//! Python bindings: knowledge base access, script checking and scoring, and
//! replay-backed sessions. Structured results come back as plain dicts and lists.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use simloop_core::evaluation::{self, score_trace};
use simloop_core::executor;
use simloop_core::knowledge_base::{self, KnowledgeBase};
use simloop_core::llm::{ReplayClient, ReplayFile};
use simloop_core::orchestrator::{run_session as core_run_session, SessionResources};
use simloop_core::prompt::{RagMode, TechniqueConfig, TECHNIQUE_FLAGS};
use simloop_core::retrieval::{build_index, TrigramEmbedder, VectorIndex};
use simloop_core::script::{self, ScriptAst};
use simloop_core::validation;

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse(code: &str) -> PyResult<ScriptAst> {
    script::parse_script(code).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "KnowledgeBase", module = "simloop", frozen)]
struct PyKnowledgeBase {
    kb: Arc<KnowledgeBase>,
    index: Arc<VectorIndex>,
}

impl PyKnowledgeBase {
    fn wrap(kb: KnowledgeBase) -> PyResult<Self> {
        let index = build_index(&kb.chunks, &TrigramEmbedder::default())
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { kb: Arc::new(kb), index: Arc::new(index) })
    }
}

#[pymethods]
impl PyKnowledgeBase {
    /// The knowledge base shipped with the library.
    #[staticmethod]
    fn bundled() -> PyResult<Self> {
        Self::wrap(KnowledgeBase::bundled())
    }

    /// Builds from a directory of knowledge sources.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let kb = KnowledgeBase::load_dir(&path).map_err(|e| match e {
            knowledge_base::KbError::Io { .. } => PyIOError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        })?;
        Self::wrap(kb)
    }

    #[getter]
    fn functions(&self) -> Vec<String> {
        self.kb.function_names().map(String::from).collect()
    }

    #[getter]
    fn options(&self) -> Vec<String> {
        self.kb.option_names().map(String::from).collect()
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.kb.method_names().map(String::from).collect()
    }

    #[getter]
    fn cases(&self) -> Vec<String> {
        self.kb.case_names().map(String::from).collect()
    }

    fn __len__(&self) -> usize {
        self.kb.chunks.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "KnowledgeBase(functions={}, options={}, chunks={})",
            self.kb.functions.len(),
            self.kb.options.len(),
            self.kb.chunks.len()
        )
    }
}

/// Parses a script into a list of call dicts.
#[pyfunction]
fn parse_script<'py>(py: Python<'py>, code: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &parse(code)?.calls)
}

/// Canonical text of a script.
#[pyfunction]
fn format_script(code: &str) -> PyResult<String> {
    Ok(parse(code)?.to_string())
}

/// Pulls the first fenced code block (or bare script) out of a reply.
#[pyfunction]
fn extract_code(response: &str) -> PyResult<String> {
    script::extract_code(response).map_err(|_| PyValueError::new_err("no code found"))
}

/// Returns the corrected script text and the fixes applied.
#[pyfunction]
fn autocorrect<'py>(py: Python<'py>, kb: &PyKnowledgeBase, code: &str) -> PyResult<(String, Bound<'py, PyAny>)> {
    let corrected = validation::autocorrect(&parse(code)?, &kb.kb);
    Ok((corrected.ast.to_string(), to_py(py, &corrected.fixes)?))
}

/// Every issue found in the script; an empty list means it is valid.
#[pyfunction]
fn validate<'py>(py: Python<'py>, kb: &PyKnowledgeBase, code: &str) -> PyResult<Bound<'py, PyAny>> {
    let issues = match validation::validate(&parse(code)?, &kb.kb, code) {
        Ok(()) => Vec::new(),
        Err(report) => report.issues,
    };
    to_py(py, &issues)
}

/// Runs the script against the mock toolbox.
#[pyfunction]
fn execute<'py>(py: Python<'py>, kb: &PyKnowledgeBase, code: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &executor::execute(&parse(code)?, &kb.kb))
}

/// Executes `code` and scores its trace against `expected`: 1, 0.5 or 0.
#[pyfunction]
fn score(kb: &PyKnowledgeBase, code: &str, expected: &str) -> PyResult<f64> {
    let expected = parse(expected)?;
    let Ok(ast) = script::parse_script(code) else { return Ok(0.0) };
    let outcome = executor::execute(&ast, &kb.kb);
    if !outcome.is_success() {
        return Ok(0.0);
    }
    Ok(score_trace(&outcome.trace, &expected, &kb.kb))
}

/// Accuracy in percent, rounded half up to hundredths.
#[pyfunction]
#[pyo3(signature = (points, n_tasks, n_max = 3))]
fn accuracy(points: f64, n_tasks: usize, n_max: usize) -> f64 {
    evaluation::accuracy(points, n_tasks, n_max)
}

/// Pads triggered attempt scores to `n_max` with the last score.
#[pyfunction]
#[pyo3(signature = (triggered, n_max = 3))]
fn fill_untriggered(triggered: Vec<f64>, n_max: usize) -> PyResult<Vec<f64>> {
    evaluation::fill_untriggered(&triggered, n_max).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The bundled task suite as dicts with id, class, request and canonical.
#[pyfunction]
fn tasks<'py>(py: Python<'py>, kb: &PyKnowledgeBase) -> PyResult<Bound<'py, PyAny>> {
    let list: Vec<serde_json::Value> = evaluation::bundled_tasks(&kb.kb)
        .into_iter()
        .map(|t| {
            serde_json::json!({
                "id": t.id,
                "class": t.class.as_str(),
                "request": t.request,
                "canonical": t.canonical,
            })
        })
        .collect();
    to_py(py, &list)
}

/// Answers one request with responses taken from a replay file and returns
/// the session transcript. All techniques are enabled unless listed.
#[pyfunction]
#[pyo3(signature = (kb, request, replay, techniques = None, rag_mode = "enhanced", n_max = 3, top_k = 4))]
#[allow(clippy::too_many_arguments)]
fn run_session<'py>(
    py: Python<'py>,
    kb: &PyKnowledgeBase,
    request: &str,
    replay: PathBuf,
    techniques: Option<Vec<String>>,
    rag_mode: &str,
    n_max: usize,
    top_k: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: RagMode = serde_json::from_value(serde_json::Value::from(rag_mode))
        .map_err(|_| PyValueError::new_err(format!("unknown rag mode `{rag_mode}`")))?;
    let flags = techniques.unwrap_or_else(|| TECHNIQUE_FLAGS.iter().map(|s| s.to_string()).collect());
    let mut config = TechniqueConfig::from_flags(&flags, mode).map_err(PyValueError::new_err)?;
    config.n_max = n_max;
    config.top_k = top_k;
    config.validate().map_err(PyValueError::new_err)?;
    let file = ReplayFile::load(&replay).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let mut client = ReplayClient::new(Arc::new(file));
    let embedder = TrigramEmbedder::default();
    let res = SessionResources { kb: &kb.kb, index: &kb.index, embedder: &embedder };
    let transcript = py.detach(|| core_run_session(request, &config, res, &mut client));
    to_py(py, &transcript)
}

#[pymodule]
fn simloop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnowledgeBase>()?;
    m.add_function(wrap_pyfunction!(parse_script, m)?)?;
    m.add_function(wrap_pyfunction!(format_script, m)?)?;
    m.add_function(wrap_pyfunction!(extract_code, m)?)?;
    m.add_function(wrap_pyfunction!(autocorrect, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(fill_untriggered, m)?)?;
    m.add_function(wrap_pyfunction!(tasks, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    Ok(())
}
