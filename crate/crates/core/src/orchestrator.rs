//! One end-to-end session: plan, retrieve, prompt, generate, check, execute,
//! and repair through feedback prompts until success or the attempt budget
//! is spent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::executor::{execute, ExecutionOutcome};
use crate::knowledge_base::KnowledgeBase;
use crate::llm::{ChatMessage, LlmClient};
use crate::prompt::{
    assemble_feedback_prompt, assemble_system_prompt, assemble_user_prompt, RagMode, TechniqueConfig,
};
use crate::query_planner::{self, QueryPlan};
use crate::retrieval::{retrieve_planned, ContextBundle, Embedder, VectorIndex};
use crate::script::{extract_code, parse_script};
use crate::validation::{
    autocorrect, validate, ErrorReport, Fix, IssueKind, Location, Stage, ValidationIssue, DEGRADED_MESSAGE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Success,
    ParseFail,
    ValidateFail,
    ExecuteFail,
    NoCode,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_no: usize,
    pub messages: Vec<ChatMessage>,
    pub response: String,
    pub code: String,
    pub fixes_applied: Vec<Fix>,
    pub outcome: AttemptOutcome,
    pub report: Option<ErrorReport>,
    pub execution: Option<ExecutionOutcome>,
    pub provider_error: Option<String>,
}

impl AttemptRecord {
    pub fn empty(attempt_no: usize) -> Self {
        Self {
            attempt_no,
            messages: Vec::new(),
            response: String::new(),
            code: String::new(),
            fixes_applied: Vec::new(),
            outcome: AttemptOutcome::NoCode,
            report: None,
            execution: None,
            provider_error: None,
        }
    }

    /// One-line summary for the chat-history part of a feedback prompt.
    pub fn digest(&self, detailed: bool) -> String {
        match (self.outcome, &self.report) {
            (AttemptOutcome::Success, _) => "succeeded".to_string(),
            (AttemptOutcome::ProviderError, _) => "no response from the model".to_string(),
            (_, Some(report)) if detailed => report.digest(),
            _ => DEGRADED_MESSAGE.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Success,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub request: String,
    pub config: TechniqueConfig,
    pub plan: QueryPlan,
    pub planner_prompt: Option<String>,
    pub planner_response: Option<String>,
    pub context: ContextBundle,
    pub system_prompt: String,
    pub user_prompt: String,
    pub attempts: Vec<AttemptRecord>,
    pub final_status: FinalStatus,
    pub llm_calls: usize,
    pub diagnostics: Vec<String>,
}

impl SessionTranscript {
    pub fn final_attempt(&self) -> &AttemptRecord {
        self.attempts.last().expect("a session has at least one attempt")
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

/// Read-only inputs shared by every session.
#[derive(Clone, Copy)]
pub struct SessionResources<'a> {
    pub kb: &'a KnowledgeBase,
    pub index: &'a VectorIndex,
    pub embedder: &'a dyn Embedder,
}

fn no_code_report(response: &str) -> ErrorReport {
    ErrorReport {
        problematic_code: response.to_string(),
        issues: vec![ValidationIssue {
            kind: IssueKind::NoCode,
            location: Location::default(),
            message: "The response contains no code block.".to_string(),
            hint: "Reply with exactly one fenced code block holding the complete script.".to_string(),
            suggestion: None,
        }],
        stage: Stage::Parse,
    }
}

/// Checks and runs one response; fills code, fixes, outcome, report, execution.
fn evaluate_response(record: &mut AttemptRecord, config: &TechniqueConfig, kb: &KnowledgeBase) {
    let code = match extract_code(&record.response) {
        Ok(code) => code,
        Err(_) => {
            record.outcome = AttemptOutcome::NoCode;
            record.report = Some(no_code_report(&record.response));
            return;
        }
    };
    record.code = code.clone();
    let mut ast = match parse_script(&code) {
        Ok(ast) => ast,
        Err(e) => {
            record.outcome = AttemptOutcome::ParseFail;
            record.report = Some(ErrorReport {
                problematic_code: code,
                issues: vec![ValidationIssue {
                    kind: IssueKind::SyntaxError,
                    location: Location::default(),
                    message: e.to_string(),
                    hint: "Write one call per statement, end statements with ';', and quote strings with single quotes.".to_string(),
                    suggestion: None,
                }],
                stage: Stage::Parse,
            });
            return;
        }
    };
    if config.syntax_checking {
        let corrected = autocorrect(&ast, kb);
        record.fixes_applied = corrected.fixes;
        ast = corrected.ast;
        if let Err(report) = validate(&ast, kb, &code) {
            record.outcome = AttemptOutcome::ValidateFail;
            record.report = Some(report);
            return;
        }
    }
    let outcome = execute(&ast, kb);
    if let Some(report) = &outcome.error {
        record.outcome = AttemptOutcome::ExecuteFail;
        record.report = Some(report.clone());
    } else {
        record.outcome = AttemptOutcome::Success;
    }
    record.execution = Some(outcome);
}

pub fn run_session(
    request: &str,
    config: &TechniqueConfig,
    res: SessionResources<'_>,
    llm: &mut dyn LlmClient,
) -> SessionTranscript {
    let mut diagnostics = Vec::new();
    let planned = query_planner::plan(request, llm, config);
    if let Some(d) = &planned.diagnostic {
        diagnostics.push(format!("planner: {d}"));
    }
    let mut llm_calls = planned.llm_calls;

    let context = if config.rag_mode == RagMode::None {
        ContextBundle::default()
    } else {
        let index = res.index.restricted_to(&config.kb_sources());
        match retrieve_planned(&index, res.embedder, &planned.plan, config.top_k) {
            Ok(bundle) => bundle,
            Err(e) => {
                diagnostics.push(format!("retrieval: {e}"));
                ContextBundle::default()
            }
        }
    };

    let system_prompt = assemble_system_prompt(config, res.kb);
    let user_prompt = assemble_user_prompt(request, &context, res.kb, config);
    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut final_status = FinalStatus::Exhausted;

    for attempt_no in 1..=config.effective_attempts().max(1) {
        let mut messages = vec![ChatMessage::system(&system_prompt), ChatMessage::user(&user_prompt)];
        if let Some(prev) = attempts.last() {
            let report = prev.report.as_ref().expect("failed attempts carry a report");
            messages.push(ChatMessage::user(assemble_feedback_prompt(report, &attempts, config)));
        }
        let mut record = AttemptRecord { messages, ..AttemptRecord::empty(attempt_no) };
        llm_calls += 1;
        match llm.complete(&record.messages) {
            Ok(response) => {
                record.response = response;
                evaluate_response(&mut record, config, res.kb);
            }
            Err(e) => {
                record.outcome = AttemptOutcome::ProviderError;
                record.provider_error = Some(e.to_string());
                diagnostics.push(format!("attempt {attempt_no}: {e}"));
                attempts.push(record);
                break;
            }
        }
        let done = record.outcome == AttemptOutcome::Success;
        attempts.push(record);
        if done {
            final_status = FinalStatus::Success;
            break;
        }
    }

    SessionTranscript {
        request: request.to_string(),
        config: config.clone(),
        plan: planned.plan,
        planner_prompt: planned.prompt,
        planner_response: planned.response,
        context,
        system_prompt,
        user_prompt,
        attempts,
        final_status,
        llm_calls,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ReplayClient, ReplayFile};
    use crate::retrieval::{build_index, TrigramEmbedder};

    const PLAN: &str = "SUBREQUEST: Generate data for case9 ||| KEYWORD: generate_data";

    fn session(config: &TechniqueConfig, replay: &str) -> SessionTranscript {
        let kb = KnowledgeBase::bundled();
        let embedder = TrigramEmbedder::default();
        let index = build_index(&kb.chunks, &embedder).unwrap();
        let res = SessionResources { kb: &kb, index: &index, embedder: &embedder };
        let file = ReplayFile::parse(replay).unwrap();
        run_session("Generate data for case9.", config, res, &mut ReplayClient::new(file.into()))
    }

    fn fenced(code: &str) -> String {
        format!("```matlab\n{code}\n```")
    }

    fn replay(responses: &[&str]) -> String {
        responses.iter().map(|r| format!("--- KEY * ---\n{r}\n")).collect()
    }

    #[test]
    fn first_try_success() {
        let t = session(&TechniqueConfig::default(), &replay(&[PLAN, &fenced("data = generate_data('case9');")]));
        assert_eq!(t.attempts.len(), 1);
        assert_eq!(t.final_status, FinalStatus::Success);
        assert_eq!(t.llm_calls, 2);
        assert_eq!(t.plan.sub_queries()[0].keyword, "generate_data");
        assert!(t.final_attempt().report.is_none());
    }

    #[test]
    fn repaired_on_second_attempt() {
        let r = replay(&[
            PLAN,
            &fenced("data = generate_data('case9', 'num.trainingSamples', 10);"),
            &fenced("data = generate_data('case9', 'num.trainSample', 10);"),
        ]);
        let t = session(&TechniqueConfig::default(), &r);
        assert_eq!(t.attempts.len(), 2);
        assert_eq!(t.attempts[0].outcome, AttemptOutcome::ValidateFail);
        assert_eq!(t.final_status, FinalStatus::Success);
        let feedback = &t.attempts[1].messages[2].content;
        assert!(feedback.contains("num.trainingSamples"));
        assert!(feedback.contains("Attempt 1: "));
    }

    #[test]
    fn exhausted_after_three() {
        let bad = fenced("data = generate_data('case99');");
        let t = session(&TechniqueConfig::default(), &replay(&[PLAN, &bad, &bad, &bad]));
        assert_eq!(t.attempts.len(), 3);
        assert_eq!(t.final_status, FinalStatus::Exhausted);
        assert!(t.llm_calls <= 4);
        let last = &t.attempts[2].messages[2].content;
        assert_eq!(last.lines().filter(|l| l.starts_with("Attempt ")).count(), 2);
    }

    #[test]
    fn feedback_off_is_truncation() {
        let r = replay(&[PLAN, "I cannot write code.", &fenced("data = generate_data('case9');")]);
        let full = session(&TechniqueConfig::default(), &r);
        let cfg = TechniqueConfig { feedback_loop: false, ..Default::default() };
        let one = session(&cfg, &r);
        assert_eq!(one.attempts.len(), 1);
        assert_eq!(one.attempts[0], full.attempts[0]);
        assert_eq!(one.attempts[0].outcome, AttemptOutcome::NoCode);
        assert_eq!(one.context, full.context);
    }

    #[test]
    fn provider_failure_ends_session() {
        let t = session(&TechniqueConfig::default(), &replay(&[PLAN]));
        assert_eq!(t.final_status, FinalStatus::Exhausted);
        assert_eq!(t.attempts.len(), 1);
        assert_eq!(t.attempts[0].outcome, AttemptOutcome::ProviderError);
        assert!(t.attempts[0].provider_error.is_some());
    }

    #[test]
    fn no_rag_means_no_context() {
        let cfg = TechniqueConfig { rag_mode: RagMode::None, query_planning: false, ..Default::default() };
        let t = session(&cfg, &replay(&[&fenced("data = generate_data('case9');")]));
        assert!(t.context.groups.is_empty());
        assert_eq!(t.llm_calls, 1);
        assert!(t.user_prompt.contains("(no retrieved context)"));
    }
}
