//! Decomposes a request into keyword-mapped sub-requests with one LLM call.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatMessage, LlmClient};
use crate::prompt::TechniqueConfig;

const PLANNER_TEMPLATE: &str = include_str!("../templates/planner.txt");
const SUBREQUEST_MARKER: &str = "SUBREQUEST:";
const KEYWORD_MARKER: &str = "KEYWORD:";
const FIELD_SEPARATOR: &str = "|||";

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("request must not be empty")]
    EmptyRequest,
    #[error("sub-request text must not be empty")]
    EmptySubRequest,
    #[error("keyword must not contain a newline")]
    MultilineKeyword,
    #[error("no SUBREQUEST lines in planner response")]
    NoPlanLines,
    #[error("a plan needs at least one sub-query")]
    EmptyPlan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuery {
    pub sub_request_text: String,
    pub keyword: String,
}

impl SubQuery {
    pub fn new(text: &str, keyword: &str) -> Result<Self, PlanError> {
        let text = text.trim();
        let keyword = keyword.trim();
        if text.is_empty() {
            return Err(PlanError::EmptySubRequest);
        }
        if keyword.contains('\n') {
            return Err(PlanError::MultilineKeyword);
        }
        Ok(Self { sub_request_text: text.to_string(), keyword: keyword.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    sub_queries: Vec<SubQuery>,
    degenerate: bool,
}

impl QueryPlan {
    pub fn planned(sub_queries: Vec<SubQuery>) -> Result<Self, PlanError> {
        if sub_queries.is_empty() {
            return Err(PlanError::EmptyPlan);
        }
        Ok(Self { sub_queries, degenerate: false })
    }

    /// The whole request as one sub-query with an empty keyword (standard RAG).
    pub fn degenerate(request: &str) -> Self {
        let text = if request.trim().is_empty() { "(empty request)" } else { request.trim() };
        Self {
            sub_queries: vec![SubQuery { sub_request_text: text.to_string(), keyword: String::new() }],
            degenerate: true,
        }
    }

    pub fn sub_queries(&self) -> &[SubQuery] {
        &self.sub_queries
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

pub fn build_planner_prompt(request: &str) -> Result<String, PlanError> {
    if request.trim().is_empty() {
        return Err(PlanError::EmptyRequest);
    }
    let escaped = request.replace(FIELD_SEPARATOR, "\\|\\|\\|");
    Ok(PLANNER_TEMPLATE.replace("{{request}}", &escaped))
}

fn parse_plan_line(line: &str) -> Option<SubQuery> {
    let line = line.trim();
    let line = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .unwrap_or(line)
        .trim_start();
    let rest = line.strip_prefix(SUBREQUEST_MARKER)?;
    let (text, tail) = rest.split_once(FIELD_SEPARATOR)?;
    let keyword = tail.trim_start().strip_prefix(KEYWORD_MARKER)?;
    SubQuery::new(text, keyword).ok()
}

pub fn parse_plan(llm_response: &str) -> Result<QueryPlan, PlanError> {
    let subs: Vec<SubQuery> = llm_response.lines().filter_map(parse_plan_line).collect();
    if subs.is_empty() {
        return Err(PlanError::NoPlanLines);
    }
    QueryPlan::planned(subs)
}

/// The plan plus what happened while producing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan: QueryPlan,
    pub prompt: Option<String>,
    pub response: Option<String>,
    pub diagnostic: Option<String>,
    pub llm_calls: usize,
}

/// Never fails: any planner problem falls back to the degenerate plan.
pub fn plan(request: &str, llm: &mut dyn LlmClient, config: &TechniqueConfig) -> PlanOutcome {
    let fallback = |diagnostic: Option<String>, prompt, response, llm_calls| PlanOutcome {
        plan: QueryPlan::degenerate(request),
        prompt,
        response,
        diagnostic,
        llm_calls,
    };
    if !config.planning_active() {
        return fallback(None, None, None, 0);
    }
    let prompt = match build_planner_prompt(request) {
        Ok(p) => p,
        Err(e) => return fallback(Some(e.to_string()), None, None, 0),
    };
    let messages = [ChatMessage::user(prompt.clone())];
    match llm.complete(&messages) {
        Ok(response) => match parse_plan(&response) {
            Ok(plan) => PlanOutcome {
                plan,
                prompt: Some(prompt),
                response: Some(response),
                diagnostic: None,
                llm_calls: 1,
            },
            Err(e) => {
                log::warn!("query planning fell back to standard retrieval: {e}");
                fallback(Some(e.to_string()), Some(prompt), Some(response), 1)
            }
        },
        Err(e) => {
            log::warn!("query planning provider error: {e}");
            fallback(Some(e.to_string()), Some(prompt), None, 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmError, ReplayClient, ReplayFile};

    const TWO_LINES: &str = "SUBREQUEST: Generate data for 'case39' with 500 training and 250 testing samples ||| KEYWORD: generate_data\nSUBREQUEST: Train a model using LS_CLS with 5 cross-validation folds ||| KEYWORD: LS_CLS";

    #[test]
    fn prompt_contract() {
        let p = build_planner_prompt("Generate data for 'case9'").unwrap();
        assert!(p.contains("SUBREQUEST:"));
        assert!(p.contains("Generate data for 'case9'"));
        let p = build_planner_prompt("a ||| b").unwrap();
        assert!(p.contains("a \\|\\|\\| b"));
        assert_eq!(build_planner_prompt("  "), Err(PlanError::EmptyRequest));
    }

    #[test]
    fn parses_lines_in_order() {
        let plan = parse_plan(TWO_LINES).unwrap();
        assert_eq!(plan.sub_queries().len(), 2);
        assert_eq!(plan.sub_queries()[0].keyword, "generate_data");
        assert_eq!(plan.sub_queries()[1].keyword, "LS_CLS");
        assert!(!plan.is_degenerate());
    }

    #[test]
    fn ignores_chatter() {
        let r = "Sure! Here is the plan:\nSUBREQUEST: Rank methods ||| KEYWORD: rank\nHope this helps.";
        assert_eq!(parse_plan(r).unwrap().sub_queries().len(), 1);
        assert_eq!(parse_plan("nothing useful"), Err(PlanError::NoPlanLines));
    }

    struct Failing;
    impl LlmClient for Failing {
        fn complete(&mut self, _: &[ChatMessage]) -> Result<String, LlmError> {
            Err(LlmError::Provider { transient: false, detail: "down".into() })
        }
    }

    #[test]
    fn plan_modes() {
        let mut cfg = TechniqueConfig { query_planning: false, ..Default::default() };
        let out = plan("do things", &mut Failing, &cfg);
        assert!(out.plan.is_degenerate());
        assert_eq!(out.llm_calls, 0);

        cfg.query_planning = true;
        let file = ReplayFile::parse(&format!("--- KEY * ---\n{TWO_LINES}\n")).unwrap();
        let out = plan("do things", &mut ReplayClient::new(file.into()), &cfg);
        assert_eq!(out.plan.sub_queries().len(), 2);
        assert_eq!(out.llm_calls, 1);

        let out = plan("do things", &mut Failing, &cfg);
        assert!(out.plan.is_degenerate());
        assert_eq!(out.plan.sub_queries()[0].sub_request_text, "do things");
        assert!(out.diagnostic.is_some());
    }
}
