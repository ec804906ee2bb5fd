//! Prompt assembly: system (role) prompt, user prompt with retrieved context,
//! and the feedback prompt sent after a failed attempt. Every section is gated
//! by a technique flag and carries a `### NAME` marker.

use std::collections::HashMap;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::knowledge_base::{ChunkSource, KnowledgeBase};
use crate::orchestrator::AttemptRecord;
use crate::retrieval::{ContextBundle, MatchKind};
use crate::validation::ErrorReport;

pub const DEFAULT_CONTEXT_BUDGET: usize = 12_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RagMode {
    /// Query-planned, keyword-routed retrieval.
    Enhanced,
    /// Whole-request retrieval.
    Standard,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TechniqueConfig {
    pub role_prompt: bool,
    pub chain_of_thought: bool,
    pub few_shot_examples: bool,
    pub syntax_in_role: bool,
    pub query_planning: bool,
    pub rag_friendly_docs: bool,
    pub manual_in_kb: bool,
    pub syntax_checking: bool,
    pub error_reporting: bool,
    pub feedback_loop: bool,
    pub rag_mode: RagMode,
    pub n_max: usize,
    pub top_k: usize,
    pub context_budget: usize,
    pub few_shot_count: usize,
}

impl Default for TechniqueConfig {
    fn default() -> Self {
        Self {
            role_prompt: true,
            chain_of_thought: true,
            few_shot_examples: true,
            syntax_in_role: true,
            query_planning: true,
            rag_friendly_docs: true,
            manual_in_kb: true,
            syntax_checking: true,
            error_reporting: true,
            feedback_loop: true,
            rag_mode: RagMode::Enhanced,
            n_max: 3,
            top_k: 4,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            few_shot_count: 3,
        }
    }
}

pub const TECHNIQUE_FLAGS: [&str; 10] = [
    "role_prompt",
    "chain_of_thought",
    "few_shot_examples",
    "syntax_in_role",
    "query_planning",
    "rag_friendly_docs",
    "manual_in_kb",
    "syntax_checking",
    "error_reporting",
    "feedback_loop",
];

impl TechniqueConfig {
    /// All flags off except the named ones.
    pub fn from_flags<S: AsRef<str>>(flags: &[S], rag_mode: RagMode) -> Result<Self, String> {
        let mut cfg = TechniqueConfig {
            rag_mode,
            ..TechniqueConfig::default()
        };
        for name in TECHNIQUE_FLAGS {
            *cfg.flag_mut(name).expect("known flag") = false;
        }
        for f in flags {
            let slot = cfg
                .flag_mut(f.as_ref())
                .ok_or_else(|| format!("unknown technique `{}`", f.as_ref()))?;
            *slot = true;
        }
        Ok(cfg)
    }

    fn flag_mut(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "role_prompt" => &mut self.role_prompt,
            "chain_of_thought" => &mut self.chain_of_thought,
            "few_shot_examples" => &mut self.few_shot_examples,
            "syntax_in_role" => &mut self.syntax_in_role,
            "query_planning" => &mut self.query_planning,
            "rag_friendly_docs" => &mut self.rag_friendly_docs,
            "manual_in_kb" => &mut self.manual_in_kb,
            "syntax_checking" => &mut self.syntax_checking,
            "error_reporting" => &mut self.error_reporting,
            "feedback_loop" => &mut self.feedback_loop,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_max == 0 {
            return Err("n_max must be at least 1".into());
        }
        if self.top_k == 0 {
            return Err("top_k must be at least 1".into());
        }
        if self.rag_mode != RagMode::None && !self.rag_friendly_docs && !self.manual_in_kb {
            return Err("retrieval needs rag_friendly_docs or manual_in_kb".into());
        }
        if self.rag_mode == RagMode::Standard && self.query_planning {
            return Err("standard retrieval cannot use query planning".into());
        }
        Ok(())
    }

    pub fn planning_active(&self) -> bool {
        self.query_planning && self.rag_mode == RagMode::Enhanced
    }

    pub fn effective_attempts(&self) -> usize {
        if self.feedback_loop {
            self.n_max
        } else {
            1
        }
    }

    pub fn kb_sources(&self) -> Vec<ChunkSource> {
        let mut s = Vec::new();
        if self.rag_friendly_docs {
            s.extend([ChunkSource::OptionsDoc, ChunkSource::ExamplesDoc]);
        }
        if self.manual_in_kb {
            s.push(ChunkSource::Manual);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub feedback_text: Option<String>,
}

/// Sections of a template file, introduced by `@@name` lines.
fn parse_sections(text: &str) -> HashMap<String, String> {
    let mut out = HashMap::new();
    let mut name: Option<String> = None;
    let mut body: Vec<&str> = Vec::new();
    for line in text.lines() {
        if let Some(n) = line.strip_prefix("@@") {
            if let Some(prev) = name.take() {
                out.insert(prev, body.join("\n").trim_end().to_string());
            }
            name = Some(n.trim().to_string());
            body.clear();
        } else {
            body.push(line);
        }
    }
    if let Some(prev) = name {
        out.insert(prev, body.join("\n").trim_end().to_string());
    }
    out
}

struct Templates {
    system: HashMap<String, String>,
    user: HashMap<String, String>,
    feedback: HashMap<String, String>,
}

static TEMPLATES: LazyLock<Templates> = LazyLock::new(|| Templates {
    system: parse_sections(include_str!("../templates/system.txt")),
    user: parse_sections(include_str!("../templates/user.txt")),
    feedback: parse_sections(include_str!("../templates/feedback.txt")),
});

fn section<'a>(map: &'a HashMap<String, String>, name: &str) -> &'a str {
    map.get(name).map(String::as_str).unwrap_or_else(|| panic!("missing template section {name}"))
}

pub const OUTPUT_CONTRACT: &str = "exactly one fenced code block";

pub fn assemble_system_prompt(config: &TechniqueConfig, kb: &KnowledgeBase) -> String {
    let t = &TEMPLATES.system;
    let mut parts: Vec<String> = Vec::new();
    if config.role_prompt {
        parts.push(section(t, "role").to_string());
        parts.push(section(t, "steps").to_string());
    } else {
        parts.push(section(t, "minimal_role").to_string());
    }
    if config.syntax_in_role {
        let functions: Vec<String> = kb
            .functions
            .values()
            .map(|f| {
                let opts: Vec<&str> = f.accepted_options.iter().map(String::as_str).collect();
                format!("- {} : {} Options: {}", f.signature(), f.description, opts.join(", "))
            })
            .collect();
        let cases: Vec<&str> = kb.case_names().collect();
        let methods: Vec<String> =
            kb.methods.iter().map(|m| format!("{} ({})", m.name, m.description)).collect();
        parts.push(
            section(t, "syntax")
                .replace("{{functions}}", &functions.join("\n"))
                .replace("{{cases}}", &cases.join(", "))
                .replace("{{methods}}", &methods.join(", ")),
        );
    }
    if config.few_shot_examples && !kb.examples.is_empty() {
        let shots: Vec<String> = kb
            .examples
            .iter()
            .take(config.few_shot_count)
            .map(|e| format!("Request: {}\n```\n{}\n```", e.description, e.code))
            .collect();
        parts.push(section(t, "examples").replace("{{examples}}", &shots.join("\n\n")));
    }
    if config.chain_of_thought {
        parts.push(section(t, "reasoning").to_string());
    }
    parts.push(section(t, "output").to_string());
    parts.join("\n\n")
}

pub fn assemble_user_prompt(
    request: &str,
    context: &ContextBundle,
    kb: &KnowledgeBase,
    config: &TechniqueConfig,
) -> String {
    let t = &TEMPLATES.user;
    let head = section(t, "request").replace("{{request}}", request);

    // (group, position) of every result still included
    let mut keep: Vec<Vec<bool>> = context.groups.iter().map(|g| vec![true; g.results.len()]).collect();
    let text_len = |id: &str| kb.chunk(id).map_or(0, |c| c.text.chars().count());
    let mut total: usize = context
        .groups
        .iter()
        .flat_map(|g| &g.results)
        .map(|r| text_len(&r.chunk_id))
        .sum();
    while total > config.context_budget {
        let victim = context
            .groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| g.results.iter().enumerate().map(move |(ri, r)| (gi, ri, r)))
            .filter(|(gi, ri, r)| keep[*gi][*ri] && r.matched_by == MatchKind::Vector)
            .min_by(|a, b| {
                a.2.score
                    .total_cmp(&b.2.score)
                    .then_with(|| b.0.cmp(&a.0))
                    .then_with(|| b.2.chunk_id.cmp(&a.2.chunk_id))
            });
        match victim {
            Some((gi, ri, r)) => {
                keep[gi][ri] = false;
                total -= text_len(&r.chunk_id);
            }
            None => break,
        }
    }

    let mut blocks = Vec::new();
    for (gi, g) in context.groups.iter().enumerate() {
        let entries: Vec<String> = g
            .results
            .iter()
            .zip(&keep[gi])
            .filter(|(_, k)| **k)
            .filter_map(|(r, _)| kb.chunk(&r.chunk_id))
            .map(|c| format!("{} {}", c.source.label(), c.text))
            .collect();
        if entries.is_empty() {
            continue;
        }
        let title = if g.keyword.is_empty() {
            format!("#### Sub-request {}: {}", gi + 1, g.sub_request_text)
        } else {
            format!("#### Sub-request {}: {} (keyword: {})", gi + 1, g.sub_request_text, g.keyword)
        };
        blocks.push(format!("{title}\n{}", entries.join("\n\n")));
    }
    let context_part = if blocks.is_empty() {
        section(t, "no_context").to_string()
    } else {
        section(t, "context").replace("{{context}}", &blocks.join("\n\n"))
    };
    format!("{head}\n\n{context_part}")
}

pub fn assemble_feedback_prompt(
    report: &ErrorReport,
    history: &[AttemptRecord],
    config: &TechniqueConfig,
) -> String {
    let t = &TEMPLATES.feedback;
    let mut parts = vec![section(t, "code").replace("{{code}}", report.problematic_code.trim_end())];
    if config.error_reporting {
        let errors: Vec<String> = report.issues.iter().map(|i| format!("- {}", i.message)).collect();
        parts.push(section(t, "error").replace("{{errors}}", &errors.join("\n")));
        let hints: Vec<String> = report
            .issues
            .iter()
            .filter(|i| !i.hint.is_empty())
            .map(|i| match &i.suggestion {
                Some(s) => format!("- {} (suggestion: {s})", i.hint),
                None => format!("- {}", i.hint),
            })
            .collect();
        if !hints.is_empty() {
            parts.push(section(t, "hints").replace("{{hints}}", &hints.join("\n")));
        }
    } else {
        parts.push(section(t, "generic_error").to_string());
    }
    parts.push(section(t, "request").to_string());
    parts.push(section(t, "reminders").to_string());
    let history: Vec<String> = history
        .iter()
        .map(|a| format!("Attempt {}: {}", a.attempt_no, a.digest(config.error_reporting)))
        .collect();
    parts.push(section(t, "history").replace("{{history}}", &history.join("\n")));
    parts.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::AttemptOutcome;
    use crate::retrieval::{ContextGroup, RetrievalResult};
    use crate::validation::{IssueKind, Location, Stage, ValidationIssue};

    fn markers(text: &str) -> Vec<String> {
        text.lines().filter(|l| l.starts_with("### ")).map(str::to_string).collect()
    }

    #[test]
    fn full_system_prompt_has_all_steps() {
        let kb = KnowledgeBase::bundled();
        let p = assemble_system_prompt(&TechniqueConfig::default(), &kb);
        for step in [
            "Identify simulation functions",
            "Syntax learning",
            "Extract necessary parameters/options",
            "Write code",
            "Provide references",
            "Draw conclusions",
        ] {
            assert!(p.contains(step), "missing step {step}");
        }
        assert!(p.contains("### EXAMPLES") && p.contains("### SYNTAX") && p.contains("### REASONING"));
        assert!(p.contains("generate_data(case: string (case name))"));
        assert!(p.contains(OUTPUT_CONTRACT));
    }

    #[test]
    fn flags_gate_sections() {
        let kb = KnowledgeBase::bundled();
        let cfg = TechniqueConfig { few_shot_examples: false, ..Default::default() };
        assert!(!assemble_system_prompt(&cfg, &kb).contains("### EXAMPLES"));
        let cfg = TechniqueConfig { role_prompt: false, ..Default::default() };
        let p = assemble_system_prompt(&cfg, &kb);
        assert!(!p.contains("### ROLE") && !p.contains("Step 1"));
        assert_eq!(p.split("\n\n").next().unwrap().lines().count(), 1);
        assert!(p.contains(OUTPUT_CONTRACT));
    }

    #[test]
    fn flag_monotonicity() {
        let kb = KnowledgeBase::bundled();
        let flags = ["chain_of_thought", "few_shot_examples", "syntax_in_role", "role_prompt"];
        for mask in 0u32..16 {
            let on: Vec<&str> = flags.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, f)| *f).collect();
            let base = TechniqueConfig::from_flags(&on, RagMode::None).unwrap();
            let base_text = assemble_system_prompt(&base, &kb);
            for extra in flags.iter().filter(|f| !on.contains(f)) {
                let mut more = on.clone();
                more.push(extra);
                let text = assemble_system_prompt(&TechniqueConfig::from_flags(&more, RagMode::None).unwrap(), &kb);
                let (a, b) = (markers(&base_text), markers(&text));
                assert!(a.iter().all(|m| b.contains(m)), "{extra} removed a section");
                for block in base_text.split("\n\n").filter(|b| b.starts_with("### ")) {
                    assert!(text.contains(block), "{extra} altered a section");
                }
            }
        }
    }

    #[test]
    fn user_prompt_context() {
        let kb = KnowledgeBase::bundled();
        let cfg = TechniqueConfig::default();
        let empty = assemble_user_prompt("Do it", &ContextBundle::default(), &kb, &cfg);
        assert!(empty.contains("Do it") && empty.contains("(no retrieved context)"));

        let bundle = ContextBundle {
            groups: vec![ContextGroup {
                sub_request_text: "train".into(),
                keyword: "TAY.point0".into(),
                results: vec![RetrievalResult {
                    chunk_id: "opt:TAY.point0".into(),
                    score: 1.0,
                    matched_by: MatchKind::KeywordTag,
                }],
            }],
        };
        let p = assemble_user_prompt("Do it", &bundle, &kb, &cfg);
        assert!(p.contains("[OPTIONS]"));
        assert!(p.contains(&kb.chunk("opt:TAY.point0").unwrap().text));
    }

    #[test]
    fn budget_drops_vector_results_first() {
        let kb = KnowledgeBase::bundled();
        let manual: Vec<_> = kb.chunks.iter().filter(|c| c.source == ChunkSource::Manual).collect();
        let mut results = vec![RetrievalResult {
            chunk_id: "opt:plot.switch".into(),
            score: 1.0,
            matched_by: MatchKind::KeywordTag,
        }];
        for (i, c) in manual.iter().enumerate() {
            results.push(RetrievalResult {
                chunk_id: c.id.clone(),
                score: 0.9 - i as f64 * 0.01,
                matched_by: MatchKind::Vector,
            });
        }
        let bundle = ContextBundle {
            groups: vec![ContextGroup { sub_request_text: "x".into(), keyword: "plot.switch".into(), results }],
        };
        let cfg = TechniqueConfig { context_budget: 700, ..Default::default() };
        let p = assemble_user_prompt("req", &bundle, &kb, &cfg);
        assert!(p.contains(&kb.chunk("opt:plot.switch").unwrap().text));
        assert!(p.contains(&manual[0].text));
        assert!(!p.contains(&manual[manual.len() - 1].text));

        let cfg = TechniqueConfig { context_budget: 0, ..Default::default() };
        let p = assemble_user_prompt("req", &bundle, &kb, &cfg);
        assert!(p.contains(&kb.chunk("opt:plot.switch").unwrap().text));
        assert!(!p.contains("[MANUAL]"));
    }

    fn report() -> ErrorReport {
        let issue = |m: &str| ValidationIssue {
            kind: IssueKind::UnknownOption,
            location: Location::call(0),
            message: m.into(),
            hint: "check the registry".into(),
            suggestion: None,
        };
        ErrorReport {
            problematic_code: "x = f(1);".into(),
            issues: vec![issue("first problem"), issue("second problem")],
            stage: Stage::Validate,
        }
    }

    fn attempt(no: usize) -> AttemptRecord {
        AttemptRecord {
            attempt_no: no,
            code: "x = f(1);".into(),
            fixes_applied: vec![],
            outcome: AttemptOutcome::ValidateFail,
            report: Some(report()),
            ..AttemptRecord::empty(no)
        }
    }

    #[test]
    fn feedback_has_six_elements() {
        let cfg = TechniqueConfig::default();
        let p = assemble_feedback_prompt(&report(), &[attempt(1)], &cfg);
        assert!(p.contains("first problem") && p.contains("second problem"));
        let order = ["### PROBLEMATIC CODE", "### ERROR MESSAGE", "### TROUBLESHOOTING HINTS", "### CORRECTION REQUEST", "### COMMON MISTAKES", "### CHAT HISTORY"];
        let pos: Vec<usize> = order.iter().map(|m| p.find(m).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let history = &p[p.find("### CHAT HISTORY").unwrap()..];
        assert_eq!(history.lines().filter(|l| l.starts_with("Attempt ")).count(), 1);
        assert!(history.contains("Attempt 1: "));
    }

    #[test]
    fn feedback_without_error_reporting() {
        let cfg = TechniqueConfig { error_reporting: false, ..Default::default() };
        let p = assemble_feedback_prompt(&report(), &[attempt(1)], &cfg);
        assert!(p.contains("execution failed"));
        assert!(!p.contains("first problem"));
        assert!(!p.contains("### TROUBLESHOOTING HINTS"));
    }

    #[test]
    fn from_flags_rejects_unknown() {
        assert!(TechniqueConfig::from_flags(&["nope"], RagMode::None).is_err());
        let cfg = TechniqueConfig::from_flags(&["feedback_loop"], RagMode::None).unwrap();
        assert!(cfg.feedback_loop && !cfg.role_prompt);
        assert_eq!(cfg.effective_attempts(), 3);
        let cfg = TechniqueConfig { feedback_loop: false, ..Default::default() };
        assert_eq!(cfg.effective_attempts(), 1);
        let bad = TechniqueConfig { rag_mode: RagMode::Standard, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
