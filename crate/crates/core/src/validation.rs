//! Registry-driven script checking: auto-correction of common slips and
//! precise issue reports with hints and suggestions.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::distance;
use crate::knowledge_base::{KnowledgeBase, ParamDomain, ParamKind};
use crate::script::{Arg, ScriptAst, Value, ValueKind};

pub const DEGRADED_MESSAGE: &str = "execution failed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    UnknownFunction,
    UnknownOption,
    OptionFunctionMismatch,
    TypeMismatch,
    MissingRequiredArg,
    DuplicateOption,
    UnknownCase,
    UnknownMethod,
    SemanticOrder,
    SyntaxError,
    NoCode,
    Runtime,
}

impl IssueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueKind::UnknownFunction => "unknown_function",
            IssueKind::UnknownOption => "unknown_option",
            IssueKind::OptionFunctionMismatch => "option_function_mismatch",
            IssueKind::TypeMismatch => "type_mismatch",
            IssueKind::MissingRequiredArg => "missing_required_arg",
            IssueKind::DuplicateOption => "duplicate_option",
            IssueKind::UnknownCase => "unknown_case",
            IssueKind::UnknownMethod => "unknown_method",
            IssueKind::SemanticOrder => "semantic_order",
            IssueKind::SyntaxError => "syntax_error",
            IssueKind::NoCode => "no_code",
            IssueKind::Runtime => "runtime",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_KINDS.iter().copied().find(|k| k.as_str() == s)
    }
}

const ALL_KINDS: [IssueKind; 12] = [
    IssueKind::UnknownFunction,
    IssueKind::UnknownOption,
    IssueKind::OptionFunctionMismatch,
    IssueKind::TypeMismatch,
    IssueKind::MissingRequiredArg,
    IssueKind::DuplicateOption,
    IssueKind::UnknownCase,
    IssueKind::UnknownMethod,
    IssueKind::SemanticOrder,
    IssueKind::SyntaxError,
    IssueKind::NoCode,
    IssueKind::Runtime,
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub call_index: Option<usize>,
    pub arg_index: Option<usize>,
    pub option: Option<String>,
}

impl Location {
    pub fn call(i: usize) -> Self {
        Self { call_index: Some(i), ..Default::default() }
    }

    pub fn arg(i: usize, a: usize) -> Self {
        Self { call_index: Some(i), arg_index: Some(a), option: None }
    }

    pub fn option(i: usize, name: &str) -> Self {
        Self { call_index: Some(i), arg_index: None, option: Some(name.to_string()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub location: Location,
    pub message: String,
    pub hint: String,
    pub suggestion: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Parse,
    Validate,
    Execute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub problematic_code: String,
    pub issues: Vec<ValidationIssue>,
    pub stage: Stage,
}

impl ErrorReport {
    /// Same issue kinds and locations, with generic messages and no hints.
    pub fn degraded(&self) -> ErrorReport {
        ErrorReport {
            problematic_code: self.problematic_code.clone(),
            stage: self.stage,
            issues: self
                .issues
                .iter()
                .map(|i| ValidationIssue {
                    kind: i.kind,
                    location: i.location.clone(),
                    message: DEGRADED_MESSAGE.to_string(),
                    hint: String::new(),
                    suggestion: None,
                })
                .collect(),
        }
    }

    /// One line summarizing the report, for chat history.
    pub fn digest(&self) -> String {
        let first = self.issues.first().map(|i| i.message.as_str()).unwrap_or(DEGRADED_MESSAGE);
        let mut line: String = first.lines().next().unwrap_or_default().chars().take(140).collect();
        if self.issues.len() > 1 {
            line.push_str(&format!(" (+{} more)", self.issues.len() - 1));
        }
        format!("{} failure: {line}", match self.stage {
            Stage::Parse => "parse",
            Stage::Validate => "validation",
            Stage::Execute => "execution",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixRule {
    CaseNormalize,
    EditDistanceOne,
    FlagCoercion,
    CellWrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub location: Location,
    pub before: String,
    pub after: String,
    pub rule: FixRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub ast: ScriptAst,
    pub fixes: Vec<Fix>,
}

fn correct_name<'a>(
    name: &str,
    candidates: impl Iterator<Item = &'a str> + Clone,
) -> Option<(String, FixRule)> {
    if candidates.clone().any(|c| c == name) {
        return None;
    }
    if let Some(c) = distance::unique_case_insensitive(name, candidates.clone()) {
        return Some((c.to_string(), FixRule::CaseNormalize));
    }
    distance::unique_at_distance_one(name, candidates).map(|c| (c.to_string(), FixRule::EditDistanceOne))
}

fn coerce(value: &Value, kind: ValueKind) -> Option<(Value, FixRule)> {
    match (value, kind) {
        (Value::Number(x), ValueKind::BooleanFlag) if *x == 0.0 || *x == 1.0 => {
            Some((Value::Flag(*x == 1.0), FixRule::FlagCoercion))
        }
        (Value::Str(s), ValueKind::CellOfStrings) => Some((Value::Cell(vec![s.clone()]), FixRule::CellWrap)),
        _ => None,
    }
}

/// Applies, per call: name case normalization, unique distance-1 renames,
/// 0/1 to flag coercion and string-to-cell wrapping. Idempotent.
pub fn autocorrect(ast: &ScriptAst, kb: &KnowledgeBase) -> Corrected {
    let mut ast = ast.clone();
    let mut fixes = Vec::new();
    for (ci, call) in ast.calls.iter_mut().enumerate() {
        if let Some((after, rule)) = correct_name(&call.function, kb.function_names()) {
            fixes.push(Fix {
                location: Location::call(ci),
                before: std::mem::replace(&mut call.function, after.clone()),
                after,
                rule,
            });
        }
        for opt in call.options.iter_mut() {
            if let Some((after, rule)) = correct_name(&opt.name, kb.option_names()) {
                fixes.push(Fix {
                    location: Location::option(ci, &after),
                    before: std::mem::replace(&mut opt.name, after.clone()),
                    after,
                    rule,
                });
            }
        }

        let Some(spec) = kb.function(&call.function) else { continue };
        for (ai, (arg, param)) in call.positional.iter_mut().zip(&spec.positional_params).enumerate() {
            let Arg::Value(value) = arg else { continue };
            if param.domain == Some(ParamDomain::Method) {
                let names: Vec<&mut String> = match value {
                    Value::Str(s) => vec![s],
                    Value::Cell(items) => items.iter_mut().collect(),
                    _ => vec![],
                };
                for name in names {
                    if let Some((after, rule)) = correct_name(name, kb.method_names()) {
                        fixes.push(Fix {
                            location: Location::arg(ci, ai),
                            before: std::mem::replace(name, after.clone()),
                            after,
                            rule,
                        });
                    }
                }
            }
            if let ParamKind::Value(kind) = param.kind {
                if let Some((after, rule)) = coerce(value, kind) {
                    fixes.push(Fix {
                        location: Location::arg(ci, ai),
                        before: value.to_string(),
                        after: after.to_string(),
                        rule,
                    });
                    *value = after;
                }
            }
        }
        for opt in call.options.iter_mut() {
            let Some(spec) = kb.option(&opt.name) else { continue };
            if let Some((after, rule)) = coerce(&opt.value, spec.value_kind) {
                fixes.push(Fix {
                    location: Location::option(ci, &opt.name),
                    before: opt.value.to_string(),
                    after: after.to_string(),
                    rule,
                });
                opt.value = after;
            }
        }
    }
    Corrected { ast, fixes }
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, 11) | (2, 12) | (3, 13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Collects every issue in the script (not fail-fast).
pub fn validate(ast: &ScriptAst, kb: &KnowledgeBase, code: &str) -> Result<(), ErrorReport> {
    let mut issues = Vec::new();
    let mut assigned: HashSet<&str> = HashSet::new();
    let mut push = |kind, location, message: String, hint: String, suggestion: Option<String>| {
        issues.push(ValidationIssue { kind, location, message, hint, suggestion });
    };

    for (ci, call) in ast.calls.iter().enumerate() {
        let line = ci + 1;
        let spec = kb.function(&call.function);
        if spec.is_none() {
            let suggestion = distance::suggestion(&call.function, kb.function_names()).map(str::to_string);
            let names: Vec<&str> = kb.function_names().collect();
            push(
                IssueKind::UnknownFunction,
                Location::call(ci),
                format!("Statement {line}: undefined function '{}'.", call.function),
                match &suggestion {
                    Some(s) => format!("Did you mean '{s}'? Available functions: {}.", names.join(", ")),
                    None => format!("Available functions: {}.", names.join(", ")),
                },
                suggestion,
            );
        }

        for (ai, arg) in call.positional.iter().enumerate() {
            if let Arg::Ref(name) = arg {
                if !assigned.contains(name.as_str()) {
                    push(
                        IssueKind::SemanticOrder,
                        Location::arg(ci, ai),
                        format!("Statement {line}: variable '{name}' is used before it is assigned."),
                        "Assign the result of an earlier call (e.g. data = generate_data(...);) and pass that variable.".into(),
                        None,
                    );
                }
            }
        }

        if let Some(spec) = spec {
            for (ai, param) in spec.positional_params.iter().enumerate() {
                let Some(arg) = call.positional.get(ai) else {
                    if param.required {
                        push(
                            IssueKind::MissingRequiredArg,
                            Location::arg(ci, ai),
                            format!(
                                "Statement {line}: {} requires its {} argument `{param}`.",
                                spec.name,
                                ordinal(ai + 1)
                            ),
                            format!("Call it as {}.", spec.signature()),
                            None,
                        );
                    }
                    continue;
                };
                match (param.kind, arg) {
                    (ParamKind::Ref, Arg::Value(v)) => push(
                        IssueKind::TypeMismatch,
                        Location::arg(ci, ai),
                        format!(
                            "Statement {line}: the {} argument of {} must be a variable, got {v}.",
                            ordinal(ai + 1),
                            spec.name
                        ),
                        "Pass the variable returned by an earlier call, without quotes.".into(),
                        None,
                    ),
                    (ParamKind::Value(kind), Arg::Ref(name)) => push(
                        IssueKind::TypeMismatch,
                        Location::arg(ci, ai),
                        format!(
                            "Statement {line}: the {} argument of {} must be a {kind} literal, got variable {name}.",
                            ordinal(ai + 1),
                            spec.name
                        ),
                        "Quote strings with single quotes, e.g. 'case9'.".into(),
                        None,
                    ),
                    (ParamKind::Value(kind), Arg::Value(v)) if !v.conforms_to(kind) => push(
                        IssueKind::TypeMismatch,
                        Location::arg(ci, ai),
                        format!(
                            "Statement {line}: the {} argument of {} must be a {kind}, got {} {v}.",
                            ordinal(ai + 1),
                            spec.name,
                            v.kind()
                        ),
                        format!("Call it as {}.", spec.signature()),
                        None,
                    ),
                    (ParamKind::Value(_), Arg::Value(v)) => match param.domain {
                        Some(ParamDomain::Case) => {
                            if let Value::Str(name) = v {
                                if !kb.is_case(name) {
                                    let near = distance::nearest(name, kb.case_names(), 3);
                                    push(
                                        IssueKind::UnknownCase,
                                        Location::arg(ci, ai),
                                        format!("Statement {line}: unknown case '{name}'."),
                                        format!("Nearest known cases: {}.", near.join(", ")),
                                        near.first().map(|s| s.to_string()),
                                    );
                                }
                            }
                        }
                        Some(ParamDomain::Method) => {
                            let names: Vec<&String> = match v {
                                Value::Str(s) => vec![s],
                                Value::Cell(items) => items.iter().collect(),
                                _ => vec![],
                            };
                            if names.is_empty() {
                                push(
                                    IssueKind::MissingRequiredArg,
                                    Location::arg(ci, ai),
                                    format!("Statement {line}: no method given to {}.", spec.name),
                                    "List at least one method name.".into(),
                                    None,
                                );
                            }
                            for name in names.into_iter().filter(|n| !kb.is_method(n)) {
                                let suggestion =
                                    distance::suggestion(name, kb.method_names()).map(str::to_string);
                                let all: Vec<&str> = kb.method_names().collect();
                                push(
                                    IssueKind::UnknownMethod,
                                    Location::arg(ci, ai),
                                    format!("Statement {line}: unknown method '{name}'."),
                                    match &suggestion {
                                        Some(s) => format!("Did you mean '{s}'? Known methods: {}.", all.join(", ")),
                                        None => format!("Known methods: {}.", all.join(", ")),
                                    },
                                    suggestion,
                                );
                            }
                        }
                        None => {}
                    },
                    (ParamKind::Ref, Arg::Ref(_)) => {}
                }
            }
            if call.positional.len() > spec.positional_params.len() {
                push(
                    IssueKind::TypeMismatch,
                    Location::arg(ci, spec.positional_params.len()),
                    format!(
                        "Statement {line}: {} takes {} positional argument(s), got {}.",
                        spec.name,
                        spec.positional_params.len(),
                        call.positional.len()
                    ),
                    format!(
                        "Call it as {}; options are passed as 'option.name', value pairs.",
                        spec.signature()
                    ),
                    None,
                );
            }
        }

        let mut seen: HashSet<&str> = HashSet::new();
        for opt in &call.options {
            if !seen.insert(opt.name.as_str()) {
                push(
                    IssueKind::DuplicateOption,
                    Location::option(ci, &opt.name),
                    format!("Statement {line}: option '{}' is set more than once.", opt.name),
                    "Keep a single 'name', value pair per option.".into(),
                    None,
                );
                continue;
            }
            let Some(ospec) = kb.option(&opt.name) else {
                let suggestion = distance::suggestion(&opt.name, kb.option_names()).map(str::to_string);
                let accepted = spec
                    .map(|s| s.accepted_options.iter().cloned().collect::<Vec<_>>().join(", "))
                    .unwrap_or_default();
                push(
                    IssueKind::UnknownOption,
                    Location::option(ci, &opt.name),
                    format!("Statement {line}: unknown option '{}'.", opt.name),
                    match (&suggestion, spec) {
                        (Some(s), _) => format!("Did you mean '{s}'?"),
                        (None, Some(f)) => format!("{} accepts: {accepted}.", f.name),
                        (None, None) => "Look the option up in the option registry.".into(),
                    },
                    suggestion,
                );
                continue;
            };
            if let Some(spec) = spec {
                if !spec.accepted_options.contains(&opt.name) {
                    push(
                        IssueKind::OptionFunctionMismatch,
                        Location::option(ci, &opt.name),
                        format!(
                            "Statement {line}: option '{}' is not accepted by {}; it belongs to {}.",
                            opt.name,
                            spec.name,
                            ospec.associated_functions.join(", ")
                        ),
                        format!(
                            "Pass '{}' to {} instead.",
                            opt.name,
                            ospec.associated_functions.join(" or ")
                        ),
                        ospec.associated_functions.first().cloned(),
                    );
                }
            }
            if !opt.value.conforms_to(ospec.value_kind) {
                let example = ospec.default_value.to_string();
                push(
                    IssueKind::TypeMismatch,
                    Location::option(ci, &opt.name),
                    format!(
                        "Statement {line}: option '{}' expects a {}, got {} {}.",
                        opt.name,
                        ospec.value_kind,
                        opt.value.kind(),
                        opt.value
                    ),
                    match ospec.value_kind {
                        ValueKind::BooleanFlag => "Use 1 to enable or 0 to disable.".into(),
                        _ => format!("Write a value like the default: {example}."),
                    },
                    None,
                );
            }
        }

        if let Some(target) = &call.assign_to {
            assigned.insert(target.as_str());
        }
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(ErrorReport { problematic_code: code.to_string(), issues, stage: Stage::Validate })
    }
}
