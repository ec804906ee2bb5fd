//! Interface-faithful mock of the simulation toolbox. Records configuration
//! and enforces data-flow ordering; no power-flow numerics are computed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::knowledge_base::{KnowledgeBase, ParamDomain, ParamKind};
use crate::script::{Arg, CallNode, ScriptAst, Value, ValueKind};
use crate::validation::{ErrorReport, IssueKind, Location, Stage, ValidationIssue, DEGRADED_MESSAGE};

/// Variable bound by a call without an assignment target.
pub const ANSWER_VAR: &str = "ans";

pub const ADAPTER_ERROR_PREFIX: &str = "DALINE-ERR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub case_name: String,
    pub train_n: f64,
    pub test_n: f64,
    pub polluted: bool,
    pub cleaned: bool,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub method: String,
    pub dataset: String,
    pub options: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub dataset: String,
    pub methods: Vec<String>,
    pub metric: String,
    pub options: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub style: String,
    #[serde(rename = "type")]
    pub plot_type: String,
    pub enabled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub datasets: BTreeMap<String, Dataset>,
    /// Model variable to index into `trained`.
    pub models: BTreeMap<String, usize>,
    pub trained: Vec<TrainedModel>,
    pub rankings: Vec<Ranking>,
    pub plots: Vec<PlotRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Success,
    RuntimeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecutionStatus,
    pub trace: Vec<CallNode>,
    pub error: Option<ErrorReport>,
    pub final_state: SimState,
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        self.status == ExecutionStatus::Success
    }
}

struct Failure {
    kind: IssueKind,
    location: Location,
    message: String,
    hint: String,
}

fn fail(kind: IssueKind, location: Location, message: String, hint: impl Into<String>) -> Failure {
    Failure { kind, location, message, hint: hint.into() }
}

fn effective(kb: &KnowledgeBase, call: &CallNode, name: &str) -> Option<Value> {
    call.option(name).cloned().or_else(|| kb.option(name).map(|o| o.default_value.clone()))
}

fn as_number(v: Option<Value>) -> f64 {
    match v {
        Some(Value::Number(x)) => x,
        Some(Value::Flag(b)) => f64::from(u8::from(b)),
        _ => f64::NAN,
    }
}

fn as_string(v: Option<Value>) -> String {
    match v {
        Some(Value::Str(s)) => s,
        Some(other) => other.to_string(),
        None => String::new(),
    }
}

fn as_flag(v: Option<Value>) -> bool {
    match v {
        Some(Value::Flag(b)) => b,
        Some(Value::Number(x)) => x != 0.0,
        _ => true,
    }
}

/// Runtime interface check, performed by the toolbox itself regardless of any
/// static validation. Flags accept 0/1; everything else is strict.
fn check_call(ci: usize, call: &CallNode, kb: &KnowledgeBase, state: &SimState) -> Result<(), Failure> {
    let line = ci + 1;
    let Some(spec) = kb.function(&call.function) else {
        return Err(fail(
            IssueKind::UnknownFunction,
            Location::call(ci),
            format!("Statement {line}: undefined function or variable '{}'.", call.function),
            "Check the function name against the toolbox function list.",
        ));
    };
    if call.positional.len() > spec.positional_params.len() {
        return Err(fail(
            IssueKind::TypeMismatch,
            Location::arg(ci, spec.positional_params.len()),
            format!("Statement {line}: too many input arguments to {}.", spec.name),
            format!("Call it as {}.", spec.signature()),
        ));
    }
    for (ai, param) in spec.positional_params.iter().enumerate() {
        let Some(arg) = call.positional.get(ai) else {
            if param.required {
                return Err(fail(
                    IssueKind::MissingRequiredArg,
                    Location::arg(ci, ai),
                    format!("Statement {line}: not enough input arguments to {}.", spec.name),
                    format!("Call it as {}.", spec.signature()),
                ));
            }
            continue;
        };
        match (param.kind, arg) {
            (ParamKind::Ref, Arg::Ref(var)) => {
                let known = state.datasets.contains_key(var) || state.models.contains_key(var);
                if !known {
                    return Err(fail(
                        IssueKind::SemanticOrder,
                        Location::arg(ci, ai),
                        format!("Statement {line}: no dataset or model named '{var}' exists yet."),
                        "Generate data first and pass the returned variable.",
                    ));
                }
            }
            (ParamKind::Value(kind), Arg::Value(v)) if v.conforms_to(kind) => {
                let names: Vec<&String> = match v {
                    Value::Str(s) => vec![s],
                    Value::Cell(items) => items.iter().collect(),
                    _ => vec![],
                };
                for name in names {
                    match param.domain {
                        Some(ParamDomain::Case) if !kb.is_case(name) => {
                            return Err(fail(
                                IssueKind::UnknownCase,
                                Location::arg(ci, ai),
                                format!("Statement {line}: case file '{name}' not found."),
                                "Use one of the bundled cases.",
                            ))
                        }
                        Some(ParamDomain::Method) if !kb.is_method(name) => {
                            return Err(fail(
                                IssueKind::UnknownMethod,
                                Location::arg(ci, ai),
                                format!("Statement {line}: unrecognized method '{name}'."),
                                "Use a method name exactly as listed in the toolbox.",
                            ))
                        }
                        _ => {}
                    }
                }
            }
            (_, arg) => {
                return Err(fail(
                    IssueKind::TypeMismatch,
                    Location::arg(ci, ai),
                    format!("Statement {line}: invalid argument {} `{arg}` to {}.", ai + 1, spec.name),
                    format!("Call it as {}.", spec.signature()),
                ))
            }
        }
    }
    for opt in &call.options {
        let Some(ospec) = kb.option(&opt.name) else {
            return Err(fail(
                IssueKind::UnknownOption,
                Location::option(ci, &opt.name),
                format!("Statement {line}: unrecognized option '{}'.", opt.name),
                "Option names are case sensitive.",
            ));
        };
        if !spec.accepted_options.contains(&opt.name) {
            return Err(fail(
                IssueKind::OptionFunctionMismatch,
                Location::option(ci, &opt.name),
                format!("Statement {line}: {} does not accept option '{}'.", spec.name, opt.name),
                format!("'{}' belongs to {}.", opt.name, ospec.associated_functions.join(", ")),
            ));
        }
        let lenient_flag = ospec.value_kind == ValueKind::BooleanFlag
            && matches!(opt.value, Value::Number(x) if x == 0.0 || x == 1.0);
        if !opt.value.conforms_to(ospec.value_kind) && !lenient_flag {
            return Err(fail(
                IssueKind::TypeMismatch,
                Location::option(ci, &opt.name),
                format!("Statement {line}: option '{}' must be a {}.", opt.name, ospec.value_kind),
                format!("Default is {}.", ospec.default_value),
            ));
        }
    }
    Ok(())
}

fn dataset_arg<'s>(ci: usize, call: &CallNode, state: &'s SimState) -> Result<(&'s str, &'s Dataset), Failure> {
    let Some(Arg::Ref(var)) = call.positional.first() else {
        unreachable!("interface check guarantees a reference argument");
    };
    state.datasets.get_key_value(var.as_str()).map(|(k, d)| (k.as_str(), d)).ok_or_else(|| {
        fail(
            IssueKind::SemanticOrder,
            Location::arg(ci, 0),
            format!("Statement {}: no dataset: '{var}' is not a dataset.", ci + 1),
            "Pass the dataset returned by generate_data (or a processing step), not a model.",
        )
    })
}

fn target(call: &CallNode) -> String {
    call.assign_to.clone().unwrap_or_else(|| ANSWER_VAR.to_string())
}

fn bind_dataset(state: &mut SimState, var: String, data: Dataset) {
    state.models.remove(&var);
    state.datasets.insert(var, data);
}

fn bind_model(state: &mut SimState, var: String, idx: usize) {
    state.datasets.remove(&var);
    state.models.insert(var, idx);
}

fn options_map(call: &CallNode) -> BTreeMap<String, Value> {
    call.options.iter().map(|o| (o.name.clone(), o.value.clone())).collect()
}

fn apply(ci: usize, call: &CallNode, kb: &KnowledgeBase, state: &mut SimState) -> Result<(), Failure> {
    check_call(ci, call, kb, state)?;
    match call.function.as_str() {
        "generate_data" => {
            let Some(Arg::Value(Value::Str(case_name))) = call.positional.first() else {
                unreachable!("interface check guarantees a case string");
            };
            let data = Dataset {
                case_name: case_name.clone(),
                train_n: as_number(effective(kb, call, "num.trainSample")),
                test_n: as_number(effective(kb, call, "num.testSample")),
                polluted: false,
                cleaned: false,
                normalized: false,
            };
            bind_dataset(state, target(call), data);
        }
        "pollute_data" | "clean_data" | "normalize_data" => {
            let (_, data) = dataset_arg(ci, call, state)?;
            let mut data = data.clone();
            match call.function.as_str() {
                "pollute_data" => data.polluted = true,
                "clean_data" => data.cleaned = true,
                _ => data.normalized = true,
            }
            bind_dataset(state, target(call), data);
        }
        "train" => {
            let (var, _) = dataset_arg(ci, call, state)?;
            let var = var.to_string();
            let Some(Arg::Value(Value::Str(method))) = call.positional.get(1) else {
                unreachable!("interface check guarantees a method string");
            };
            state.trained.push(TrainedModel { method: method.clone(), dataset: var, options: options_map(call) });
            let idx = state.trained.len() - 1;
            bind_model(state, target(call), idx);
        }
        "rank" => {
            let (var, _) = dataset_arg(ci, call, state)?;
            let var = var.to_string();
            let Some(Arg::Value(Value::Cell(methods))) = call.positional.get(1) else {
                unreachable!("interface check guarantees a method cell");
            };
            if methods.is_empty() {
                return Err(fail(
                    IssueKind::MissingRequiredArg,
                    Location::arg(ci, 1),
                    format!("Statement {}: rank needs at least one method.", ci + 1),
                    "List the methods to compare in a cell array.",
                ));
            }
            state.rankings.push(Ranking {
                dataset: var,
                methods: methods.clone(),
                metric: as_string(effective(kb, call, "rank.metric")),
                options: options_map(call),
            });
            state.plots.push(PlotRecord {
                style: as_string(effective(kb, call, "plot.style")),
                plot_type: as_string(effective(kb, call, "plot.type")),
                enabled: as_flag(effective(kb, call, "plot.switch")),
            });
        }
        "plot_result" => {
            let Some(Arg::Ref(var)) = call.positional.first() else {
                unreachable!("interface check guarantees a reference argument");
            };
            if !state.models.contains_key(var) {
                return Err(fail(
                    IssueKind::SemanticOrder,
                    Location::arg(ci, 0),
                    format!("Statement {}: '{var}' is not a trained model.", ci + 1),
                    "Pass the model returned by train.",
                ));
            }
            state.plots.push(PlotRecord {
                style: as_string(effective(kb, call, "plot.theme")),
                plot_type: "result".to_string(),
                enabled: as_flag(effective(kb, call, "plot.switch")),
            });
        }
        other => {
            return Err(fail(
                IssueKind::Runtime,
                Location::call(ci),
                format!("Statement {}: the toolbox has no implementation for '{other}'.", ci + 1),
                "",
            ))
        }
    }
    Ok(())
}

/// Interprets the calls in order; the first violation halts execution.
pub fn execute(ast: &ScriptAst, kb: &KnowledgeBase) -> ExecutionOutcome {
    let mut state = SimState::default();
    let mut trace = Vec::with_capacity(ast.calls.len());
    for (ci, call) in ast.calls.iter().enumerate() {
        if let Err(f) = apply(ci, call, kb, &mut state) {
            return ExecutionOutcome {
                status: ExecutionStatus::RuntimeError,
                trace,
                error: Some(ErrorReport {
                    problematic_code: ast.to_string(),
                    issues: vec![ValidationIssue {
                        kind: f.kind,
                        location: f.location,
                        message: f.message,
                        hint: f.hint,
                        suggestion: None,
                    }],
                    stage: Stage::Execute,
                }),
                final_state: state,
            };
        }
        trace.push(call.clone());
    }
    ExecutionOutcome { status: ExecutionStatus::Success, trace, error: None, final_state: state }
}

/// What an external toolbox adapter process must implement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdapterContract {
    pub input: &'static str,
    pub success: &'static str,
    pub failure: &'static str,
    pub error_line: &'static str,
}

pub fn describe_adapter_contract() -> AdapterContract {
    AdapterContract {
        input: "the pretty-printed script, one call per line, on standard input",
        success: "exit status 0",
        failure: "non-zero exit status",
        error_line: "DALINE-ERR <kind> <message>, where <kind> is an issue kind name such as unknown_option",
    }
}

/// Maps an adapter's exit status and output onto an outcome. The adapter
/// does not report state, so `final_state` is empty.
pub fn interpret_adapter_result(ast: &ScriptAst, exit_code: i32, output: &str) -> ExecutionOutcome {
    if exit_code == 0 {
        return ExecutionOutcome {
            status: ExecutionStatus::Success,
            trace: ast.calls.clone(),
            error: None,
            final_state: SimState::default(),
        };
    }
    let parsed = output.lines().find_map(|l| l.trim().strip_prefix(ADAPTER_ERROR_PREFIX)).map(|rest| {
        let rest = rest.trim();
        let (kind, message) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        match IssueKind::parse(kind) {
            Some(k) => (k, message.trim().to_string()),
            None => (IssueKind::Runtime, rest.to_string()),
        }
    });
    let (kind, message) = match parsed {
        Some((k, m)) if !m.is_empty() => (k, m),
        Some((k, _)) => (k, DEGRADED_MESSAGE.to_string()),
        None => (IssueKind::Runtime, DEGRADED_MESSAGE.to_string()),
    };
    ExecutionOutcome {
        status: ExecutionStatus::RuntimeError,
        trace: Vec::new(),
        error: Some(ErrorReport {
            problematic_code: ast.to_string(),
            issues: vec![ValidationIssue {
                kind,
                location: Location::default(),
                message,
                hint: String::new(),
                suggestion: None,
            }],
            stage: Stage::Execute,
        }),
        final_state: SimState::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::parse_script;

    fn run(src: &str) -> ExecutionOutcome {
        execute(&parse_script(src).unwrap(), &KnowledgeBase::bundled())
    }

    #[test]
    fn ls_cls_training_records_options() {
        let out = run("data = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250);\n\
                       model = train(data, 'LS_CLS', 'LS_CLS.cvNumFold', 5, 'LS_CLS.fixCV', 1);");
        assert!(out.is_success());
        let t = &out.final_state.trained[0];
        assert_eq!(t.method, "LS_CLS");
        assert_eq!(t.options["LS_CLS.cvNumFold"], Value::Number(5.0));
        assert_eq!(out.final_state.datasets["data"].train_n, 500.0);
        assert_eq!(out.trace.len(), 2);
    }

    #[test]
    fn train_without_data() {
        let out = run("model = train(data, 'RR');");
        assert_eq!(out.status, ExecutionStatus::RuntimeError);
        assert!(out.trace.is_empty());
        let err = out.error.unwrap();
        assert_eq!(err.stage, Stage::Execute);
        assert!(err.issues[0].message.contains("no dataset"));
    }

    #[test]
    fn rank_six_methods_plot_off() {
        let out = run("data = generate_data('case9', 'num.trainSample', 200, 'num.testSample', 150);\n\
                       rank(data, {'PLS_RECW','TAY','DLPF','RR_KPC','OLS','QR'}, 'plot.switch', 0);");
        assert!(out.is_success());
        assert_eq!(out.final_state.rankings.len(), 1);
        assert_eq!(out.final_state.rankings[0].methods.len(), 6);
        assert!(!out.final_state.plots.last().unwrap().enabled);
    }

    #[test]
    fn pipeline_flags_and_model_plot() {
        let out = run("d = generate_data('case14'); d = pollute_data(d); d = clean_data(d); d = normalize_data(d);\n\
                       m = train(d, 'DC'); plot_result(m, 'plot.theme', 'academic');");
        assert!(out.is_success());
        let d = &out.final_state.datasets["d"];
        assert!(d.polluted && d.cleaned && d.normalized);
        assert_eq!(out.final_state.plots[0].style, "academic");
    }

    #[test]
    fn runtime_rejects_typos_without_static_checks() {
        let out = run("d = generate_data('case9'); m = train(d, 'RR_KPCC');");
        let err = out.error.unwrap();
        assert_eq!(err.issues[0].kind, IssueKind::UnknownMethod);
        assert_eq!(out.trace.len(), 1);
        let out = run("d = generate_data('case9', 'num.trainsample', 3);");
        assert_eq!(out.error.unwrap().issues[0].kind, IssueKind::UnknownOption);
    }

    #[test]
    fn model_is_not_a_dataset() {
        let out = run("d = generate_data('case9'); m = train(d, 'DC'); rank(m, {'DC'});");
        assert!(out.error.unwrap().issues[0].message.contains("no dataset"));
    }

    #[test]
    fn deterministic_replay() {
        let src = "d = generate_data('case57'); rank(d, {'DC','PTDF'}, 'plot.style', 'light');";
        assert_eq!(run(src), run(src));
    }

    #[test]
    fn adapter_contract() {
        let ast = parse_script("d = generate_data('case9');").unwrap();
        assert!(interpret_adapter_result(&ast, 0, "").is_success());
        let out = interpret_adapter_result(&ast, 1, "log\nDALINE-ERR unknown_option bad name 'x'\n");
        let issue = &out.error.unwrap().issues[0];
        assert_eq!(issue.kind, IssueKind::UnknownOption);
        assert_eq!(issue.message, "bad name 'x'");
        let out = interpret_adapter_result(&ast, 1, "segfault");
        assert_eq!(out.error.unwrap().issues[0].message, DEGRADED_MESSAGE);
        assert!(describe_adapter_contract().error_line.starts_with(ADAPTER_ERROR_PREFIX));
    }
}
