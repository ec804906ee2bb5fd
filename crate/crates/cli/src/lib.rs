//! Command implementations behind the `simloop` binary.
//!
//! Exit codes: 0 success, 1 task-level failure, 2 usage or configuration error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use simloop_core::evaluation::{
    client_factory, load_schemes, load_tasks, report_csv, report_json, run_evaluation, summary_csv, summary_table,
    EvalOptions, EvaluationReport, SchemeConfig,
};
use simloop_core::knowledge_base::{ChunkSource, KnowledgeBase};
use simloop_core::llm::{HttpClient, LlmClient, ProviderConfig, ProviderKind, ReplayClient, ReplayFile, DEFAULT_API_KEY_VAR};
use simloop_core::orchestrator::{run_session, FinalStatus, SessionResources};
use simloop_core::prompt::TechniqueConfig;
use simloop_core::retrieval::{build_index, TrigramEmbedder, VectorIndex};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const KB_FILE: &str = "kb.json";
pub const INDEX_FILE: &str = "index.json";
pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const STEPS_FILE: &str = "steps.csv";

#[derive(Debug, Parser)]
#[command(name = "simloop", version, about = "LLM-driven script generation for a simulation toolbox")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the knowledge sources and write kb.json and index.json.
    KbBuild(KbBuildArgs),
    /// Answer one request end to end.
    Ask(AskArgs),
    /// Score schemes over the task suite.
    Eval(EvalArgs),
    /// Render accuracy tables from an evaluation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct KbBuildArgs {
    /// Directory holding options.kbreg, toolbox.kbfn, examples.kbex and manual.txt.
    #[arg(long)]
    pub kb_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Http,
    Replay,
}

#[derive(Debug, Args, Default)]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Replay file, or a directory of `<task_id>.replay` files.
    #[arg(long)]
    pub replay_file: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_API_KEY_VAR)]
    pub api_key_env: String,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub request: String,
    /// Built knowledge base (kb.json, index.json) or a source directory.
    #[arg(long)]
    pub kb_dir: PathBuf,
    /// Scheme file; with --scheme, takes technique flags and provider from it.
    #[arg(long)]
    pub schemes: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Where to write the session transcript (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub kb_dir: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub schemes: PathBuf,
    /// Scheme names to run; all schemes when omitted.
    #[arg(long = "scheme")]
    pub scheme_names: Vec<String>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report.json (as written by `eval`).
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a command, mapping configuration errors to exit status 2.
pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::KbBuild(a) => cmd_kb_build(&a, out),
        Command::Ask(a) => cmd_ask(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_USAGE
    })
}

pub fn cmd_kb_build(args: &KbBuildArgs, out: &mut dyn Write) -> Result<i32> {
    let kb = KnowledgeBase::load_dir(&args.kb_dir)?;
    let index = build_index(&kb.chunks, &TrigramEmbedder::default())?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_file(&args.out.join(KB_FILE), &serde_json::to_string(&kb)?)?;
    write_file(&args.out.join(INDEX_FILE), &serde_json::to_string(&index)?)?;
    let count = |s: ChunkSource| kb.chunks.iter().filter(|c| c.source == s).count();
    writeln!(
        out,
        "chunks: {} total ({} options, {} examples, {} manual)",
        kb.chunks.len(),
        count(ChunkSource::OptionsDoc),
        count(ChunkSource::ExamplesDoc),
        count(ChunkSource::Manual)
    )?;
    writeln!(out, "wrote {} and {}", args.out.join(KB_FILE).display(), args.out.join(INDEX_FILE).display())?;
    Ok(EXIT_OK)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// A built directory (kb.json + index.json) or a source directory.
pub fn load_kb(dir: &Path) -> Result<(KnowledgeBase, VectorIndex)> {
    let kb_path = dir.join(KB_FILE);
    if kb_path.is_file() {
        let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
        let kb: KnowledgeBase = serde_json::from_str(&read(&kb_path)?)
            .with_context(|| format!("{} is not a knowledge base", kb_path.display()))?;
        let index_path = dir.join(INDEX_FILE);
        let index: VectorIndex = serde_json::from_str(&read(&index_path)?)
            .with_context(|| format!("{} is not a vector index", index_path.display()))?;
        return Ok((kb, index));
    }
    if dir.join("options.kbreg").is_file() {
        let kb = KnowledgeBase::load_dir(dir)?;
        let index = build_index(&kb.chunks, &TrigramEmbedder::default())?;
        return Ok((kb, index));
    }
    bail!("no knowledge base in {}; run `simloop kb-build` first", dir.display())
}

fn apply_provider_override(base: Option<&ProviderConfig>, args: &ProviderArgs) -> Result<Option<ProviderConfig>> {
    let Some(kind) = args.provider else {
        if args.replay_file.is_some() {
            let mut p = ProviderConfig::replay(args.replay_file.clone().expect("checked"));
            p.api_key_env_var = args.api_key_env.clone();
            return Ok(Some(p));
        }
        return Ok(base.cloned());
    };
    let mut p = match kind {
        ProviderArg::Replay => {
            let path = args.replay_file.clone().ok_or_else(|| anyhow!("--provider replay needs --replay-file"))?;
            ProviderConfig::replay(path)
        }
        ProviderArg::Http => {
            let base_url = args
                .base_url
                .clone()
                .or_else(|| base.and_then(|b| b.base_url.clone()))
                .ok_or_else(|| anyhow!("--provider http needs --base-url"))?;
            let model = args
                .model
                .clone()
                .or_else(|| base.and_then(|b| b.model_name.clone()))
                .ok_or_else(|| anyhow!("--provider http needs --model"))?;
            ProviderConfig::http(base_url, model)
        }
    };
    p.api_key_env_var = args.api_key_env.clone();
    p.validate().map_err(|e| anyhow!(e))?;
    Ok(Some(p))
}

fn apply_limits(technique: &mut TechniqueConfig, n_max: Option<usize>, top_k: Option<usize>) -> Result<()> {
    if let Some(n) = n_max {
        technique.n_max = n;
    }
    if let Some(k) = top_k {
        technique.top_k = k;
    }
    technique.validate().map_err(|e| anyhow!(e))
}

fn select_schemes(all: Vec<SchemeConfig>, names: &[String]) -> Result<Vec<SchemeConfig>> {
    if names.is_empty() {
        return Ok(all);
    }
    names
        .iter()
        .map(|n| {
            all.iter().find(|s| &s.name == n).cloned().ok_or_else(|| anyhow!("unknown scheme `{n}`"))
        })
        .collect()
}

pub fn cmd_ask(args: &AskArgs, out: &mut dyn Write) -> Result<i32> {
    let (kb, index) = load_kb(&args.kb_dir)?;
    let scheme = match (&args.schemes, &args.scheme) {
        (Some(path), Some(name)) => Some(select_schemes(load_schemes(path)?, std::slice::from_ref(name))?.remove(0)),
        (None, Some(_)) => bail!("--scheme needs --schemes"),
        _ => None,
    };
    let mut technique = scheme.as_ref().map(|s| s.technique.clone()).unwrap_or_default();
    apply_limits(&mut technique, args.n_max, args.top_k)?;
    let provider = apply_provider_override(scheme.as_ref().map(|s| &s.provider), &args.provider)?
        .ok_or_else(|| anyhow!("no provider: pass --provider or --scheme"))?;
    let mut client: Box<dyn LlmClient> = match provider.kind {
        ProviderKind::Replay => {
            let path = provider.replay_path.as_deref().expect("validated");
            Box::new(ReplayClient::new(ReplayFile::load(path)?.into()))
        }
        ProviderKind::Http => Box::new(HttpClient::new(&provider)?),
    };

    let embedder = TrigramEmbedder::new(index.dimension);
    let res = SessionResources { kb: &kb, index: &index, embedder: &embedder };
    let t = run_session(&args.request, &technique, res, client.as_mut());
    if let Some(path) = &args.out {
        t.write_json(path).with_context(|| format!("writing {}", path.display()))?;
    }

    writeln!(out, "plan:")?;
    for q in t.plan.sub_queries() {
        writeln!(out, "  - {} [{}]", q.sub_request_text, q.keyword)?;
    }
    writeln!(out, "attempts:")?;
    for a in &t.attempts {
        writeln!(out, "  {}: {:?} - {}", a.attempt_no, a.outcome, a.digest(true))?;
        for f in &a.fixes_applied {
            writeln!(out, "     fixed {} -> {} ({:?})", f.before, f.after, f.rule)?;
        }
    }
    let last = t.final_attempt();
    writeln!(out, "code:\n{}", last.code.trim_end())?;
    if let Some(exec) = &last.execution {
        writeln!(out, "trace:")?;
        for call in &exec.trace {
            writeln!(out, "  {call}")?;
        }
    }
    for d in &t.diagnostics {
        writeln!(out, "note: {d}")?;
    }
    Ok(match t.final_status {
        FinalStatus::Success => {
            writeln!(out, "status: success")?;
            EXIT_OK
        }
        FinalStatus::Exhausted => {
            writeln!(out, "status: exhausted")?;
            EXIT_FAILURE
        }
    })
}

fn dir_name(scheme: &str) -> String {
    scheme
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let (kb, index) = load_kb(&args.kb_dir)?;
    let tasks = load_tasks(&args.tasks, &kb)?;
    if tasks.is_empty() {
        bail!("{} holds no tasks", args.tasks.display());
    }
    let schemes = select_schemes(load_schemes(&args.schemes)?, &args.scheme_names)?;
    let mut prepared = Vec::with_capacity(schemes.len());
    for mut s in schemes {
        if let Some(p) = apply_provider_override(Some(&s.provider), &args.provider)? {
            s.provider = p;
        }
        apply_limits(&mut s.technique, args.n_max, args.top_k)
            .with_context(|| format!("scheme {}", s.name))?;
        let factory = client_factory(&s.provider).with_context(|| format!("scheme {}", s.name))?;
        prepared.push((s, factory));
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let embedder = TrigramEmbedder::new(index.dimension);
    let res = SessionResources { kb: &kb, index: &index, embedder: &embedder };
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for (scheme, factory) in &prepared {
        log::info!("evaluating {}", scheme.name);
        let transcripts = args.out.join("transcripts").join(dir_name(&scheme.name));
        let opts = EvalOptions { jobs: args.jobs, transcript_dir: Some(&transcripts) };
        reports.push(run_evaluation(&tasks, scheme, res, factory.as_ref(), &opts));
    }

    write_file(&args.out.join(SCORES_FILE), &report_csv(&reports))?;
    write_file(&args.out.join(SUMMARY_FILE), &summary_csv(&reports))?;
    write_file(&args.out.join(REPORT_FILE), &report_json(&reports))?;
    write!(out, "{}", summary_table(&reports))?;

    let failed: Vec<&str> =
        reports.iter().filter(|r| r.provider_failures > 0).map(|r| r.scheme.as_str()).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        for r in reports.iter().filter(|r| r.provider_failures > 0) {
            for c in r.cards.iter().filter(|c| c.diagnostic.is_some()) {
                eprintln!("{} {}: {}", r.scheme, c.task_id, c.diagnostic.as_deref().unwrap_or_default());
            }
        }
        writeln!(out, "provider failures in: {}", failed.join(", "))?;
        Ok(EXIT_FAILURE)
    }
}

/// Per-attempt totals for each scheme (the step shape of fill-forward scoring).
pub fn steps_csv(reports: &[EvaluationReport]) -> String {
    let mut s = String::from("scheme,attempt,points,max_points\n");
    for r in reports {
        for i in 0..r.n_max {
            let pts: f64 = r.cards.iter().map(|c| c.attempt_scores[i]).sum();
            s.push_str(&format!("{},{},{},{}\n", r.scheme, i + 1, pts, r.cards.len()));
        }
    }
    s
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<i32> {
    let path = args.out.join(REPORT_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let reports: Vec<EvaluationReport> =
        serde_json::from_str(&text).with_context(|| format!("{} is not an evaluation report", path.display()))?;
    if reports.is_empty() {
        bail!("{} holds no schemes", path.display());
    }
    write!(out, "{}", summary_table(&reports))?;
    writeln!(out)?;
    let steps = steps_csv(&reports);
    writeln!(out, "points per attempt:")?;
    for r in &reports {
        let cols: Vec<String> = (0..r.n_max)
            .map(|i| format!("{}", r.cards.iter().map(|c| c.attempt_scores[i]).sum::<f64>()))
            .collect();
        writeln!(out, "  {}: {} (of {} each)", r.scheme, cols.join(" / "), r.cards.len())?;
    }
    write_file(&args.out.join(SUMMARY_FILE), &summary_csv(&reports))?;
    write_file(&args.out.join(STEPS_FILE), &steps)?;
    Ok(EXIT_OK)
}
