//! The toolbox knowledge base: option registry, function catalog, examples
//! library and chunked manual, parsed from their line-oriented text formats.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::{self, is_dotted_identifier, is_identifier, Value, ValueKind};

pub const REGISTRY_SEPARATOR: &str = " :: ";

#[derive(Debug, Error, PartialEq)]
pub enum KbError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("example block `{block}`: {reason}")]
    MalformedBlock { block: String, reason: String },
    #[error("example block `{0}`: code does not parse as a script")]
    UnparseableExample(String),
    #[error("invalid chunking parameters: {0}")]
    InvalidParams(String),
    #[error("dangling reference to `{0}`")]
    DanglingReference(String),
    #[error("duplicate name `{0}`")]
    Duplicate(String),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<KbError>,
    },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub name: String,
    pub default_value: Value,
    pub explanation: String,
    pub associated_functions: Vec<String>,
    pub value_kind: ValueKind,
}

impl OptionSpec {
    /// Serializes back to one registry line.
    pub fn to_record_line(&self) -> String {
        [
            self.name.clone(),
            self.default_value.registry_literal(),
            self.explanation.clone(),
            self.associated_functions.join(", "),
        ]
        .join(REGISTRY_SEPARATOR)
    }
}

/// Positional parameter kinds. `Ref` parameters take a variable name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Ref,
    Value(ValueKind),
}

/// Vocabulary a positional string (or every cell element) must come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamDomain {
    Case,
    Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub domain: Option<ParamDomain>,
    pub required: bool,
}

impl fmt::Display for ParamSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ParamKind::Ref => "variable",
            ParamKind::Value(k) => k.as_str(),
        };
        write!(f, "{}: {kind}", self.name)?;
        match self.domain {
            Some(ParamDomain::Case) => f.write_str(" (case name)")?,
            Some(ParamDomain::Method) => f.write_str(" (method name)")?,
            None => {}
        }
        if !self.required {
            f.write_str(", optional")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub positional_params: Vec<ParamSpec>,
    pub accepted_options: BTreeSet<String>,
    pub description: String,
}

impl FunctionSpec {
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.positional_params.iter().map(ToString::to_string).collect();
        format!("{}({})", self.name, params.join(", "))
    }

    pub fn required_count(&self) -> usize {
        self.positional_params.iter().filter(|p| p.required).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEntry {
    pub name: String,
    pub description: String,
}

/// Functions plus the case and method vocabularies they refer to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionCatalog {
    pub functions: Vec<FunctionSpec>,
    pub cases: Vec<NamedEntry>,
    pub methods: Vec<NamedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSnippet {
    pub id: String,
    pub keywords: Vec<String>,
    pub description: String,
    pub code: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkSource {
    OptionsDoc,
    ExamplesDoc,
    Manual,
}

impl ChunkSource {
    pub fn label(self) -> &'static str {
        match self {
            ChunkSource::OptionsDoc => "[OPTIONS]",
            ChunkSource::ExamplesDoc => "[EXAMPLE]",
            ChunkSource::Manual => "[MANUAL]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub id: String,
    pub source: ChunkSource,
    pub keywords: Vec<String>,
    pub text: String,
}

/// Immutable after [`build_knowledge_base`]; cross references are closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub options: BTreeMap<String, OptionSpec>,
    pub functions: BTreeMap<String, FunctionSpec>,
    pub cases: Vec<NamedEntry>,
    pub methods: Vec<NamedEntry>,
    pub examples: Vec<ExampleSnippet>,
    pub chunks: Vec<KnowledgeChunk>,
}

impl KnowledgeBase {
    pub fn option(&self, name: &str) -> Option<&OptionSpec> {
        self.options.get(name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.get(name)
    }

    pub fn chunk(&self, id: &str) -> Option<&KnowledgeChunk> {
        self.chunks.iter().find(|c| c.id == id)
    }

    pub fn is_case(&self, name: &str) -> bool {
        self.cases.iter().any(|c| c.name == name)
    }

    pub fn is_method(&self, name: &str) -> bool {
        self.methods.iter().any(|m| m.name == name)
    }

    pub fn case_names(&self) -> impl Iterator<Item = &str> + Clone {
        self.cases.iter().map(|c| c.name.as_str())
    }

    pub fn method_names(&self) -> impl Iterator<Item = &str> + Clone {
        self.methods.iter().map(|m| m.name.as_str())
    }

    pub fn function_names(&self) -> impl Iterator<Item = &str> + Clone {
        self.functions.keys().map(String::as_str)
    }

    pub fn option_names(&self) -> impl Iterator<Item = &str> + Clone {
        self.options.keys().map(String::as_str)
    }

    /// Loads `options.kbreg`, `toolbox.kbfn`, `examples.kbex` and `manual.txt`
    /// from a directory, chunking the manual with the default parameters.
    pub fn load_dir(dir: &Path) -> Result<Self, KbError> {
        let read = |name: &str| -> Result<(PathBuf, String), KbError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map(|text| (path.clone(), text))
                .map_err(|e| KbError::Io { path, message: e.to_string() })
        };
        let in_file = |path: &Path| {
            let path = path.to_path_buf();
            move |e: KbError| KbError::InFile { path, source: Box::new(e) }
        };
        let (p, text) = read("options.kbreg")?;
        let options = parse_option_registry(&text).map_err(in_file(&p))?;
        let (p, text) = read("toolbox.kbfn")?;
        let catalog = parse_function_catalog(&text).map_err(in_file(&p))?;
        let (p, text) = read("examples.kbex")?;
        let examples = parse_example_library(&text).map_err(in_file(&p))?;
        let (_, text) = read("manual.txt")?;
        let manual = chunk_manual(&text, DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS)?;
        build_knowledge_base(options, catalog, examples, manual)
    }

    /// The knowledge base compiled into the crate from `fixtures/`.
    pub fn bundled() -> Self {
        let options = parse_option_registry(include_str!("../fixtures/options.kbreg"))
            .expect("bundled registry parses");
        let catalog = parse_function_catalog(include_str!("../fixtures/toolbox.kbfn"))
            .expect("bundled catalog parses");
        let examples = parse_example_library(include_str!("../fixtures/examples.kbex"))
            .expect("bundled examples parse");
        let manual = chunk_manual(
            include_str!("../fixtures/manual.txt"),
            DEFAULT_CHUNK_CHARS,
            DEFAULT_OVERLAP_CHARS,
        )
        .expect("bundled manual chunks");
        build_knowledge_base(options, catalog, examples, manual).expect("bundled kb is closed")
    }
}

pub const DEFAULT_CHUNK_CHARS: usize = 600;
pub const DEFAULT_OVERLAP_CHARS: usize = 60;

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn parse_option_registry(text: &str) -> Result<Vec<OptionSpec>, KbError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if is_skippable(raw) {
            continue;
        }
        let line = idx + 1;
        let malformed = |reason: String| KbError::MalformedRecord { line, reason };
        let fields: Vec<&str> = raw.trim().split(REGISTRY_SEPARATOR).collect();
        if fields.len() != 4 {
            return Err(malformed(format!(
                "expected 4 fields separated by `::`, found {}",
                fields.len()
            )));
        }
        let name = fields[0].trim();
        if !is_dotted_identifier(name) {
            return Err(malformed(format!("invalid option name `{name}`")));
        }
        let default_value = script::parse_value(fields[1])
            .map_err(|e| malformed(format!("default `{}`: {}", fields[1].trim(), e.expected)))?;
        let explanation = fields[2].trim().to_string();
        if explanation.is_empty() {
            return Err(malformed("empty explanation".into()));
        }
        let associated_functions: Vec<String> = fields[3]
            .split(',')
            .map(|f| f.trim().to_string())
            .filter(|f| !f.is_empty())
            .collect();
        if associated_functions.is_empty() {
            return Err(malformed("no associated functions".into()));
        }
        if let Some(bad) = associated_functions.iter().find(|f| !is_identifier(f)) {
            return Err(malformed(format!("invalid function name `{bad}`")));
        }
        out.push(OptionSpec {
            name: name.to_string(),
            value_kind: default_value.kind(),
            default_value,
            explanation,
            associated_functions,
        });
    }
    Ok(out)
}

fn parse_param(spec: &str, line: usize) -> Result<ParamSpec, KbError> {
    let malformed = |reason: String| KbError::MalformedRecord { line, reason };
    let (name, ty) = spec
        .split_once(':')
        .ok_or_else(|| malformed(format!("parameter `{spec}` lacks a kind")))?;
    let name = name.trim();
    if !is_identifier(name) {
        return Err(malformed(format!("invalid parameter name `{name}`")));
    }
    let mut ty = ty.trim();
    let required = match ty.strip_suffix('?') {
        Some(rest) => {
            ty = rest.trim();
            false
        }
        None => true,
    };
    let (kind, domain) = match ty.split_once('@') {
        Some((k, d)) => (k.trim(), Some(d.trim())),
        None => (ty, None),
    };
    let kind = match kind {
        "ref" => ParamKind::Ref,
        "number" => ParamKind::Value(ValueKind::Number),
        "string" => ParamKind::Value(ValueKind::String),
        "cell" => ParamKind::Value(ValueKind::CellOfStrings),
        "vector" => ParamKind::Value(ValueKind::NumericVector),
        "flag" => ParamKind::Value(ValueKind::BooleanFlag),
        other => return Err(malformed(format!("unknown parameter kind `{other}`"))),
    };
    let domain = match domain {
        None => None,
        Some("case") => Some(ParamDomain::Case),
        Some("method") => Some(ParamDomain::Method),
        Some(other) => return Err(malformed(format!("unknown parameter domain `{other}`"))),
    };
    Ok(ParamSpec { name: name.to_string(), kind, domain, required })
}

/// Parses the function catalog (`*.kbfn`): `function name(params) :: text`,
/// `case name :: text` and `method name :: text` lines.
pub fn parse_function_catalog(text: &str) -> Result<FunctionCatalog, KbError> {
    let mut catalog = FunctionCatalog::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        if is_skippable(raw) {
            continue;
        }
        let line = idx + 1;
        let malformed = |reason: String| KbError::MalformedRecord { line, reason };
        let (head, description) = raw
            .trim()
            .split_once(REGISTRY_SEPARATOR)
            .ok_or_else(|| malformed("missing ` :: ` description".into()))?;
        let description = description.trim().to_string();
        let (keyword, rest) = head
            .split_once(char::is_whitespace)
            .ok_or_else(|| malformed("expected `function`, `case` or `method`".into()))?;
        let rest = rest.trim();
        match keyword {
            "function" => {
                let open = rest.find('(').ok_or_else(|| malformed("missing `(`".into()))?;
                let inner = rest[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| malformed("missing `)`".into()))?;
                let name = rest[..open].trim();
                if !is_identifier(name) {
                    return Err(malformed(format!("invalid function name `{name}`")));
                }
                let mut params = Vec::new();
                for p in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    params.push(parse_param(p, line)?);
                }
                if params.windows(2).any(|w| !w[0].required && w[1].required) {
                    return Err(malformed("required parameter after optional one".into()));
                }
                if !seen.insert(name.to_string()) {
                    return Err(KbError::Duplicate(name.to_string()));
                }
                catalog.functions.push(FunctionSpec {
                    name: name.to_string(),
                    positional_params: params,
                    accepted_options: BTreeSet::new(),
                    description,
                });
            }
            "case" | "method" => {
                if !is_identifier(rest) {
                    return Err(malformed(format!("invalid {keyword} name `{rest}`")));
                }
                if !seen.insert(rest.to_string()) {
                    return Err(KbError::Duplicate(rest.to_string()));
                }
                let entry = NamedEntry { name: rest.to_string(), description };
                if keyword == "case" {
                    catalog.cases.push(entry);
                } else {
                    catalog.methods.push(entry);
                }
            }
            other => return Err(malformed(format!("unknown record kind `{other}`"))),
        }
    }
    Ok(catalog)
}

const EXAMPLE_PREFIX: &str = "=== EXAMPLE";
const EXAMPLE_SUFFIX: &str = "===";

fn example_header(line: &str) -> Option<&str> {
    line.trim()
        .strip_prefix(EXAMPLE_PREFIX)?
        .strip_suffix(EXAMPLE_SUFFIX)
        .map(str::trim)
}

pub fn parse_example_library(text: &str) -> Result<Vec<ExampleSnippet>, KbError> {
    #[derive(PartialEq)]
    enum Section {
        Head,
        Description,
        Code,
    }
    struct Pending {
        id: String,
        keywords: Option<Vec<String>>,
        description: Vec<String>,
        code: Option<Vec<String>>,
    }

    fn finish(p: Pending) -> Result<ExampleSnippet, KbError> {
        let malformed = |reason: &str| KbError::MalformedBlock {
            block: p.id.clone(),
            reason: reason.to_string(),
        };
        let keywords = p.keywords.clone().ok_or_else(|| malformed("missing KEYWORDS line"))?;
        if keywords.is_empty() {
            return Err(malformed("empty KEYWORDS"));
        }
        let code_lines = p.code.clone().ok_or_else(|| malformed("missing CODE section"))?;
        let code = code_lines.join("\n").trim().to_string();
        if code.is_empty() {
            return Err(malformed("empty CODE section"));
        }
        if script::parse_script(&code).is_err() {
            return Err(KbError::UnparseableExample(p.id));
        }
        Ok(ExampleSnippet {
            id: p.id,
            keywords,
            description: p.description.join("\n").trim().to_string(),
            code,
        })
    }

    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut current: Option<Pending> = None;
    let mut section = Section::Head;

    for (idx, raw) in text.lines().enumerate() {
        if let Some(id) = example_header(raw) {
            if let Some(p) = current.take() {
                out.push(finish(p)?);
            }
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(KbError::MalformedBlock {
                    block: format!("line {}", idx + 1),
                    reason: "block id must be a single non-empty token".into(),
                });
            }
            if !ids.insert(id.to_string()) {
                return Err(KbError::MalformedBlock {
                    block: id.to_string(),
                    reason: "duplicate block id".into(),
                });
            }
            current = Some(Pending {
                id: id.to_string(),
                keywords: None,
                description: Vec::new(),
                code: None,
            });
            section = Section::Head;
            continue;
        }
        let Some(p) = current.as_mut() else {
            if is_skippable(raw) {
                continue;
            }
            return Err(KbError::MalformedBlock {
                block: format!("line {}", idx + 1),
                reason: "text outside of an example block".into(),
            });
        };
        let trimmed = raw.trim();
        if section != Section::Code {
            if let Some(kw) = trimmed.strip_prefix("KEYWORDS:") {
                let mut keywords: Vec<String> = Vec::new();
                for k in kw.split(';').map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty()) {
                    if !keywords.contains(&k) {
                        keywords.push(k);
                    }
                }
                p.keywords = Some(keywords);
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("DESCRIPTION:") {
                section = Section::Description;
                if !rest.trim().is_empty() {
                    p.description.push(rest.trim().to_string());
                }
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("CODE:") {
                section = Section::Code;
                let mut code = Vec::new();
                if !rest.trim().is_empty() {
                    code.push(rest.trim().to_string());
                }
                p.code = Some(code);
                continue;
            }
        }
        match section {
            Section::Head if trimmed.is_empty() => {}
            Section::Head => {
                return Err(KbError::MalformedBlock {
                    block: p.id.clone(),
                    reason: format!("unexpected line {}", idx + 1),
                })
            }
            Section::Description => p.description.push(trimmed.to_string()),
            Section::Code => p.code.get_or_insert_with(Vec::new).push(raw.to_string()),
        }
    }
    if let Some(p) = current.take() {
        out.push(finish(p)?);
    }
    Ok(out)
}

/// Splits `text` into overlapping chunks. Each cut prefers the paragraph break
/// (`\n\n`) nearest to the nominal size, searched within ±15% of `chunk_chars`.
pub fn chunk_manual(
    text: &str,
    chunk_chars: usize,
    overlap_chars: usize,
) -> Result<Vec<KnowledgeChunk>, KbError> {
    if chunk_chars == 0 {
        return Err(KbError::InvalidParams("chunk_chars must be positive".into()));
    }
    if overlap_chars >= chunk_chars {
        return Err(KbError::InvalidParams(format!(
            "overlap_chars ({overlap_chars}) must be smaller than chunk_chars ({chunk_chars})"
        )));
    }
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let window = chunk_chars * 15 / 100;
    let mut spans = Vec::new();
    let mut start = 0usize;
    while start < len {
        if len - start <= chunk_chars {
            spans.push((start, len));
            break;
        }
        let target = start + chunk_chars;
        let lo = (target - window).max(start + overlap_chars + 1);
        let hi = (target + window).min(len);
        // a cut at p means the chunk ends right after a "\n\n"
        let end = (lo..=hi)
            .filter(|&p| p >= 2 && chars[p - 1] == '\n' && chars[p - 2] == '\n')
            .min_by_key(|&p| (p.abs_diff(target), p))
            .unwrap_or(target);
        spans.push((start, end));
        start = end - overlap_chars;
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| KnowledgeChunk {
            id: format!("manual:{i:04}"),
            source: ChunkSource::Manual,
            keywords: Vec::new(),
            text: chars[s..e].iter().collect(),
        })
        .collect())
}

pub fn option_chunk(opt: &OptionSpec) -> KnowledgeChunk {
    let mut keywords = vec![opt.name.clone()];
    keywords.extend(opt.associated_functions.iter().cloned());
    KnowledgeChunk {
        id: format!("opt:{}", opt.name),
        source: ChunkSource::OptionsDoc,
        keywords,
        text: format!(
            "Option '{}' (default {}, {}): {}. Associated functions: {}.",
            opt.name,
            opt.default_value.registry_literal(),
            opt.value_kind,
            opt.explanation,
            opt.associated_functions.join(", ")
        ),
    }
}

pub fn example_chunk(ex: &ExampleSnippet) -> KnowledgeChunk {
    KnowledgeChunk {
        id: format!("ex:{}", ex.id),
        source: ChunkSource::ExamplesDoc,
        keywords: ex.keywords.clone(),
        text: format!("Request: {}\nCode:\n{}", ex.description, ex.code),
    }
}

pub fn build_knowledge_base(
    options: Vec<OptionSpec>,
    catalog: FunctionCatalog,
    examples: Vec<ExampleSnippet>,
    manual_chunks: Vec<KnowledgeChunk>,
) -> Result<KnowledgeBase, KbError> {
    let mut functions: BTreeMap<String, FunctionSpec> = BTreeMap::new();
    for f in catalog.functions {
        if functions.contains_key(&f.name) {
            return Err(KbError::Duplicate(f.name));
        }
        functions.insert(f.name.clone(), f);
    }

    let mut chunks = Vec::with_capacity(options.len() + examples.len() + manual_chunks.len());
    let mut option_map = BTreeMap::new();
    for opt in options {
        for func in &opt.associated_functions {
            let spec = functions
                .get_mut(func)
                .ok_or_else(|| KbError::DanglingReference(func.clone()))?;
            spec.accepted_options.insert(opt.name.clone());
        }
        chunks.push(option_chunk(&opt));
        if option_map.insert(opt.name.clone(), opt).is_some() {
            let dup = chunks.pop().map(|c| c.id).unwrap_or_default();
            return Err(KbError::Duplicate(dup.trim_start_matches("opt:").to_string()));
        }
    }
    for f in functions.values() {
        if let Some(missing) = f.accepted_options.iter().find(|o| !option_map.contains_key(*o)) {
            return Err(KbError::DanglingReference(missing.clone()));
        }
    }
    chunks.extend(examples.iter().map(example_chunk));
    chunks.extend(manual_chunks);

    let mut ids = HashSet::new();
    if let Some(dup) = chunks.iter().find(|c| !ids.insert(c.id.as_str())) {
        return Err(KbError::Duplicate(dup.id.clone()));
    }

    Ok(KnowledgeBase {
        options: option_map,
        functions,
        cases: catalog.cases,
        methods: catalog.methods,
        examples,
        chunks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(names: &[&str]) -> FunctionCatalog {
        FunctionCatalog {
            functions: names
                .iter()
                .map(|n| FunctionSpec {
                    name: n.to_string(),
                    positional_params: vec![],
                    accepted_options: BTreeSet::new(),
                    description: String::new(),
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn registry_record() {
        let opts =
            parse_option_registry("num.trainSample :: 300 :: number of training samples :: generate_data")
                .unwrap();
        assert_eq!(opts.len(), 1);
        assert_eq!(opts[0].name, "num.trainSample");
        assert_eq!(opts[0].default_value, Value::Number(300.0));
        assert_eq!(opts[0].value_kind, ValueKind::Number);
        assert_eq!(opts[0].associated_functions, vec!["generate_data"]);

        let opts = parse_option_registry(
            "PLS_RECW.forgettingFactor :: 0.9 :: forgetting factor for recursive PLS :: train",
        )
        .unwrap();
        assert_eq!(opts[0].default_value, Value::Number(0.9));
    }

    #[test]
    fn registry_rejects_bad_lines() {
        assert_eq!(
            parse_option_registry("bad line with no separators"),
            Err(KbError::MalformedRecord {
                line: 1,
                reason: "expected 4 fields separated by `::`, found 1".into()
            })
        );
        let err = parse_option_registry("# c\n\n9lives :: 1 :: x :: f").unwrap_err();
        assert!(matches!(err, KbError::MalformedRecord { line: 3, .. }));
        let err = parse_option_registry("a.b :: 'unterminated :: x :: f").unwrap_err();
        assert!(matches!(err, KbError::MalformedRecord { line: 1, .. }));
        let err = parse_option_registry("a.b :: 1 :: x :: ").unwrap_err();
        assert!(matches!(err, KbError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn registry_infers_kinds() {
        let text = "a.s :: 'x' :: e :: f\na.c :: {'P','Q'} :: e :: f\na.v :: [1 2] :: e :: f\n\
                    a.l :: logspace(1,3,3) :: e :: f\na.n :: -2.5 :: e :: f\na.b :: off :: e :: f";
        let kinds: Vec<ValueKind> =
            parse_option_registry(text).unwrap().iter().map(|o| o.value_kind).collect();
        assert_eq!(
            kinds,
            vec![
                ValueKind::String,
                ValueKind::CellOfStrings,
                ValueKind::NumericVector,
                ValueKind::NumericVector,
                ValueKind::Number,
                ValueKind::BooleanFlag
            ]
        );
    }

    #[test]
    fn example_library_blocks() {
        let text = "=== EXAMPLE gen ===\nKEYWORDS: Data Generation; data generation\nDESCRIPTION:\nMake data.\nCODE:\nd = generate_data('case9');\n";
        let ex = parse_example_library(text).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].keywords, vec!["data generation"]);
        assert_eq!(ex[0].description, "Make data.");
        assert!(parse_example_library("").unwrap().is_empty());

        let bad = "=== EXAMPLE t ===\nKEYWORDS: train\nCODE:\ntrain(,)\n";
        assert_eq!(parse_example_library(bad), Err(KbError::UnparseableExample("t".into())));
        let no_code = "=== EXAMPLE t ===\nKEYWORDS: train\n";
        assert!(matches!(parse_example_library(no_code), Err(KbError::MalformedBlock { .. })));
    }

    #[test]
    fn chunking_edge_cases() {
        assert!(chunk_manual("", 10, 2).unwrap().is_empty());
        let one = chunk_manual("short text", 100, 10).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].text, "short text");
        assert!(matches!(chunk_manual("abc", 10, 10), Err(KbError::InvalidParams(_))));
        assert!(matches!(chunk_manual("abc", 0, 0), Err(KbError::InvalidParams(_))));
    }

    /// Fixed-stride cover computed independently of the chunker.
    fn stride_starts(len: usize, chunk: usize, overlap: usize) -> Vec<usize> {
        let mut starts = vec![0];
        while starts.last().unwrap() + chunk < len {
            starts.push(starts.last().unwrap() + chunk - overlap);
        }
        starts
    }

    #[test]
    fn chunking_without_paragraphs_uses_fixed_stride() {
        let text: String = (0..2500).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let chunks = chunk_manual(&text, 1000, 100).unwrap();
        let expected = stride_starts(2500, 1000, 100);
        assert_eq!(expected, vec![0, 900, 1800]);
        assert_eq!(chunks.len(), 3);
        let mut pos = 0;
        for (c, s) in chunks.iter().zip(&expected) {
            assert_eq!(&text[*s..*s + c.text.len()], c.text);
            pos = s + c.text.len();
        }
        assert_eq!(pos, 2500);
        assert_eq!(&chunks[0].text[900..], &chunks[1].text[..100]);
    }

    #[test]
    fn chunking_prefers_paragraph_breaks() {
        let para = "x".repeat(88);
        let text = format!("{para}\n\n{}", "y".repeat(200));
        let chunks = chunk_manual(&text, 100, 10).unwrap();
        assert!(chunks[0].text.ends_with("\n\n"), "{:?}", chunks[0].text);
        assert_eq!(chunks[0].text.chars().count(), 90);
    }

    #[test]
    fn build_checks_closure_and_counts() {
        let opts = parse_option_registry("x.a :: 1 :: e :: train").unwrap();
        let kb = build_knowledge_base(opts.clone(), catalog(&["train"]), vec![], vec![]).unwrap();
        assert_eq!(kb.chunks.len(), 1);
        assert_eq!(kb.chunks[0].source, ChunkSource::OptionsDoc);
        assert!(kb.functions["train"].accepted_options.contains("x.a"));

        let opts = parse_option_registry("x.a :: 1 :: e :: trian").unwrap();
        assert_eq!(
            build_knowledge_base(opts, catalog(&["train"]), vec![], vec![]),
            Err(KbError::DanglingReference("trian".into()))
        );
    }

    #[test]
    fn chunk_count_is_sum_of_sources() {
        let reg: String =
            (0..10).map(|i| format!("opt.o{i} :: {i} :: option {i} :: f\n")).collect();
        let ex: String = (0..3)
            .map(|i| format!("=== EXAMPLE e{i} ===\nKEYWORDS: k{i}\nCODE:\nf();\n"))
            .collect();
        let manual = chunk_manual(&"m".repeat(350), 100, 0).unwrap();
        assert_eq!(manual.len(), 4);
        let kb = build_knowledge_base(
            parse_option_registry(&reg).unwrap(),
            catalog(&["f"]),
            parse_example_library(&ex).unwrap(),
            manual,
        )
        .unwrap();
        assert_eq!(kb.chunks.len(), 17);
    }

    #[test]
    fn bundled_kb_is_consistent() {
        let kb = KnowledgeBase::bundled();
        for opt in kb.options.values() {
            let chunk = kb.chunk(&format!("opt:{}", opt.name)).unwrap();
            assert!(chunk.text.contains(&opt.name));
            assert!(chunk.text.contains(&opt.default_value.registry_literal()));
            for f in &opt.associated_functions {
                assert!(chunk.text.contains(f.as_str()));
            }
            assert_eq!(chunk.keywords.iter().filter(|k| kb.options.contains_key(*k)).count(), 1);
        }
        for ex in &kb.examples {
            assert!(kb.chunk(&format!("ex:{}", ex.id)).unwrap().keywords == ex.keywords);
        }
        assert!(kb.is_case("case39") && kb.is_method("RR_KPC"));
        assert_eq!(kb.functions["train"].required_count(), 2);
    }

    fn arb_record() -> impl Strategy<Value = String> {
        let name = "[a-z][a-zA-Z0-9_]{0,6}(\\.[A-Za-z_][A-Za-z0-9_]{0,6}){0,2}";
        let default = prop_oneof![
            (-1000i32..1000).prop_map(|n| n.to_string()),
            "[a-z ]{0,6}".prop_map(|s| format!("'{s}'")),
            proptest::collection::vec("[A-Za-z]{1,4}", 0..3)
                .prop_map(|v| format!("{{{}}}", v.iter().map(|s| format!("'{s}'")).collect::<Vec<_>>().join(", "))),
            (0i32..3, 3i32..6, 1u32..6).prop_map(|(a, b, n)| format!("logspace({a},{b},{n})")),
            Just("on".to_string()),
            Just("off".to_string()),
        ];
        let funcs = proptest::collection::vec("[a-z_]{1,8}", 1..3);
        (name, default, "[a-zA-Z ]{1,20}", funcs).prop_map(|(n, d, e, f)| {
            format!("{n} :: {d} :: {} :: {}", e.trim().to_string() + "x", f.join(", "))
        })
    }

    proptest! {
        #[test]
        fn registry_serialize_parse_is_stable(records in proptest::collection::vec(arb_record(), 0..8)) {
            let parsed = parse_option_registry(&records.join("\n")).unwrap();
            let text: Vec<String> = parsed.iter().map(OptionSpec::to_record_line).collect();
            let reparsed = parse_option_registry(&text.join("\n")).unwrap();
            prop_assert_eq!(parsed, reparsed);
        }
    }
}
