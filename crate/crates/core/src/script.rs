//! MATLAB-flavored toolbox scripts: values, call AST, parser and pretty-printer.
//!
//! Grammar:
//!
//! ```text
//! statement := [ident "="] ident "(" args? ")" [";"]
//! args      := arg ("," arg)*
//! arg       := value | ident
//! value     := number | 'chars' | "{" string-list "}" | "[" numbers "]"
//!            | "logspace(" num "," num "," int ")" | true | false
//! ```
//!
//! Statements are separated by newlines or `;`, `%` starts a comment and `...`
//! continues a statement on the next line. The first string argument that looks
//! like a dotted option name (`num.trainSample`) starts the name-value section of
//! a call; everything before it is positional.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Number,
    String,
    CellOfStrings,
    NumericVector,
    BooleanFlag,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Number => "number",
            ValueKind::String => "string",
            ValueKind::CellOfStrings => "cell-of-strings",
            ValueKind::NumericVector => "numeric-vector",
            ValueKind::BooleanFlag => "boolean-flag",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A numeric vector, either listed or as `logspace(start, stop, count)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumVec {
    List(Vec<f64>),
    Logspace { start: f64, stop: f64, count: u32 },
}

impl NumVec {
    /// Explicit elements; `logspace(a, b, n)` is n points from 10^a to 10^b
    /// equally spaced in the exponent (n = 1 yields 10^b).
    pub fn expand(&self) -> Vec<f64> {
        match self {
            NumVec::List(v) => v.clone(),
            NumVec::Logspace { start, stop, count } => {
                let n = *count as usize;
                if n == 1 {
                    return vec![10f64.powf(*stop)];
                }
                let step = (stop - start) / (n - 1) as f64;
                (0..n)
                    .map(|i| 10f64.powf(start + step * i as f64))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Number(f64),
    Str(String),
    Cell(Vec<String>),
    NumVec(NumVec),
    Flag(bool),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Number(_) => ValueKind::Number,
            Value::Str(_) => ValueKind::String,
            Value::Cell(_) => ValueKind::CellOfStrings,
            Value::NumVec(_) => ValueKind::NumericVector,
            Value::Flag(_) => ValueKind::BooleanFlag,
        }
    }

    pub fn conforms_to(&self, kind: ValueKind) -> bool {
        self.kind() == kind
    }

    /// Equality after normalization: `Flag(false)` equals `Number(0)`,
    /// `logspace` is expanded, and reals compare with a 1e-9 relative tolerance.
    pub fn normalized_eq(&self, other: &Value) -> bool {
        fn as_scalar(v: &Value) -> Option<f64> {
            match v {
                Value::Number(x) => Some(*x),
                Value::Flag(b) => Some(if *b { 1.0 } else { 0.0 }),
                _ => None,
            }
        }
        fn close(a: f64, b: f64) -> bool {
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
        }
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Cell(a), Value::Cell(b)) => a == b,
            (Value::NumVec(a), Value::NumVec(b)) => {
                let (a, b) = (a.expand(), b.expand());
                a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| close(*x, *y))
            }
            _ => match (as_scalar(self), as_scalar(other)) {
                (Some(a), Some(b)) => close(a, b),
                _ => false,
            },
        }
    }

    /// Literal form as used in registry files: flags render as `on`/`off`.
    pub fn registry_literal(&self) -> String {
        match self {
            Value::Flag(true) => "on".to_string(),
            Value::Flag(false) => "off".to_string(),
            other => other.to_string(),
        }
    }
}

fn fmt_number(x: f64) -> String {
    format!("{x}")
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => f.write_str(&fmt_number(*x)),
            Value::Str(s) => f.write_str(&quote(s)),
            Value::Cell(items) => {
                let inner: Vec<String> = items.iter().map(|s| quote(s)).collect();
                write!(f, "{{{}}}", inner.join(", "))
            }
            Value::NumVec(NumVec::List(v)) => {
                let inner: Vec<String> = v.iter().map(|x| fmt_number(*x)).collect();
                write!(f, "[{}]", inner.join(", "))
            }
            Value::NumVec(NumVec::Logspace { start, stop, count }) => write!(
                f,
                "logspace({},{},{})",
                fmt_number(*start),
                fmt_number(*stop),
                count
            ),
            Value::Flag(b) => f.write_str(if *b { "true" } else { "false" }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Arg {
    Value(Value),
    Ref(String),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Value(v) => v.fmt(f),
            Arg::Ref(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionArg {
    pub name: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallNode {
    pub assign_to: Option<String>,
    pub function: String,
    pub positional: Vec<Arg>,
    pub options: Vec<OptionArg>,
}

impl CallNode {
    pub fn option(&self, name: &str) -> Option<&Value> {
        self.options.iter().find(|o| o.name == name).map(|o| &o.value)
    }
}

impl fmt::Display for CallNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(target) = &self.assign_to {
            write!(f, "{target} = ")?;
        }
        let mut args: Vec<String> = self.positional.iter().map(ToString::to_string).collect();
        for opt in &self.options {
            args.push(quote(&opt.name));
            args.push(opt.value.to_string());
        }
        write!(f, "{}({});", self.function, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptAst {
    pub calls: Vec<CallNode>,
}

impl fmt::Display for ScriptAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for call in &self.calls {
            writeln!(f, "{call}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("parse error at line {line}, column {column}: expected {expected}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no code found in response")]
pub struct NoCodeFound;

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `ident(.ident)*`
pub fn is_dotted_identifier(s: &str) -> bool {
    s.split('.').all(is_identifier)
}

/// Strings that open the name-value section of a call.
pub fn looks_like_option_name(s: &str) -> bool {
    s.contains('.') && is_dotted_identifier(s)
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(x) => format!("number {x}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, expected: &str| ParseError {
        line,
        column,
        expected: expected.to_string(),
    };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        match c {
            '\n' => {
                out.push(Spanned { tok: Tok::Newline, line: tl, column: tc });
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                // continuation: skip to and including the newline
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                if i < chars.len() {
                    i += 1;
                    line += 1;
                    col = 1;
                }
            }
            '(' | ')' | '{' | '}' | '[' | ']' | ',' | ';' | '=' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    _ => Tok::Eq,
                };
                out.push(Spanned { tok, line: tl, column: tc });
                i += 1;
                col += 1;
            }
            '\'' | '"' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(err(tl, tc, "closing quote")),
                        Some(&ch) if ch == quote => {
                            if chars.get(i + 1) == Some(&quote) {
                                s.push(quote);
                                i += 2;
                                col += 2;
                            } else {
                                i += 1;
                                col += 1;
                                break;
                            }
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                out.push(Spanned { tok: Tok::Str(s), line: tl, column: tc });
            }
            c if c.is_ascii_digit()
                || ((c == '-' || c == '+' || c == '.')
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.')) =>
            {
                let start = i;
                if c == '-' || c == '+' {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if chars.get(i) == Some(&'.') && chars.get(i + 1) != Some(&'.') {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if matches!(chars.get(i), Some('e' | 'E')) {
                    let mut j = i + 1;
                    if matches!(chars.get(j), Some('+' | '-')) {
                        j += 1;
                    }
                    if chars.get(j).is_some_and(|d| d.is_ascii_digit()) {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let literal: String = chars[start..i].iter().collect();
                let value: f64 = literal
                    .parse()
                    .map_err(|_| err(tl, tc, "a number"))?;
                col += i - start;
                out.push(Spanned { tok: Tok::Number(value), line: tl, column: tc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let ident: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(Spanned { tok: Tok::Ident(ident), line: tl, column: tc });
            }
            _ => return Err(err(tl, tc, &format!("a token, found `{c}`"))),
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, expected: &str) -> ParseError {
        let t = self.peek();
        ParseError {
            line: t.line,
            column: t.column,
            expected: format!("{expected}, found {}", t.tok.describe()),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(what))
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek().tok, Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    fn script(&mut self) -> Result<ScriptAst, ParseError> {
        let mut calls = Vec::new();
        self.skip_separators();
        while self.peek().tok != Tok::Eof {
            calls.push(self.statement()?);
            match self.peek().tok {
                Tok::Newline | Tok::Semi | Tok::Eof => self.skip_separators(),
                _ => return Err(self.error_here("end of statement")),
            }
        }
        if calls.is_empty() {
            return Err(self.error_here("at least one call statement"));
        }
        Ok(ScriptAst { calls })
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                self.bump();
                Ok(name)
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn statement(&mut self) -> Result<CallNode, ParseError> {
        let first = self.ident("a function call or assignment")?;
        let (assign_to, function) = if self.peek().tok == Tok::Eq {
            self.bump();
            (Some(first), self.ident("a function name after `=`")?)
        } else {
            (None, first)
        };
        self.expect(Tok::LParen, "`(`")?;

        let mut args: Vec<(Arg, usize, usize)> = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                let (line, column) = (self.peek().line, self.peek().column);
                args.push((self.arg()?, line, column));
                match self.peek().tok {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RParen => break,
                    _ => return Err(self.error_here("`,` or `)`")),
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;

        let split = args
            .iter()
            .position(|(a, _, _)| matches!(a, Arg::Value(Value::Str(s)) if looks_like_option_name(s)))
            .unwrap_or(args.len());
        let mut rest = args.split_off(split);
        let positional = args.into_iter().map(|(a, _, _)| a).collect();
        let mut options = Vec::new();
        let mut it = rest.drain(..);
        while let Some((name_arg, line, column)) = it.next() {
            let name = match name_arg {
                Arg::Value(Value::Str(s)) => s,
                _ => {
                    return Err(ParseError {
                        line,
                        column,
                        expected: "an option name string in the name-value section".into(),
                    })
                }
            };
            match it.next() {
                Some((Arg::Value(value), _, _)) => options.push(OptionArg { name, value }),
                Some((Arg::Ref(_), line, column)) => {
                    return Err(ParseError {
                        line,
                        column,
                        expected: format!("a literal value for option '{name}'"),
                    })
                }
                None => {
                    return Err(ParseError {
                        line,
                        column,
                        expected: format!("a value after option '{name}'"),
                    })
                }
            }
        }

        Ok(CallNode { assign_to, function, positional, options })
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        match self.peek().tok {
            Tok::Number(x) => {
                self.bump();
                Ok(x)
            }
            _ => Err(self.error_here(what)),
        }
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Number(x) => {
                self.bump();
                Ok(Arg::Value(Value::Number(x)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Arg::Value(Value::Str(s)))
            }
            Tok::LBrace => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    match self.peek().tok.clone() {
                        Tok::RBrace => {
                            self.bump();
                            break;
                        }
                        Tok::Str(s) => {
                            self.bump();
                            items.push(s);
                            if self.peek().tok == Tok::Comma {
                                self.bump();
                            }
                        }
                        _ => return Err(self.error_here("a string or `}` in cell")),
                    }
                }
                Ok(Arg::Value(Value::Cell(items)))
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    match self.peek().tok {
                        Tok::RBracket if !items.is_empty() => {
                            self.bump();
                            break;
                        }
                        Tok::Number(x) => {
                            self.bump();
                            items.push(x);
                            if self.peek().tok == Tok::Comma {
                                self.bump();
                            }
                        }
                        _ => return Err(self.error_here("a number in vector")),
                    }
                }
                Ok(Arg::Value(Value::NumVec(NumVec::List(items))))
            }
            Tok::Ident(name) if name == "logspace" => {
                self.bump();
                self.expect(Tok::LParen, "`(` after logspace")?;
                let start = self.number("logspace start exponent")?;
                self.expect(Tok::Comma, "`,`")?;
                let stop = self.number("logspace stop exponent")?;
                self.expect(Tok::Comma, "`,`")?;
                let here = self.peek().clone();
                let count = self.number("logspace point count")?;
                if count < 1.0 || count.fract() != 0.0 || count > u32::MAX as f64 {
                    return Err(ParseError {
                        line: here.line,
                        column: here.column,
                        expected: "a positive integer point count".into(),
                    });
                }
                self.expect(Tok::RParen, "`)`")?;
                Ok(Arg::Value(Value::NumVec(NumVec::Logspace {
                    start,
                    stop,
                    count: count as u32,
                })))
            }
            Tok::Ident(name) if name == "true" || name == "false" => {
                self.bump();
                Ok(Arg::Value(Value::Flag(name == "true")))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Arg::Ref(name))
            }
            _ => Err(self.error_here("an argument")),
        }
    }
}

pub fn parse_script(text: &str) -> Result<ScriptAst, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.script()
}

/// Parses a single literal value (registry defaults use the same syntax;
/// `on`/`off` are accepted as flags).
pub fn parse_value(text: &str) -> Result<Value, ParseError> {
    let trimmed = text.trim();
    match trimmed {
        "on" => return Ok(Value::Flag(true)),
        "off" => return Ok(Value::Flag(false)),
        _ => {}
    }
    let toks = lex(trimmed)?;
    let mut p = Parser { toks, pos: 0 };
    let arg = p.arg()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error_here("end of value"));
    }
    match arg {
        Arg::Value(v) => Ok(v),
        Arg::Ref(_) => Err(ParseError {
            line: 1,
            column: 1,
            expected: "a literal value".into(),
        }),
    }
}

/// Harvests the script from an LLM response: the last fenced block, or else the
/// longest run of consecutive lines that each parse as a call statement.
pub fn extract_code(response: &str) -> Result<String, NoCodeFound> {
    let lines: Vec<&str> = response.lines().collect();
    let fences: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("```"))
        .map(|(i, _)| i)
        .collect();
    if fences.len() >= 2 {
        let pairs = fences.len() / 2;
        let (open, close) = (fences[2 * (pairs - 1)], fences[2 * (pairs - 1) + 1]);
        let body = lines[open + 1..close].join("\n");
        if !body.trim().is_empty() {
            return Ok(body);
        }
    }

    let mut best: Option<(usize, usize)> = None;
    let mut run_start: Option<usize> = None;
    for i in 0..=lines.len() {
        let ok = i < lines.len() && {
            let l = lines[i].trim();
            !l.is_empty() && parse_script(l).is_ok()
        };
        match (ok, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(bs, be)| i - s > be - bs) {
                    best = Some((s, i));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    best.map(|(s, e)| lines[s..e].join("\n")).ok_or(NoCodeFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_generate_data_call() {
        let ast = parse_script(
            "data = generate_data('case9', 'num.trainSample', 200, 'num.testSample', 150);",
        )
        .unwrap();
        assert_eq!(ast.calls.len(), 1);
        let call = &ast.calls[0];
        assert_eq!(call.assign_to.as_deref(), Some("data"));
        assert_eq!(call.function, "generate_data");
        assert_eq!(call.positional, vec![Arg::Value(Value::Str("case9".into()))]);
        assert_eq!(call.options.len(), 2);
        assert_eq!(call.option("num.testSample"), Some(&Value::Number(150.0)));
    }

    #[test]
    fn parses_cell_positional() {
        let ast = parse_script("rank(data, {'PLS_RECW','TAY'}, 'plot.switch', 0);").unwrap();
        let call = &ast.calls[0];
        assert_eq!(call.positional.len(), 2);
        assert_eq!(call.positional[0], Arg::Ref("data".into()));
        assert_eq!(
            call.positional[1],
            Arg::Value(Value::Cell(vec!["PLS_RECW".into(), "TAY".into()]))
        );
        assert_eq!(call.option("plot.switch"), Some(&Value::Number(0.0)));
    }

    #[test]
    fn empty_argument_is_a_parse_error() {
        let err = parse_script("train(data,, 'x', 1)").unwrap_err();
        assert_eq!((err.line, err.column), (1, 12));
        assert!(err.expected.contains("an argument"), "{err}");
    }

    #[test]
    fn comments_continuations_and_separators() {
        let src = "% header\nd = generate_data('case14', ... wrapped\n 'num.trainSample', 10); m = train(d, 'RR') % tail\n\n";
        let ast = parse_script(src).unwrap();
        assert_eq!(ast.calls.len(), 2);
        assert_eq!(ast.calls[1].function, "train");
    }

    #[test]
    fn logspace_and_vectors() {
        let v = parse_value("logspace(2,5,5)").unwrap();
        let NumVec::Logspace { count, .. } = (match &v {
            Value::NumVec(n) => n.clone(),
            _ => panic!(),
        }) else {
            panic!()
        };
        assert_eq!(count, 5);
        let Value::NumVec(n) = v else { panic!() };
        let pts = n.expand();
        assert_eq!(pts.len(), 5);
        assert!((pts[0] - 100.0).abs() < 1e-9 && (pts[4] - 100000.0).abs() < 1e-6);
        assert!(parse_value("logspace(1,2,0)").is_err());
        assert_eq!(
            parse_value("[1 2, 3]").unwrap(),
            Value::NumVec(NumVec::List(vec![1.0, 2.0, 3.0]))
        );
        assert!(parse_value("[]").is_err());
    }

    #[test]
    fn option_value_must_be_present() {
        let err = parse_script("generate_data('case9', 'num.trainSample')").unwrap_err();
        assert!(err.expected.contains("num.trainSample"));
    }

    #[test]
    fn extract_last_fenced_block() {
        let r = "First:\n```matlab\na = f(1);\n```\nthen\n```\nb = g(2);\n```\ndone";
        assert_eq!(extract_code(r).unwrap(), "b = g(2);");
        let one = "```\nx = generate_data('case9');\n```";
        assert_eq!(extract_code(one).unwrap(), "x = generate_data('case9');");
    }

    #[test]
    fn extract_falls_back_to_statement_runs() {
        let r = "Here you go:\nd = generate_data('case9');\nm = train(d, 'RR');\nThat is all.";
        assert_eq!(
            extract_code(r).unwrap(),
            "d = generate_data('case9');\nm = train(d, 'RR');"
        );
        assert_eq!(extract_code("Just some prose, nothing else."), Err(NoCodeFound));
    }

    #[test]
    fn normalized_equality() {
        assert!(Value::Flag(false).normalized_eq(&Value::Number(0.0)));
        assert!(!Value::Flag(true).normalized_eq(&Value::Number(0.0)));
        let ls = Value::NumVec(NumVec::Logspace { start: 0.0, stop: 2.0, count: 3 });
        assert!(ls.normalized_eq(&Value::NumVec(NumVec::List(vec![1.0, 10.0, 100.0]))));
        assert!(!Value::Str("a".into()).normalized_eq(&Value::Cell(vec!["a".into()])));
    }

    #[test]
    fn pretty_print_escapes_quotes() {
        let ast = parse_script("f('it''s', 'a.b', \"x\")").unwrap();
        let printed = ast.to_string();
        assert_eq!(printed, "f('it''s', 'a.b', 'x');\n");
        assert_eq!(parse_script(&printed).unwrap(), ast);
    }
}
