//! Lightweight static syntax checks: bracket, quote and comment balance for
//! every language, plus indentation structure for Python. A full parser can
//! be plugged in as an external process with [`ExternalChecker`].

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeLanguage {
    Python,
    Javascript,
    Java,
    C,
    Other,
}

impl FromStr for CodeLanguage {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "python" | "py" => CodeLanguage::Python,
            "javascript" | "js" => CodeLanguage::Javascript,
            "java" => CodeLanguage::Java,
            "c" | "h" => CodeLanguage::C,
            _ => CodeLanguage::Other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based.
    pub line: usize,
    pub message: String,
    #[serde(default = "error_severity")]
    pub severity: Severity,
}

fn error_severity() -> Severity {
    Severity::Error
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxVerdict {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl SyntaxVerdict {
    fn from_diagnostics(mut diagnostics: Vec<Diagnostic>) -> Self {
        diagnostics.sort_by_key(|d| d.line);
        SyntaxVerdict {
            ok: !diagnostics.iter().any(|d| d.severity == Severity::Error),
            diagnostics,
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        line,
        message: message.into(),
        severity: Severity::Error,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LineInfo {
    /// Bracket depth when the line starts.
    depth: usize,
    /// Line starts inside a string or block comment.
    in_literal: bool,
    /// Last significant character outside strings and comments.
    last_sig: Option<char>,
    /// Previous line ended with a backslash continuation.
    continued: bool,
}

struct Scanner<'a> {
    chars: Vec<char>,
    lang: CodeLanguage,
    pos: usize,
    line: usize,
    lines: Vec<LineInfo>,
    stack: Vec<(char, usize)>,
    diags: Vec<Diagnostic>,
    _src: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str, lang: CodeLanguage) -> Self {
        Scanner {
            chars: src.chars().collect(),
            lang,
            pos: 0,
            line: 1,
            lines: vec![LineInfo::default()],
            stack: Vec::new(),
            diags: Vec::new(),
            _src: src,
        }
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn newline(&mut self, in_literal: bool) {
        let prev_backslash = self.lines[self.line - 1].last_sig == Some('\\');
        self.line += 1;
        self.lines.push(LineInfo {
            depth: self.stack.len(),
            in_literal,
            last_sig: None,
            continued: prev_backslash && !in_literal,
        });
    }

    fn mark(&mut self, c: char) {
        self.lines[self.line - 1].last_sig = Some(c);
    }

    fn skip_to_eol(&mut self) {
        while let Some(c) = self.peek(0) {
            if c == '\n' {
                break;
            }
            self.pos += 1;
        }
    }

    fn block_comment(&mut self) {
        let start = self.line;
        self.pos += 2;
        loop {
            match self.peek(0) {
                None => {
                    self.diags.push(err(start, "unterminated block comment"));
                    return;
                }
                Some('*') if self.peek(1) == Some('/') => {
                    self.pos += 2;
                    return;
                }
                Some('\n') => {
                    self.pos += 1;
                    self.newline(true);
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    /// Quote run of length 1 or 3; `multiline` strings may contain newlines.
    fn string(&mut self, quote: char, len: usize, multiline: bool) {
        let start = self.line;
        self.pos += len;
        loop {
            match self.peek(0) {
                None => {
                    let what = if len == 3 { "triple-quoted string" } else { "string literal" };
                    self.diags.push(err(start, format!("unterminated {what}")));
                    return;
                }
                Some('\\') => {
                    if self.peek(1) == Some('\n') {
                        self.pos += 2;
                        self.newline(true);
                    } else {
                        self.pos += 2;
                    }
                }
                Some('\n') if !multiline => {
                    self.diags.push(err(start, "unterminated string literal"));
                    return;
                }
                Some('\n') => {
                    self.pos += 1;
                    self.newline(true);
                }
                Some(c) if c == quote && (1..len).all(|k| self.peek(k) == Some(quote)) => {
                    self.pos += len;
                    self.mark(quote);
                    return;
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    fn bracket(&mut self, c: char) {
        match c {
            '(' | '[' | '{' => self.stack.push((c, self.line)),
            _ => {
                let open = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                match self.stack.last() {
                    Some(&(o, _)) if o == open => {
                        self.stack.pop();
                    }
                    Some(&(o, l)) => {
                        self.diags.push(err(
                            self.line,
                            format!("mismatched '{c}' (expected closer for '{o}' opened on line {l})"),
                        ));
                        self.stack.pop();
                    }
                    None => self.diags.push(err(self.line, format!("unexpected '{c}'"))),
                }
            }
        }
        self.mark(c);
    }

    fn run(mut self) -> (Vec<LineInfo>, Vec<Diagnostic>) {
        let c_like = matches!(
            self.lang,
            CodeLanguage::Javascript | CodeLanguage::Java | CodeLanguage::C
        );
        while let Some(c) = self.peek(0) {
            match c {
                '\n' => {
                    self.pos += 1;
                    self.newline(false);
                }
                '#' if self.lang == CodeLanguage::Python => self.skip_to_eol(),
                '/' if c_like && self.peek(1) == Some('/') => self.skip_to_eol(),
                '/' if c_like && self.peek(1) == Some('*') => self.block_comment(),
                '"' | '\'' if self.lang == CodeLanguage::Python => {
                    let triple = self.peek(1) == Some(c) && self.peek(2) == Some(c);
                    if triple {
                        self.string(c, 3, true);
                    } else {
                        self.string(c, 1, false);
                    }
                }
                '"' if self.lang == CodeLanguage::Java
                    && self.peek(1) == Some('"')
                    && self.peek(2) == Some('"') =>
                {
                    self.string('"', 3, true)
                }
                '"' | '\'' if c_like => self.string(c, 1, false),
                '`' if self.lang == CodeLanguage::Javascript => self.string('`', 1, true),
                '"' if self.lang == CodeLanguage::Other => self.string('"', 1, false),
                '(' | ')' | '[' | ']' | '{' | '}' => {
                    self.bracket(c);
                    self.pos += 1;
                }
                c if c.is_whitespace() => self.pos += 1,
                c => {
                    self.mark(c);
                    self.pos += 1;
                }
            }
        }
        for &(o, l) in &self.stack {
            self.diags.push(err(l, format!("unclosed '{o}'")));
        }
        (self.lines, self.diags)
    }
}

fn python_indentation(src: &str, info: &[LineInfo], diags: &mut Vec<Diagnostic>) {
    let mut stack = vec![0usize];
    let mut prev_sig: Option<char> = None;
    let mut last_line = 0;
    for (idx, line) in src.split('\n').enumerate() {
        let li = info.get(idx).copied().unwrap_or_default();
        let lineno = idx + 1;
        let trimmed = line.trim_start_matches([' ', '\t']);
        let logical_start = li.depth == 0 && !li.in_literal && !li.continued;
        if logical_start && !trimmed.is_empty() && !trimmed.starts_with('#') && !trimmed.starts_with('\r') {
            let indent = &line[..line.len() - trimmed.len()];
            if indent.contains(' ') && indent.contains('\t') {
                diags.push(err(lineno, "inconsistent use of tabs and spaces in indentation"));
            }
            let width: usize = indent.chars().map(|c| if c == '\t' { 8 } else { 1 }).sum();
            let top = *stack.last().unwrap();
            if prev_sig == Some(':') {
                if width > top {
                    stack.push(width);
                } else {
                    diags.push(err(lineno, "expected an indented block"));
                }
            } else if width > top {
                diags.push(err(lineno, "unexpected indent"));
            } else if width < top {
                while *stack.last().unwrap() > width {
                    stack.pop();
                }
                if *stack.last().unwrap() != width {
                    diags.push(err(lineno, "unindent does not match any outer indentation level"));
                }
            }
        }
        if li.last_sig.is_some() {
            prev_sig = li.last_sig;
            last_line = lineno;
        }
    }
    if prev_sig == Some(':') {
        diags.push(err(last_line, "expected an indented block after ':'"));
    }
}

/// Built-in checker. Deterministic; `ok == false` always carries at least
/// one diagnostic.
pub fn check_code_syntax(snippet: &str, language: CodeLanguage) -> SyntaxVerdict {
    let (info, mut diags) = Scanner::new(snippet, language).run();
    if language == CodeLanguage::Python {
        python_indentation(snippet, &info, &mut diags);
    }
    SyntaxVerdict::from_diagnostics(diags)
}

/// An external checker process. It receives the snippet on stdin and the
/// language as `--language <name>`, and must print
/// `{"diagnostics": [{"line": n, "message": s, "severity": "error"|"warning"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalChecker {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Deserialize)]
struct ExternalOutput {
    diagnostics: Vec<Diagnostic>,
}

fn checker_failed(why: impl std::fmt::Display) -> SyntaxVerdict {
    SyntaxVerdict {
        ok: false,
        diagnostics: vec![err(0, format!("checker failed: {why}"))],
    }
}

pub fn check_with_external(
    snippet: &str,
    language: CodeLanguage,
    checker: &ExternalChecker,
) -> SyntaxVerdict {
    let lang = serde_json::to_value(language)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let child = Command::new(&checker.program)
        .args(&checker.args)
        .arg("--language")
        .arg(lang)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => return checker_failed(e),
    };
    if let Some(mut stdin) = child.stdin.take() {
        // A checker that exits early closes the pipe; its exit status
        // decides the verdict below.
        let _ = stdin.write_all(snippet.as_bytes());
    }
    let out = match child.wait_with_output() {
        Ok(o) => o,
        Err(e) => return checker_failed(e),
    };
    if !out.status.success() {
        return checker_failed(format!("exit status {}", out.status));
    }
    match serde_json::from_slice::<ExternalOutput>(&out.stdout) {
        Ok(parsed) => {
            let mut v = SyntaxVerdict::from_diagnostics(parsed.diagnostics);
            if !v.ok && v.diagnostics.is_empty() {
                v.diagnostics.push(err(0, "checker reported failure"));
            }
            v
        }
        Err(e) => checker_failed(format!("unparseable output: {e}")),
    }
}
