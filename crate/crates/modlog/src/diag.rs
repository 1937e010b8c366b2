//! Source spans and diagnostics shared by every compilation stage.

use serde::Serialize;
use std::fmt;

/// A location in a source file: 1-based line and column plus the length in
/// characters of the offending region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub len: u32,
}

impl Span {
    pub fn new(line: u32, col: u32, len: u32) -> Self {
        Span { line, col, len }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Warning => write!(f, "warning"),
            Severity::Error => write!(f, "error"),
        }
    }
}

/// Stable diagnostic codes, grouped by stage.
pub mod codes {
    pub const LEX_UNTERMINATED_STRING: &str = "E001";
    pub const LEX_ILLEGAL_CHAR: &str = "E002";
    pub const PARSE_SYNTAX: &str = "E010";
    pub const PARSE_DUPLICATE_MODULE: &str = "E011";
    pub const TYPE_UNRESOLVED: &str = "E101";
    pub const TYPE_EMPTY: &str = "E102";
    pub const TYPE_RESERVED: &str = "E103";
    pub const TYPE_ARITY: &str = "E104";
    pub const COMPOSE_CONFLICT: &str = "E201";
    pub const LOOKUP_UNRESOLVED: &str = "E210";
    pub const LOOKUP_AMBIGUOUS: &str = "E211";
    pub const ELAB_KIND_CLASH: &str = "E301";
    pub const ELAB_UNKNOWN_MODULE: &str = "E302";
    pub const ELAB_CYCLIC_SYMCONST: &str = "E303";
    pub const ELAB_ILL_TYPED_FACT: &str = "E304";
    pub const ELAB_NOT_NEW_KIND: &str = "E305";
    pub const ELAB_UNBOUND_VAR: &str = "E306";
    pub const ELAB_STRATIFY: &str = "E307";
    pub const ELAB_BAD_ACCESSOR: &str = "E308";
    pub const ELAB_RULE_TYPE: &str = "E309";
    pub const ELAB_AMBIGUOUS_REWRITE: &str = "E310";
    pub const ELAB_SIGNATURE: &str = "E311";
    pub const ELAB_DOMAIN_MISMATCH: &str = "E312";
    pub const ELAB_PIPELINE: &str = "E313";
    pub const RUN_REQUIRES: &str = "E401";
    pub const RUN_ENSURES: &str = "E402";
    pub const RUN_FACT_CAP: &str = "E403";
    pub const RUN_BAD_OUTPUT: &str = "E404";
    pub const WARN_NO_MODULES: &str = "W001";
}

/// A single diagnostic, renderable as `file:line:col: severity: message` or
/// as one element of the machine-readable JSON array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diag {
    pub path: String,
    pub line: u32,
    pub col: u32,
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl Diag {
    pub fn error(path: impl Into<String>, span: Span, code: &str, message: impl Into<String>) -> Self {
        Diag {
            path: path.into(),
            line: span.line,
            col: span.col,
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn warning(path: impl Into<String>, span: Span, code: &str, message: impl Into<String>) -> Self {
        Diag {
            path: path.into(),
            line: span.line,
            col: span.col,
            severity: Severity::Warning,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}: {}",
            self.path, self.line, self.col, self.severity, self.message
        )
    }
}

/// Orders diagnostics for stable presentation.
pub fn sort_diags(diags: &mut [Diag]) {
    diags.sort_by(|a, b| {
        (&a.path, a.line, a.col, &a.code, &a.message).cmp(&(&b.path, b.line, b.col, &b.code, &b.message))
    });
}
