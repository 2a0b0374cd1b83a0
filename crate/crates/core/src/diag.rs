//! Compiler-style diagnostics.

use serde::Serialize;

use crate::ast::Span;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub span: Span,
}

impl Diagnostic {
    pub fn new(code: &str, message: impl Into<String>, span: Span) -> Self {
        Diagnostic { code: code.to_string(), message: message.into(), span }
    }

    /// `file:line:col: error[CODE]: message`
    pub fn render(&self, file: &str, color: bool) -> String {
        let label = if color { "\x1b[1;31merror\x1b[0m" } else { "error" };
        format!("{file}:{}:{}: {label}[{}]: {}", self.span.line, self.span.col, self.code, self.message)
    }

    pub fn to_json(&self, file: &str) -> serde_json::Value {
        serde_json::json!({
            "code": self.code,
            "message": self.message,
            "file": file,
            "line": self.span.line,
            "col": self.span.col,
        })
    }
}

/// Stable diagnostic codes.
pub mod codes {
    pub const PARSE: &str = "P001";
    pub const NON_EXHAUSTIVE: &str = "P002";
    pub const DUPLICATE_FN: &str = "WF001";
    pub const DUPLICATE_COMPOSITE: &str = "WF002";
    pub const UNKNOWN_TYPE: &str = "WF003";
    pub const INFINITE_SIZE: &str = "WF004";
    pub const EMPTY_COMPOSITE: &str = "WF005";
    pub const UNKNOWN_FN: &str = "WF006";
    pub const ILL_TYPED: &str = "WF008";
    pub const NESTED_MOVE: &str = "WF009";
    pub const STRAY_JUMP: &str = "WF010";
    pub const WRONG_DIALECT: &str = "WF011";
    pub const TYPE_MISMATCH: &str = "WF012";
    pub const AGGREGATE_ABI: &str = "WF013";
    pub const ARITY: &str = "WF014";
    pub const DUPLICATE_VAR: &str = "WF017";
    pub const USE_OF_MOVED: &str = "OWN001";
    pub const MOVE_OF_MOVED: &str = "OWN002";
    pub const DROP_TARGET_UNKNOWN: &str = "OWN003";
    pub const UNINITIALIZED_USE: &str = "OWN004";
    pub const UNTRACKED_MOVE: &str = "OWN005";
}
