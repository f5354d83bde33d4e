//! A small text language for pulse programs.
//!
//! ```text
//! program  := "seq" IDENT "{" stmt* "}"
//! stmt     := cycle | pulse | delay
//! cycle    := "cycle" IDENT "[" NUMBER ("," NUMBER)* "]" ";"
//! pulse    := "pulse" IDENT? "angle=" NUMBER "phase=" NUMBER ("dur=" TIME)? ";"
//! delay    := "delay" (TIME | IDENT) ";"
//! TIME     := NUMBER ("ns"|"us"|"ms"|"s")
//! ```
//!
//! Angles and phases are written in degrees; `#` starts a line comment.

mod check;
mod lexer;
mod parser;
mod print;

use std::fmt;

pub use check::{compile, validate, BindingMode, CompileError, Diagnostic, Severity};
pub use parser::{parse, parse_all};
pub use print::pretty_print;

/// Byte range plus the 1-based line/column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Ns,
    Us,
    Ms,
    S,
}

impl TimeUnit {
    pub fn from_suffix(s: &str) -> Option<TimeUnit> {
        match s {
            "ns" => Some(TimeUnit::Ns),
            "us" => Some(TimeUnit::Us),
            "ms" => Some(TimeUnit::Ms),
            "s" => Some(TimeUnit::S),
            _ => None,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            TimeUnit::Ns => "ns",
            TimeUnit::Us => "us",
            TimeUnit::Ms => "ms",
            TimeUnit::S => "s",
        }
    }

    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Ns => 1e-9,
            TimeUnit::Us => 1e-6,
            TimeUnit::Ms => 1e-3,
            TimeUnit::S => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeLit {
    pub value: f64,
    pub unit: TimeUnit,
}

impl TimeLit {
    pub fn seconds(&self) -> f64 {
        self.value * self.unit.seconds()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelaySpec {
    Time(TimeLit),
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Cycle {
        label: String,
        /// Degrees.
        phases: Vec<f64>,
    },
    Pulse {
        label: Option<String>,
        /// Degrees.
        angle: f64,
        /// Degrees.
        phase: f64,
        dur: Option<TimeLit>,
    },
    Delay(DelaySpec),
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

/// Spans are source bookkeeping and do not take part in structural equality.
impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone)]
pub struct SequenceAst {
    pub name: String,
    pub statements: Vec<Stmt>,
    pub span: Span,
}

impl PartialEq for SequenceAst {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.statements == other.statements
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    DuplicateName,
    UnknownUnit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {} (at '{}')",
            self.line, self.column, self.message, self.token
        )
    }
}

impl std::error::Error for ParseError {}
