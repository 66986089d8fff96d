//! Live sequence charts: declarations, validation into per-lifeline location
//! lanes, and the cut semantics of individual chart copies.

mod active;
mod chart;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Span;
use crate::expr::Expr;
use crate::value::ObjectId;

pub use active::{ActiveChart, Advance, ChartStatus, EnabledMessage, LscContext, Violation, ViolationKind};
pub use chart::ChartSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Triggered by the engine once enabled.
    Exec,
    /// Only observed.
    Mon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Temp {
    Hot,
    Cold,
}

impl Mode {
    pub fn keyword(self) -> &'static str {
        match self {
            Mode::Exec => "exec",
            Mode::Mon => "mon",
        }
    }

    /// Temperature assumed when a message omits it.
    pub fn default_temp(self) -> Temp {
        match self {
            Mode::Exec => Temp::Hot,
            Mode::Mon => Temp::Cold,
        }
    }
}

impl Temp {
    pub fn keyword(self) -> &'static str {
        match self {
            Temp::Hot => "hot",
            Temp::Cold => "cold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifelineBinding {
    Concrete(ObjectId),
    /// Bound on first unification, or eagerly by query when a binding
    /// expression is given.
    Symbolic(Option<Expr>),
    /// Ranges over every matching instance inside `loop each`.
    All(Option<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifelineDef {
    pub name: String,
    pub class: String,
    pub binding: LifelineBinding,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Env,
    Lifeline(String),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Env => f.write_str("env"),
            Endpoint::Lifeline(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgTerm {
    /// Must equal the evaluated expression.
    Expr(Expr),
    /// `?name`: binds on first match, must equal afterwards.
    Bind(String),
}

impl fmt::Display for ArgTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgTerm::Expr(e) => write!(f, "{e}"),
            ArgTerm::Bind(n) => write!(f, "?{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageDef {
    pub from: Endpoint,
    pub to: String,
    pub name: String,
    pub args: Vec<ArgTerm>,
    pub mode: Mode,
    pub temp: Temp,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopKind {
    Count(u64),
    While(Expr),
    /// Iterates the instances of an `all` lifeline in creation order.
    Each(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForbidDef {
    pub from: Endpoint,
    pub to: String,
    pub name: String,
    /// `None` forbids the event with any arguments.
    pub args: Option<Vec<ArgTerm>>,
    pub start: String,
    pub end: String,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementDef {
    Message(MessageDef),
    Sync {
        lifelines: Vec<String>,
        #[serde(skip)]
        span: Span,
    },
    /// Spans the listed lifelines, or all of them when the list is empty.
    Cond {
        lifelines: Vec<String>,
        expr: Expr,
        temp: Temp,
        #[serde(skip)]
        span: Span,
    },
    Loop {
        kind: LoopKind,
        body: Vec<ElementDef>,
        #[serde(skip)]
        span: Span,
    },
    Forbid(ForbidDef),
    /// A named location shared by all lifelines.
    Label {
        name: String,
        #[serde(skip)]
        span: Span,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartDef {
    pub name: String,
    pub lifelines: Vec<LifelineDef>,
    pub body: Vec<ElementDef>,
    #[serde(skip)]
    pub span: Span,
}
