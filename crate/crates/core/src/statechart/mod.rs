//! Hierarchical statecharts: declarations, validation into a flat arena, and a
//! deterministic run-to-completion interpreter per machine instance.

mod machine;
mod spec;
#[cfg(test)]
mod tests;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Span;
use crate::expr::Expr;
use crate::value::{Value, ValueKind};

pub use machine::{ArmedTimer, MachineInstance, MachineState, NoPeers, PeerStates, RunError, StepResult, MAX_MICROSTEPS};
pub use spec::{RegionId, RemoteActiveCheck, StateId, StateKind, StatechartSpec, TransitionId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub kind: ValueKind,
    pub default: Option<Value>,
    #[serde(skip)]
    pub span: Span,
}

impl VarDecl {
    pub fn initial(&self) -> Value {
        self.default.clone().unwrap_or_else(|| self.kind.default_value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatechartDef {
    pub name: String,
    pub owner_class: String,
    pub variables: Vec<VarDecl>,
    /// Top-level regions; a single unnamed region when the statechart lists
    /// its states directly.
    pub regions: Vec<RegionDef>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionDef {
    pub name: Option<String>,
    pub initial: Option<String>,
    pub states: Vec<StateDef>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateDefKind {
    State,
    Final,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDef {
    pub name: String,
    pub kind: StateDefKind,
    pub entry: Vec<Action>,
    pub exit: Vec<Action>,
    pub transitions: Vec<TransitionDef>,
    /// Child regions: none for a basic state, one (usually unnamed) for a
    /// compound state, two or more named ones for an orthogonal state.
    pub regions: Vec<RegionDef>,
    #[serde(skip)]
    pub span: Span,
}

impl StateDef {
    pub fn basic(name: &str) -> Self {
        StateDef {
            name: name.to_string(),
            kind: StateDefKind::State,
            entry: vec![],
            exit: vec![],
            transitions: vec![],
            regions: vec![],
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    Event { name: String, params: Vec<String> },
    After(u64),
    Every(u64),
    /// Guarded branch out of a choice node.
    Branch,
    /// The else-branch of a choice node.
    Else,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDef {
    pub trigger: Trigger,
    pub guard: Option<Expr>,
    /// Target state path; `None` for an internal transition.
    pub target: Option<Vec<String>>,
    pub actions: Vec<Action>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Name(String),
    Field(Expr, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Assign { target: LValue, value: Expr },
    /// Internal event, processed as a further microstep of the same step.
    Raise { event: String, args: Vec<Expr> },
    /// Outgoing event, handed to the coordinator after the step.
    Emit { target: Expr, event: String, args: Vec<Expr> },
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Assign { target: LValue::Name(n), value } => write!(f, "{n} := {value}"),
            Action::Assign { target: LValue::Field(base, n), value } => {
                let base = Expr::Field(Box::new(base.clone()), n.clone());
                write!(f, "{base} := {value}")
            }
            Action::Raise { event, args } => {
                write!(f, "raise {event}")?;
                write_args(f, args)
            }
            Action::Emit { target, event, args } => {
                let base = Expr::Field(Box::new(target.clone()), event.clone());
                write!(f, "emit {base}")?;
                write_args(f, args)
            }
        }
    }
}

impl StatechartDef {
    /// Full dotted paths of every state and named region, in document order.
    pub fn state_paths(&self) -> Vec<String> {
        fn walk(regions: &[RegionDef], prefix: &str, out: &mut Vec<String>) {
            for r in regions {
                let base = match &r.name {
                    Some(n) => {
                        let p = join(prefix, n);
                        out.push(p.clone());
                        p
                    }
                    None => prefix.to_string(),
                };
                for s in &r.states {
                    let p = join(&base, &s.name);
                    out.push(p.clone());
                    walk(&s.regions, &p, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.regions, "", &mut out);
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Whether `path` names `full` exactly or as a dotted suffix.
pub(crate) fn path_matches(full: &str, path: &str) -> bool {
    full == path || (full.len() > path.len() && full.ends_with(path) && full.as_bytes()[full.len() - path.len() - 1] == b'.')
}
