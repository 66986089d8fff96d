//! Run scripts: environment injections, clock ticks and assertions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, Span};
use crate::expr::{Expr, StaticType, TypeEnv};
use crate::model::Model;
use crate::object::SETTER_PREFIX;
use crate::statechart::RemoteActiveCheck;
use crate::value::{ObjectId, Value, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Inject {
        /// Sending object; `None` is the environment.
        source: Option<String>,
        target: String,
        event: String,
        args: Vec<Value>,
        #[serde(skip)]
        span: Span,
    },
    Tick {
        ms: u64,
        #[serde(skip)]
        span: Span,
    },
    Assert {
        expr: Expr,
        #[serde(skip)]
        span: Span,
    },
}

impl Step {
    pub fn span(&self) -> Span {
        match self {
            Step::Inject { span, .. } | Step::Tick { span, .. } | Step::Assert { span, .. } => *span,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Inject { source, target, event, args, .. } => {
                write!(f, "inject {} {target}.{event}", source.as_deref().unwrap_or("env"))?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            Step::Tick { ms, .. } => write!(f, "tick {ms}ms"),
            Step::Assert { expr, .. } => write!(f, "assert {expr}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<Step>,
}

struct GlobalEnv<'a> {
    model: &'a Model,
    remote: RemoteActiveCheck<'a>,
}

impl TypeEnv for GlobalEnv<'_> {
    fn ident(&self, name: &str) -> Option<StaticType> {
        self.model.store.class_of(&ObjectId::new(name)).ok().map(|c| StaticType::Ref(Some(c.name.clone())))
    }

    fn property(&self, class: &str, prop: &str) -> Option<ValueKind> {
        self.model.store.class_by_name(class)?.property_def(prop).map(|p| p.kind)
    }

    fn check_active(&self, object: Option<&str>, path: &[String]) -> Result<(), String> {
        let Some(o) = object else {
            return Err("`active` in a script needs an object: active(obj, path)".into());
        };
        match self.ident(o) {
            Some(StaticType::Ref(Some(class))) => (self.remote)(&class, path),
            _ => Err(format!("unknown object `{o}`")),
        }
    }
}

/// Checks an injected event against the target's class.
pub fn check_injection(model: &Model, source: Option<&str>, target: &str, event: &str, args: &[Value]) -> Result<(), String> {
    if let Some(s) = source {
        if !model.store.contains(&ObjectId::new(s)) {
            return Err(format!("unknown object `{s}`"));
        }
    }
    let class = model.store.class_of(&ObjectId::new(target)).map_err(|_| format!("unknown object `{target}`"))?;
    match class.event_arity(event) {
        None => return Err(format!("class `{}` does not accept `{event}`", class.name)),
        Some(n) if n != args.len() => return Err(format!("`{event}` takes {n} arguments, got {}", args.len())),
        _ => {}
    }
    if let Some(p) = event.strip_prefix(SETTER_PREFIX).and_then(|p| class.property_def(p)) {
        if !args[0].conforms_to(p.kind) {
            return Err(format!("`{}` is {}, got {}", p.name, p.kind, args[0].kind()));
        }
    }
    for a in args {
        if let Some(o) = a.as_object() {
            if !model.store.contains(o) {
                return Err(format!("unknown object `{o}`"));
            }
        }
    }
    Ok(())
}

impl Script {
    /// Checks every step against a model.
    pub fn validate(&self, model: &Model) -> Vec<Diagnostic> {
        let remote = |class: &str, path: &[String]| -> Result<(), String> {
            let sc = model.statechart_for(class).ok_or_else(|| format!("class `{class}` has no statechart"))?;
            sc.resolve_query_path(&path.join(".")).map(|_| ())
        };
        let env = GlobalEnv { model, remote: &remote };
        let mut out = Vec::new();
        for step in &self.steps {
            let res = match step {
                Step::Inject { source, target, event, args, .. } => {
                    check_injection(model, source.as_deref(), target, event, args)
                }
                Step::Tick { .. } => Ok(()),
                Step::Assert { expr, .. } => match expr.check(&env) {
                    Ok(StaticType::Bool | StaticType::Any) => Ok(()),
                    Ok(t) => Err(format!("assertion `{expr}` is {}, expected bool", t.name())),
                    Err(m) => Err(m),
                },
            };
            if let Err(m) = res {
                out.push(Diagnostic::new(step.span(), m));
            }
        }
        out
    }
}
