use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::{ObjectId, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Env,
    Object(ObjectId),
}

impl Source {
    pub fn object(&self) -> Option<&ObjectId> {
        match self {
            Source::Env => None,
            Source::Object(o) => Some(o),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Env => f.write_str("env"),
            Source::Object(o) => write!(f, "{o}"),
        }
    }
}

/// Who produced an event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Environment,
    /// Emitted by the statechart machine owned by this object.
    Statechart(ObjectId),
    /// Executed by a chart copy; `element` is the message's element index.
    Lsc { chart: String, copy: u64, element: usize },
    Timer(ObjectId),
}

impl Origin {
    pub fn is_lsc(&self) -> bool {
        matches!(self, Origin::Lsc { .. })
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Environment => f.write_str("env"),
            Origin::Statechart(m) => write!(f, "sc:{m}"),
            Origin::Lsc { chart, copy, .. } => write!(f, "lsc:{chart}#{copy}"),
            Origin::Timer(m) => write!(f, "timer:{m}"),
        }
    }
}

/// Identifies the arming of a timed transition that produced a timer event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimerTag {
    pub transition: usize,
    pub generation: u64,
}

/// One concrete directed communication between objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventInstance {
    pub source: Source,
    pub target: ObjectId,
    pub name: String,
    pub args: Vec<Value>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timer: Option<TimerTag>,
}

impl EventInstance {
    pub fn env(target: &str, name: &str, args: Vec<Value>) -> Self {
        EventInstance {
            source: Source::Env,
            target: ObjectId::new(target),
            name: name.to_string(),
            args,
            origin: Origin::Environment,
            timer: None,
        }
    }

    pub fn between(source: &str, target: &str, name: &str, args: Vec<Value>, origin: Origin) -> Self {
        EventInstance {
            source: Source::Object(ObjectId::new(source)),
            target: ObjectId::new(target),
            name: name.to_string(),
            args,
            origin,
            timer: None,
        }
    }

    /// Same message irrespective of who produced it.
    pub fn same_message(&self, other: &EventInstance) -> bool {
        self.source == other.source && self.target == other.target && self.name == other.name && self.args == other.args
    }
}

impl fmt::Display for EventInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}.{}(", self.source, self.target, self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_forms() {
        let ev = EventInstance::between("a", "b", "f", vec![Value::Int(1), Value::Str("x".into())], Origin::Environment);
        assert_eq!(ev.to_string(), r#"a -> b.f(1, "x")"#);
        assert_eq!(EventInstance::env("a", "g", vec![]).to_string(), "env -> a.g()");
        let lsc = Origin::Lsc { chart: "C".into(), copy: 4, element: 2 };
        assert_eq!(lsc.to_string(), "lsc:C#4");
        assert_eq!(Origin::Statechart(ObjectId::new("m")).to_string(), "sc:m");
        assert_eq!(Origin::Timer(ObjectId::new("m")).to_string(), "timer:m");
    }

    #[test]
    fn same_message_ignores_origin() {
        let a = EventInstance::between("a", "b", "f", vec![], Origin::Environment);
        let b = EventInstance::between("a", "b", "f", vec![], Origin::Statechart(ObjectId::new("a")));
        assert!(a.same_message(&b));
        assert_ne!(a, b);
        assert!(!a.same_message(&EventInstance::env("b", "f", vec![])));
    }
}
