//! Runtime values shared by the object store, statecharts and charts.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of an object instance. Objects are named in the model text and
/// never deleted during a run, so the name doubles as a stable reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Int,
    String,
    Bool,
    Ref,
}

impl ValueKind {
    pub fn default_value(self) -> Value {
        match self {
            ValueKind::Int => Value::Int(0),
            ValueKind::String => Value::Str(String::new()),
            ValueKind::Bool => Value::Bool(false),
            ValueKind::Ref => Value::Ref(None),
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ValueKind::Int => "int",
            ValueKind::String => "string",
            ValueKind::Bool => "bool",
            ValueKind::Ref => "ref",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "int" => ValueKind::Int,
            "string" => ValueKind::String,
            "bool" => ValueKind::Bool,
            "ref" => ValueKind::Ref,
            _ => return None,
        })
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A tagged runtime value. `Ref(None)` is the null reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Int(i64),
    Str(String),
    Bool(bool),
    Ref(Option<ObjectId>),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Int(_) => ValueKind::Int,
            Value::Str(_) => ValueKind::String,
            Value::Bool(_) => ValueKind::Bool,
            Value::Ref(_) => ValueKind::Ref,
        }
    }

    pub fn conforms_to(&self, kind: ValueKind) -> bool {
        self.kind() == kind
    }

    pub fn obj(id: impl Into<String>) -> Value {
        Value::Ref(Some(ObjectId(id.into())))
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_object(&self) -> Option<&ObjectId> {
        match self {
            Value::Ref(Some(id)) => Some(id),
            _ => None,
        }
    }

    /// Plain JSON rendering used by the trace format: ints, strings, bools,
    /// object ids as strings and null for the null reference.
    pub fn to_plain_json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Str(s) => serde_json::Value::from(s.as_str()),
            Value::Bool(b) => serde_json::Value::from(*b),
            Value::Ref(Some(id)) => serde_json::Value::from(id.as_str()),
            Value::Ref(None) => serde_json::Value::Null,
        }
    }
}

impl fmt::Display for Value {
    /// Renders the value as a model-text literal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write_quoted(f, s),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Ref(Some(id)) => write!(f, "{id}"),
            Value::Ref(None) => f.write_str("null"),
        }
    }
}

pub(crate) fn write_quoted(f: &mut impl fmt::Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_kind() {
        for kind in [ValueKind::Int, ValueKind::String, ValueKind::Bool, ValueKind::Ref] {
            assert!(kind.default_value().conforms_to(kind));
        }
    }

    #[test]
    fn literal_rendering_escapes_strings() {
        assert_eq!(Value::str("a\"b").to_string(), r#""a\"b""#);
        assert_eq!(Value::Ref(None).to_string(), "null");
        assert_eq!(Value::obj("car1").to_string(), "car1");
    }

    #[test]
    fn plain_json_uses_bare_scalars() {
        assert_eq!(Value::Int(3).to_plain_json().to_string(), "3");
        assert_eq!(Value::obj("t1").to_plain_json().to_string(), "\"t1\"");
        assert_eq!(Value::Ref(None).to_plain_json().to_string(), "null");
    }
}
