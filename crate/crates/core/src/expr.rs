//! The expression language used by guards, chart conditions, binding
//! expressions, query predicates and script assertions.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{ObjectId, Value, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    /// Binding strength; higher binds tighter. All binary operators are
    /// left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    Ident(String),
    Field(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    /// `active(path)` or `active(object, path)`.
    Active { object: Option<String>, path: Vec<String> },
}

impl Expr {
    pub fn int(i: i64) -> Expr {
        Expr::Lit(Value::Int(i))
    }

    pub fn ident(name: &str) -> Expr {
        Expr::Ident(name.to_string())
    }

    pub fn field(base: Expr, name: &str) -> Expr {
        Expr::Field(Box::new(base), name.to_string())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Every bare identifier mentioned by the expression, in first-use order.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) | Expr::Active { .. } => {}
            Expr::Ident(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            Expr::Field(b, _) | Expr::Unary(_, b) => b.collect_idents(out),
            Expr::Binary(_, l, r) => {
                l.collect_idents(out);
                r.collect_idents(out);
            }
            Expr::If(c, a, b) => {
                c.collect_idents(out);
                a.collect_idents(out);
                b.collect_idents(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::If(..) => 0,
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(..) => 7,
            _ => 8,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Int(i)) if *i < 0 => write!(f, "({i})"),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Ident(n) => f.write_str(n),
            Expr::Field(b, n) => {
                b.fmt_child(f, 8)?;
                write!(f, ".{n}")
            }
            Expr::Unary(op, e) => {
                f.write_str(match op {
                    UnOp::Not => "!",
                    UnOp::Neg => "-",
                })?;
                e.fmt_child(f, 7)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                l.fmt_child(f, p)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_child(f, p + 1)
            }
            Expr::If(c, a, b) => {
                f.write_str("if ")?;
                c.fmt_child(f, 1)?;
                f.write_str(" then ")?;
                a.fmt_child(f, 1)?;
                f.write_str(" else ")?;
                b.fmt_child(f, 0)
            }
            Expr::Active { object, path } => {
                f.write_str("active(")?;
                if let Some(o) = object {
                    write!(f, "{o}, ")?;
                }
                write!(f, "{})", path.join("."))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{0}` is not bound yet")]
    Unbound(String),
    #[error("type mismatch: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("null reference dereferenced at `.{0}`")]
    NullReference(String),
    #[error("unknown property `{prop}` on object `{object}`")]
    UnknownProperty { object: String, prop: String },
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown state path `{0}`")]
    UnknownState(String),
    #[error("`active` is not available here")]
    NoStateQuery,
}

/// Runtime name resolution for [`Expr::eval`].
pub trait Scope {
    fn ident(&self, name: &str) -> Result<Value, EvalError>;
    fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError>;
    fn active(&self, object: Option<&ObjectId>, path: &str) -> Result<bool, EvalError>;
}

fn type_err(msg: impl Into<String>) -> EvalError {
    EvalError::Type(msg.into())
}

impl Expr {
    pub fn eval(&self, scope: &dyn Scope) -> Result<Value, EvalError> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Ident(n) => scope.ident(n),
            Expr::Field(base, prop) => match base.eval(scope)? {
                Value::Ref(Some(id)) => scope.property(&id, prop),
                Value::Ref(None) => Err(EvalError::NullReference(prop.clone())),
                other => Err(type_err(format!("`.{prop}` applied to {} value", other.kind()))),
            },
            Expr::Unary(UnOp::Not, e) => match e.eval(scope)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                v => Err(type_err(format!("`!` applied to {}", v.kind()))),
            },
            Expr::Unary(UnOp::Neg, e) => match e.eval(scope)? {
                Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
                v => Err(type_err(format!("`-` applied to {}", v.kind()))),
            },
            Expr::Binary(BinOp::And, l, r) => {
                if expect_bool(l.eval(scope)?)? {
                    Ok(Value::Bool(expect_bool(r.eval(scope)?)?))
                } else {
                    Ok(Value::Bool(false))
                }
            }
            Expr::Binary(BinOp::Or, l, r) => {
                if expect_bool(l.eval(scope)?)? {
                    Ok(Value::Bool(true))
                } else {
                    Ok(Value::Bool(expect_bool(r.eval(scope)?)?))
                }
            }
            Expr::Binary(op, l, r) => apply_binary(*op, l.eval(scope)?, r.eval(scope)?),
            Expr::If(c, a, b) => {
                if expect_bool(c.eval(scope)?)? {
                    a.eval(scope)
                } else {
                    b.eval(scope)
                }
            }
            Expr::Active { object, path } => {
                let obj = match object {
                    Some(o) => match scope.ident(o)? {
                        Value::Ref(Some(id)) => Some(id),
                        v => return Err(type_err(format!("active() target is {}", v.kind()))),
                    },
                    None => None,
                };
                scope.active(obj.as_ref(), &path.join(".")).map(Value::Bool)
            }
        }
    }

    pub fn eval_bool(&self, scope: &dyn Scope) -> Result<bool, EvalError> {
        expect_bool(self.eval(scope)?)
    }
}

fn expect_bool(v: Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        v => Err(type_err(format!("expected bool, found {}", v.kind()))),
    }
}

fn apply_binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    use BinOp::*;
    match op {
        Eq | Ne => {
            if l.kind() != r.kind() {
                return Err(type_err(format!("cannot compare {} with {}", l.kind(), r.kind())));
            }
            Ok(Value::Bool((l == r) == (op == Eq)))
        }
        _ => {
            let (a, b) = match (&l, &r) {
                (Value::Int(a), Value::Int(b)) => (*a, *b),
                _ => {
                    return Err(type_err(format!(
                        "`{}` needs int operands, found {} and {}",
                        op.symbol(),
                        l.kind(),
                        r.kind()
                    )))
                }
            };
            let v = match op {
                Lt => Value::Bool(a < b),
                Le => Value::Bool(a <= b),
                Gt => Value::Bool(a > b),
                Ge => Value::Bool(a >= b),
                Add => Value::Int(a.checked_add(b).ok_or(EvalError::Overflow)?),
                Sub => Value::Int(a.checked_sub(b).ok_or(EvalError::Overflow)?),
                Mul => Value::Int(a.checked_mul(b).ok_or(EvalError::Overflow)?),
                Div | Rem if b == 0 => return Err(EvalError::DivisionByZero),
                Div => Value::Int(a.checked_div(b).ok_or(EvalError::Overflow)?),
                Rem => Value::Int(a.checked_rem(b).ok_or(EvalError::Overflow)?),
                And | Or | Eq | Ne => unreachable!("handled above"),
            };
            Ok(v)
        }
    }
}

/// Static type used while validating expressions at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StaticType {
    Int,
    Str,
    Bool,
    /// Object reference, with its class when statically known.
    Ref(Option<String>),
    /// Unknown until runtime (e.g. chart bind-variables).
    Any,
}

impl StaticType {
    pub fn of_kind(kind: ValueKind) -> StaticType {
        match kind {
            ValueKind::Int => StaticType::Int,
            ValueKind::String => StaticType::Str,
            ValueKind::Bool => StaticType::Bool,
            ValueKind::Ref => StaticType::Ref(None),
        }
    }

    pub fn of_value(v: &Value) -> StaticType {
        StaticType::of_kind(v.kind())
    }

    pub(crate) fn compatible(&self, other: &StaticType) -> bool {
        match (self, other) {
            (StaticType::Any, _) | (_, StaticType::Any) => true,
            (StaticType::Ref(_), StaticType::Ref(_)) => true,
            (a, b) => a == b,
        }
    }

    pub(crate) fn name(&self) -> String {
        match self {
            StaticType::Int => "int".into(),
            StaticType::Str => "string".into(),
            StaticType::Bool => "bool".into(),
            StaticType::Ref(Some(c)) => format!("ref {c}"),
            StaticType::Ref(None) => "ref".into(),
            StaticType::Any => "any".into(),
        }
    }
}

/// Load-time name resolution for [`Expr::check`].
pub trait TypeEnv {
    fn ident(&self, name: &str) -> Option<StaticType>;
    /// Kind of `class.prop`; `None` when the property does not exist.
    fn property(&self, class: &str, prop: &str) -> Option<ValueKind>;
    fn check_active(&self, object: Option<&str>, path: &[String]) -> Result<(), String>;
}

impl Expr {
    /// Resolves every identifier and checks operand types.
    pub fn check(&self, env: &dyn TypeEnv) -> Result<StaticType, String> {
        use StaticType as T;
        match self {
            Expr::Lit(v) => Ok(T::of_value(v)),
            Expr::Ident(n) => env.ident(n).ok_or_else(|| format!("unknown identifier `{n}`")),
            Expr::Field(base, prop) => match base.check(env)? {
                T::Ref(Some(class)) => env
                    .property(&class, prop)
                    .map(T::of_kind)
                    .ok_or_else(|| format!("class `{class}` has no property `{prop}`")),
                T::Ref(None) | T::Any => Ok(T::Any),
                t => Err(format!("`.{prop}` applied to {} value", t.name())),
            },
            Expr::Unary(UnOp::Not, e) => expect(e.check(env)?, T::Bool, "!").map(|_| T::Bool),
            Expr::Unary(UnOp::Neg, e) => expect(e.check(env)?, T::Int, "-").map(|_| T::Int),
            Expr::Binary(op, l, r) => {
                let (lt, rt) = (l.check(env)?, r.check(env)?);
                match op {
                    BinOp::And | BinOp::Or => {
                        expect(lt, T::Bool, op.symbol())?;
                        expect(rt, T::Bool, op.symbol())?;
                        Ok(T::Bool)
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if lt.compatible(&rt) {
                            Ok(T::Bool)
                        } else {
                            Err(format!("cannot compare {} with {}", lt.name(), rt.name()))
                        }
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        expect(lt, T::Int, op.symbol())?;
                        expect(rt, T::Int, op.symbol())?;
                        Ok(T::Bool)
                    }
                    _ => {
                        expect(lt, T::Int, op.symbol())?;
                        expect(rt, T::Int, op.symbol())?;
                        Ok(T::Int)
                    }
                }
            }
            Expr::If(c, a, b) => {
                expect(c.check(env)?, T::Bool, "if")?;
                let (at, bt) = (a.check(env)?, b.check(env)?);
                if !at.compatible(&bt) {
                    return Err(format!("if branches differ: {} vs {}", at.name(), bt.name()));
                }
                Ok(if at == T::Any { bt } else { at })
            }
            Expr::Active { object, path } => {
                if let Some(o) = object {
                    match env.ident(o) {
                        Some(T::Ref(_)) | Some(T::Any) => {}
                        Some(t) => return Err(format!("active() target `{o}` is {}", t.name())),
                        None => return Err(format!("unknown identifier `{o}`")),
                    }
                }
                env.check_active(object.as_deref(), path)?;
                Ok(T::Bool)
            }
        }
    }
}

fn expect(found: StaticType, want: StaticType, ctx: &str) -> Result<(), String> {
    if found.compatible(&want) {
        Ok(())
    } else {
        Err(format!("`{ctx}` expects {}, found {}", want.name(), found.name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    struct Vars(HashMap<&'static str, Value>);

    impl Scope for Vars {
        fn ident(&self, name: &str) -> Result<Value, EvalError> {
            self.0.get(name).cloned().ok_or_else(|| EvalError::UnknownIdentifier(name.into()))
        }
        fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError> {
            Err(EvalError::UnknownProperty { object: object.0.clone(), prop: prop.into() })
        }
        fn active(&self, _: Option<&ObjectId>, _: &str) -> Result<bool, EvalError> {
            Err(EvalError::NoStateQuery)
        }
    }

    fn vars() -> Vars {
        Vars(HashMap::from([("x", Value::Int(4)), ("s", Value::str("on")), ("b", Value::Bool(true))]))
    }

    #[test]
    fn arithmetic_and_comparison() {
        let e = Expr::binary(
            BinOp::Eq,
            Expr::binary(BinOp::Add, Expr::ident("x"), Expr::int(1)),
            Expr::int(5),
        );
        assert_eq!(e.eval(&vars()), Ok(Value::Bool(true)));
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = Expr::binary(BinOp::Div, Expr::ident("x"), Expr::int(0));
        assert_eq!(e.eval(&vars()), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn short_circuit_skips_bad_rhs() {
        let e = Expr::binary(BinOp::Or, Expr::ident("b"), Expr::ident("missing"));
        assert_eq!(e.eval(&vars()), Ok(Value::Bool(true)));
    }

    #[test]
    fn mixed_kind_equality_is_a_type_error() {
        let e = Expr::binary(BinOp::Eq, Expr::ident("x"), Expr::ident("s"));
        assert!(matches!(e.eval(&vars()), Err(EvalError::Type(_))));
    }

    #[test]
    fn conditional_picks_branch() {
        let e = Expr::If(
            Box::new(Expr::binary(BinOp::Eq, Expr::ident("s"), Expr::Lit(Value::str("on")))),
            Box::new(Expr::Lit(Value::str("off"))),
            Box::new(Expr::Lit(Value::str("on"))),
        );
        assert_eq!(e.eval(&vars()), Ok(Value::str("off")));
    }

    #[test]
    fn display_parenthesizes_by_precedence() {
        let e = Expr::binary(
            BinOp::Mul,
            Expr::binary(BinOp::Add, Expr::ident("a"), Expr::ident("b")),
            Expr::ident("c"),
        );
        assert_eq!(e.to_string(), "(a + b) * c");
        let e = Expr::binary(
            BinOp::Sub,
            Expr::ident("a"),
            Expr::binary(BinOp::Sub, Expr::ident("b"), Expr::ident("c")),
        );
        assert_eq!(e.to_string(), "a - (b - c)");
    }
}
