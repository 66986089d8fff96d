//! Model text: the `.rxm` model language, the `.rxs` script language and a
//! canonical serializer. See `docs/grammar.md` for the grammar.

mod lexer;
mod parser;
mod serialize;

use std::fmt;

use thiserror::Error;

use crate::diag::{Diagnostic, Span};
use crate::expr::Expr;
use crate::model::{Model, ModelBundle};
use crate::script::Script;

pub use serialize::serialize_model;

use parser::Parser;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
    /// The offending source line.
    pub excerpt: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.file, self.line, self.col, self.message)
    }
}

impl ParseError {
    /// Message plus the source line and a caret under the column.
    pub fn render(&self) -> String {
        let pad = " ".repeat(self.col.saturating_sub(1) as usize);
        format!("{self}\n  | {}\n  | {pad}^", self.excerpt)
    }
}

/// A named piece of source text.
#[derive(Debug, Clone, Copy)]
pub struct Source<'a> {
    pub name: &'a str,
    pub text: &'a str,
}

fn make_error(sources: &[Source<'_>], span: Span, message: String) -> ParseError {
    let src = sources.get(span.file as usize);
    let excerpt = src
        .and_then(|s| s.text.lines().nth(span.line.saturating_sub(1) as usize))
        .unwrap_or("")
        .to_string();
    ParseError {
        file: src.map(|s| s.name).unwrap_or("<input>").to_string(),
        line: span.line,
        col: span.col,
        message,
        excerpt,
    }
}

fn diagnostics(sources: &[Source<'_>], diags: Vec<Diagnostic>) -> Vec<ParseError> {
    diags.into_iter().map(|d| make_error(sources, d.span, d.message)).collect()
}

/// Parses model text without validating cross-references.
pub fn parse_bundle(sources: &[Source<'_>]) -> Result<ModelBundle, Vec<ParseError>> {
    let mut bundle = ModelBundle::default();
    let mut errors = Vec::new();
    for (i, s) in sources.iter().enumerate() {
        let mut p = Parser::new(s.text, i as u32);
        let b = p.bundle();
        errors.extend(p.errors.into_iter().map(|(span, m)| make_error(sources, span, m)));
        bundle.extend(b);
    }
    if errors.is_empty() {
        Ok(bundle)
    } else {
        Err(errors)
    }
}

/// Parses and validates one or more model files into a runnable model.
/// Scripts embedded in the files are checked against the model.
pub fn load_model(sources: &[Source<'_>]) -> Result<Model, Vec<ParseError>> {
    let bundle = parse_bundle(sources)?;
    let model = Model::from_bundle(bundle).map_err(|d| diagnostics(sources, d))?;
    let diags: Vec<Diagnostic> = model.bundle.scripts.iter().flat_map(|s| s.validate(&model)).collect();
    if diags.is_empty() {
        Ok(model)
    } else {
        Err(diagnostics(sources, diags))
    }
}

/// Parses and validates a single model text.
pub fn parse_model(text: &str) -> Result<ModelBundle, Vec<ParseError>> {
    load_model(&[Source { name: "<input>", text }]).map(|m| m.bundle)
}

/// Parses a script and checks it against `model`.
pub fn parse_script(text: &str, model: &Model) -> Result<Script, Vec<ParseError>> {
    parse_script_named("<script>", text, model)
}

pub fn parse_script_named(name: &str, text: &str, model: &Model) -> Result<Script, Vec<ParseError>> {
    let sources = [Source { name, text }];
    let mut p = Parser::new(text, 0);
    let script = p.script_file();
    if !p.errors.is_empty() {
        return Err(p.errors.into_iter().map(|(span, m)| make_error(&sources, span, m)).collect());
    }
    let diags = script.validate(model);
    if diags.is_empty() {
        Ok(script)
    } else {
        Err(diagnostics(&sources, diags))
    }
}

/// Parses a standalone expression, as used by assertions and queries.
pub fn parse_expr(text: &str) -> Result<Expr, Vec<ParseError>> {
    let sources = [Source { name: "<expr>", text }];
    let mut p = Parser::new(text, 0);
    let e = p.expr();
    if e.is_ok() && !p.at_end() {
        let _ = p.trailing();
    }
    match e {
        Ok(e) if p.errors.is_empty() => Ok(e),
        _ => Err(p.errors.into_iter().map(|(span, m)| make_error(&sources, span, m)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::expr::{BinOp, UnOp};
    use crate::script::Step;
    use crate::value::Value;

    const SWITCH: &str = r#"
        class Switch { prop state: string = "off"; signal click; }
        class Light { prop state: string = "off"; method toggle; }
        object switch1 : Switch;
        object light1 : Light;
    "#;

    fn model(text: &str) -> Model {
        load_model(&[Source { name: "m.rxm", text }]).unwrap_or_else(|e| panic!("{e:?}"))
    }

    #[test]
    fn script_steps_parse_and_validate() {
        let m = model(SWITCH);
        let s = parse_script("inject env switch1.click; assert light1.state == \"on\"", &m).unwrap();
        assert_eq!(s.steps.len(), 2);
        assert!(matches!(&s.steps[0], Step::Inject { source: None, event, .. } if event == "click"));
    }

    #[test]
    fn tick_units_normalize() {
        let m = model(SWITCH);
        let a = parse_script("tick 1000ms", &m).unwrap();
        let b = parse_script("tick 1s", &m).unwrap();
        assert_eq!(a, b);
        assert!(matches!(a.steps[0], Step::Tick { ms: 1000, .. }));
    }

    #[test]
    fn injecting_an_undeclared_event_is_rejected() {
        let m = model(SWITCH);
        let errs = parse_script("inject env switch1.explode", &m).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("explode"), "{}", errs[0]);
    }

    #[test]
    fn undeclared_target_state_is_one_error_naming_it() {
        let text = format!("{SWITCH}\nstatechart S for Switch {{ initial off; state off {{ on click -> nowhere; }} }}");
        let errs = parse_model(&text).unwrap_err();
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].message.contains("nowhere"));
        assert_eq!(errs[0].line, 7);
    }

    #[test]
    fn independent_syntax_errors_are_all_reported() {
        let text = "class A {\n  prop x int;\n  signal s;\n  prop y: float;\n}\nobject a A;\nchart C {\n  lifeline l : A = a\n  env -> l : s() mon;\n  sync(l;\n}\n";
        let errs = parse_bundle(&[Source { name: "bad.rxm", text }]).unwrap_err();
        let lines: Vec<u32> = errs.iter().map(|e| e.line).collect();
        assert!(errs.len() >= 5, "{errs:#?}");
        for l in [2, 4, 6, 9, 10] {
            assert!(lines.contains(&l), "no error on line {l}: {lines:?}");
        }
    }

    #[test]
    fn errors_carry_position_and_excerpt() {
        let errs = parse_bundle(&[Source { name: "f.rxm", text: "class A {\n  prop x: int = ;\n}" }]).unwrap_err();
        let e = &errs[0];
        assert_eq!((e.file.as_str(), e.line, e.col), ("f.rxm", 2, 17));
        assert_eq!(e.excerpt, "  prop x: int = ;");
        assert!(e.render().ends_with("                ^"));
    }

    #[test]
    fn unclosed_block_does_not_swallow_the_next_item() {
        let text = "class A {\n  signal s;\nclass B { signal t; }\n";
        let mut p = Parser::new(text, 0);
        let b = p.bundle();
        assert_eq!(p.errors.len(), 1);
        assert_eq!(b.classes.len(), 1);
        assert_eq!(b.classes[0].name, "B");
    }

    #[test]
    fn negative_literals_and_precedence() {
        assert_eq!(parse_expr("-3").unwrap(), Expr::int(-3));
        assert_eq!(parse_expr("-9223372036854775808").unwrap(), Expr::int(i64::MIN));
        assert!(parse_expr("9223372036854775808").is_err());
        let e = parse_expr("a - 1 - 2 * b").unwrap();
        assert_eq!(e.to_string(), "a - 1 - 2 * b");
        let Expr::Binary(BinOp::Sub, l, _) = e else { panic!() };
        assert!(matches!(*l, Expr::Binary(BinOp::Sub, ..)));
        assert_eq!(parse_expr("-x").unwrap(), Expr::Unary(UnOp::Neg, Box::new(Expr::ident("x"))));
        assert!(parse_expr("a b").is_err());
    }

    #[test]
    fn active_queries() {
        assert_eq!(
            parse_expr("active(pm1, main.Idle)").unwrap(),
            Expr::Active { object: Some("pm1".into()), path: vec!["main".into(), "Idle".into()] }
        );
        assert!(parse_expr("active(a.b, c)").is_err());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,4}".prop_filter("keyword", |s| {
            !matches!(s.as_str(), "true" | "false" | "null" | "if" | "then" | "else" | "active")
        })
    }

    fn expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            any::<i64>().prop_map(Expr::int),
            "[ -~]{0,6}".prop_map(|s| Expr::Lit(Value::Str(s))),
            any::<bool>().prop_map(|b| Expr::Lit(Value::Bool(b))),
            Just(Expr::Lit(Value::Ref(None))),
            ident().prop_map(Expr::Ident),
            (proptest::option::of(ident()), proptest::collection::vec(ident(), 1..3))
                .prop_map(|(object, path)| Expr::Active { object, path }),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let ops = [
                BinOp::Or,
                BinOp::And,
                BinOp::Eq,
                BinOp::Ne,
                BinOp::Lt,
                BinOp::Le,
                BinOp::Gt,
                BinOp::Ge,
                BinOp::Add,
                BinOp::Sub,
                BinOp::Mul,
                BinOp::Div,
                BinOp::Rem,
            ];
            prop_oneof![
                (inner.clone(), ident()).prop_map(|(b, f)| Expr::Field(Box::new(b), f)),
                inner.clone().prop_map(|e| Expr::Unary(UnOp::Not, Box::new(e))),
                // `-` before a non-negative literal reads back as a literal
                inner
                    .clone()
                    .prop_filter("folds", |e| !matches!(e, Expr::Lit(Value::Int(i)) if *i >= 0))
                    .prop_map(|e| Expr::Unary(UnOp::Neg, Box::new(e))),
                (proptest::sample::select(ops.to_vec()), inner.clone(), inner.clone())
                    .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
                (inner.clone(), inner.clone(), inner)
                    .prop_map(|(c, a, b)| Expr::If(Box::new(c), Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_expressions_parse_back(e in expr()) {
            let text = e.to_string();
            prop_assert_eq!(parse_expr(&text).map_err(|es| es[0].to_string()), Ok(e), "{}", text);
        }

        #[test]
        fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
            let _ = parse_bundle(&[Source { name: "fuzz", text: &text }]);
            let _ = parse_expr(&text);
        }

        #[test]
        fn token_soup_never_panics(words in proptest::collection::vec(proptest::sample::select(vec![
            "class", "object", "statechart", "for", "chart", "script", "state", "region", "initial",
            "choice", "final", "on", "after", "every", "entry", "exit", "lifeline", "loop", "each",
            "forbid", "from", "to", "sync", "cond", "label", "emit", "raise", "inject", "tick", "assert",
            "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "->", ":=", "=", "?", "-", "x", "y", "1", "2s",
            "\"s\"", "exec", "mon", "hot", "cold", "env", "if", "then", "else", "active", "all", "where",
        ]), 0..60)) {
            let text = words.join(" ");
            let _ = parse_bundle(&[Source { name: "soup", text: &text }]);
            let mut p = Parser::new(&text, 0);
            let _ = p.script_file();
        }
    }
}
