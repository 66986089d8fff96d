use crate::diag::Span;
use crate::expr::{BinOp, Expr, UnOp};
use crate::lsc::{
    ArgTerm, ChartDef, ElementDef, Endpoint, ForbidDef, LifelineBinding, LifelineDef, LoopKind, MessageDef, Mode, Temp,
};
use crate::model::{ModelBundle, ObjectDef};
use crate::object::{ClassDef, EventDecl, PropertyDef};
use crate::script::{Script, Step};
use crate::statechart::{
    Action, LValue, RegionDef, StateDef, StateDefKind, StatechartDef, TransitionDef, Trigger, VarDecl,
};
use crate::value::{ObjectId, Value, ValueKind};

use super::lexer::{lex, Tok, Token};

type PResult<T> = Result<T, ()>;

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    pub errors: Vec<(Span, String)>,
}

impl Parser {
    pub fn new(src: &str, file: u32) -> Self {
        let (toks, errors) = lex(src, file);
        Parser { toks, pos: 0, errors }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub fn at_end(&self) -> bool {
        self.at_eof()
    }

    /// Reports leftover input after a complete parse.
    pub fn trailing(&mut self) -> PResult<()> {
        self.unexpected("end of input")
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.bump();
        }
        hit
    }

    fn eat(&mut self, s: &str) -> bool {
        let hit = self.is_sym(s);
        if hit {
            self.bump();
        }
        hit
    }

    fn fail<T>(&mut self, msg: impl Into<String>) -> PResult<T> {
        let span = self.span();
        self.errors.push((span, msg.into()));
        Err(())
    }

    fn unexpected<T>(&mut self, wanted: &str) -> PResult<T> {
        let found = self.peek().describe();
        self.fail(format!("expected {wanted}, found {found}"))
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.unexpected(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    fn path(&mut self, what: &str) -> PResult<Vec<String>> {
        let mut out = vec![self.ident(what)?];
        while self.eat(".") {
            out.push(self.ident("a name after `.`")?);
        }
        Ok(out)
    }

    fn duration(&mut self) -> PResult<u64> {
        match *self.peek() {
            Tok::Dur(ms) | Tok::Int(ms) => {
                self.bump();
                Ok(ms)
            }
            _ => self.unexpected("a duration such as `500ms` or `2s`"),
        }
    }

    /// Whether the tokens at the cursor open a top-level item.
    fn at_item_start(&self) -> bool {
        let Tok::Ident(kw) = self.peek() else { return false };
        let next_is_ident = matches!(self.peek_at(1), Tok::Ident(_));
        match kw.as_str() {
            "class" | "chart" => next_is_ident && *self.peek_at(2) == Tok::Sym("{"),
            "statechart" => next_is_ident && matches!(self.peek_at(2), Tok::Ident(f) if f == "for"),
            "object" => next_is_ident && *self.peek_at(2) == Tok::Sym(":"),
            "script" => *self.peek_at(1) == Tok::Sym("{"),
            _ => false,
        }
    }

    /// Skips the rest of a broken member: through the next `;` or balanced
    /// `{...}` group, stopping before a closing `}` or a new item.
    fn recover_member(&mut self, start: usize) {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Sym("{") => depth += 1,
                Tok::Sym("}") if depth == 0 => break,
                Tok::Sym("}") => {
                    depth -= 1;
                    if depth == 0 {
                        self.bump();
                        break;
                    }
                }
                Tok::Sym(";") if depth == 0 => {
                    self.bump();
                    break;
                }
                _ if depth == 0 && self.at_item_start() => break,
                _ => {}
            }
            self.bump();
        }
        if self.pos == start && !self.at_eof() && !self.is_sym("}") {
            self.bump();
        }
    }

    /// Parses `{ member* }`, recovering from errors member by member.
    fn block(&mut self, mut member: impl FnMut(&mut Parser) -> PResult<()>) -> PResult<()> {
        self.expect("{")?;
        loop {
            if self.eat("}") {
                return Ok(());
            }
            if self.at_eof() || self.at_item_start() {
                return self.unexpected("`}`");
            }
            let start = self.pos;
            if member(self).is_err() {
                self.recover_member(start);
            }
        }
    }

    // ---- top level ----

    pub fn bundle(&mut self) -> ModelBundle {
        let mut b = ModelBundle::default();
        while !self.at_eof() {
            let start = self.pos;
            let kw = match self.peek() {
                Tok::Ident(k) => k.clone(),
                _ => String::new(),
            };
            let res = match kw.as_str() {
                "class" => self.class().map(|c| b.classes.push(c)),
                "object" => self.object().map(|o| b.objects.push(o)),
                "statechart" => self.statechart().map(|s| b.statecharts.push(s)),
                "chart" => self.chart().map(|c| b.charts.push(c)),
                "script" => {
                    self.bump();
                    self.script_block().map(|s| b.scripts.push(s))
                }
                _ => self.unexpected("`class`, `object`, `statechart`, `chart` or `script`"),
            };
            if res.is_err() {
                self.recover_item(start);
            }
        }
        b
    }

    fn recover_item(&mut self, start: usize) {
        if self.pos == start {
            self.bump();
        }
        while !self.at_eof() && !self.at_item_start() {
            self.bump();
        }
    }

    fn literal(&mut self, allow_ref: bool) -> PResult<Value> {
        let v = match self.peek().clone() {
            Tok::Int(n) => Value::Int(self.int_magnitude(n, false)?),
            Tok::Sym("-") if matches!(self.peek_at(1), Tok::Int(_)) => {
                self.bump();
                let Tok::Int(n) = *self.peek() else { unreachable!() };
                Value::Int(self.int_magnitude(n, true)?)
            }
            Tok::Str(s) => Value::Str(s),
            Tok::Ident(s) if s == "true" => Value::Bool(true),
            Tok::Ident(s) if s == "false" => Value::Bool(false),
            Tok::Ident(s) if s == "null" => Value::Ref(None),
            Tok::Ident(s) if allow_ref => Value::obj(s),
            _ => return self.unexpected(if allow_ref { "a literal or object name" } else { "a literal" }),
        };
        self.bump();
        Ok(v)
    }

    fn int_magnitude(&mut self, n: u64, negative: bool) -> PResult<i64> {
        let v = if negative { 0i64.checked_sub_unsigned(n) } else { i64::try_from(n).ok() };
        match v {
            Some(v) => Ok(v),
            None => self.fail(format!("integer `{}{n}` is out of range", if negative { "-" } else { "" })),
        }
    }

    fn kind(&mut self) -> PResult<ValueKind> {
        let span = self.span();
        let name = self.ident("a type (`int`, `string`, `bool` or `ref`)")?;
        match ValueKind::from_keyword(&name) {
            Some(k) => Ok(k),
            None => {
                self.errors.push((span, format!("unknown type `{name}` (expected `int`, `string`, `bool` or `ref`)")));
                Err(())
            }
        }
    }

    fn class(&mut self) -> PResult<ClassDef> {
        let span = self.span();
        self.bump();
        let name = self.ident("a class name")?;
        let mut c = ClassDef { name, span, ..Default::default() };
        self.block(|p| {
            let span = p.span();
            if p.eat_kw("prop") {
                let name = p.ident("a property name")?;
                p.expect(":")?;
                let kind = p.kind()?;
                let default = if p.eat("=") { Some(p.literal(false)?) } else { None };
                p.expect(";")?;
                c.properties.push(PropertyDef { name, kind, default, span });
            } else if p.is_kw("signal") || p.is_kw("method") {
                let is_signal = p.is_kw("signal");
                p.bump();
                let name = p.ident("an event name")?;
                let arity = if p.eat("/") {
                    match *p.peek() {
                        Tok::Int(n) => {
                            p.bump();
                            n as usize
                        }
                        _ => return p.unexpected("an arity"),
                    }
                } else {
                    0
                };
                p.expect(";")?;
                let d = EventDecl { name, arity, span };
                if is_signal {
                    c.signals.push(d)
                } else {
                    c.methods.push(d)
                }
            } else {
                return p.unexpected("`prop`, `signal` or `method`");
            }
            Ok(())
        })?;
        Ok(c)
    }

    fn object(&mut self) -> PResult<ObjectDef> {
        let span = self.span();
        self.bump();
        let id = self.ident("an object name")?;
        self.expect(":")?;
        let class = self.ident("a class name")?;
        let mut values = Vec::new();
        if self.is_sym("{") {
            self.block(|p| {
                let name = p.ident("a property name")?;
                p.expect("=")?;
                let v = p.literal(true)?;
                p.expect(";")?;
                values.push((name, v));
                Ok(())
            })?;
            self.eat(";");
        } else {
            self.expect(";")?;
        }
        Ok(ObjectDef { id, class, values, span })
    }

    // ---- statecharts ----

    fn statechart(&mut self) -> PResult<StatechartDef> {
        let span = self.span();
        self.bump();
        let name = self.ident("a statechart name")?;
        self.expect_kw("for")?;
        let owner_class = self.ident("a class name")?;
        let mut variables = Vec::new();
        let mut body = RegionBody::new(span);
        self.block(|p| {
            let span = p.span();
            if p.eat_kw("var") {
                let name = p.ident("a variable name")?;
                p.expect(":")?;
                let kind = p.kind()?;
                let default = if p.eat("=") { Some(p.literal(false)?) } else { None };
                p.expect(";")?;
                variables.push(VarDecl { name, kind, default, span });
                Ok(())
            } else {
                p.region_member(&mut body, false)
            }
        })?;
        let regions = body.finish(self)?;
        Ok(StatechartDef { name, owner_class, variables, regions, span })
    }

    /// One member of a region body: a state, an `initial` marker or a
    /// nested named region. `in_state` admits entry, exit and transitions.
    fn region_member(&mut self, body: &mut RegionBody, in_state: bool) -> PResult<()> {
        let span = self.span();
        let Tok::Ident(kw) = self.peek().clone() else {
            return self.unexpected("a state member");
        };
        match kw.as_str() {
            "initial" => {
                self.bump();
                let name = self.ident("a state name")?;
                self.expect(";")?;
                if body.direct.initial.is_some() {
                    self.errors.push((span, "region already has an initial state".into()));
                    return Err(());
                }
                body.direct.initial = Some(name);
                body.has_direct = true;
            }
            "state" => {
                self.bump();
                let st = self.state(span)?;
                body.direct.states.push(st);
                body.has_direct = true;
            }
            "final" => {
                self.bump();
                let name = self.ident("a state name")?;
                self.expect(";")?;
                body.direct.states.push(StateDef { kind: StateDefKind::Final, span, ..StateDef::basic(&name) });
                body.has_direct = true;
            }
            "choice" => {
                self.bump();
                let st = self.choice(span)?;
                body.direct.states.push(st);
                body.has_direct = true;
            }
            "history" => {
                self.bump();
                return self.fail("history states are not supported");
            }
            "region" => {
                self.bump();
                let name = self.ident("a region name")?;
                let mut inner = RegionBody::new(span);
                self.block(|p| p.region_member(&mut inner, false))?;
                if inner.named.is_empty() {
                    let mut r = inner.direct;
                    r.name = Some(name);
                    r.span = span;
                    body.named.push(r);
                } else {
                    self.errors.push((span, "regions cannot directly contain regions".into()));
                    return Err(());
                }
            }
            "entry" | "exit" | "on" | "after" | "every" if in_state => {
                self.state_reaction(body)?;
            }
            "entry" | "exit" | "on" | "after" | "every" => {
                return self.fail(format!("`{kw}` belongs inside a state"));
            }
            _ => return self.unexpected("`state`, `initial`, `final`, `choice` or `region`"),
        }
        Ok(())
    }

    fn state_reaction(&mut self, body: &mut RegionBody) -> PResult<()> {
        let span = self.span();
        if self.is_kw("entry") || self.is_kw("exit") {
            let entry = self.is_kw("entry");
            self.bump();
            self.expect("/")?;
            let acts = self.actions()?;
            self.expect(";")?;
            if entry {
                body.entry.extend(acts)
            } else {
                body.exit.extend(acts)
            }
            return Ok(());
        }
        let trigger = if self.eat_kw("on") {
            let name = self.ident("an event name")?;
            let mut params = Vec::new();
            if self.eat("(") {
                if !self.is_sym(")") {
                    loop {
                        params.push(self.ident("a parameter name")?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
            }
            Trigger::Event { name, params }
        } else if self.eat_kw("after") {
            Trigger::After(self.duration()?)
        } else {
            self.expect_kw("every")?;
            Trigger::Every(self.duration()?)
        };
        let guard = if self.eat("[") {
            let g = self.expr()?;
            self.expect("]")?;
            Some(g)
        } else {
            None
        };
        let target = if self.eat("->") { Some(self.path("a target state")?) } else { None };
        let actions = if self.eat("/") { self.actions()? } else { vec![] };
        self.expect(";")?;
        body.transitions.push(TransitionDef { trigger, guard, target, actions, span });
        Ok(())
    }

    fn state(&mut self, span: Span) -> PResult<StateDef> {
        let name = self.ident("a state name")?;
        let mut st = StateDef { span, ..StateDef::basic(&name) };
        if self.eat(";") {
            return Ok(st);
        }
        let mut body = RegionBody::new(span);
        self.block(|p| p.region_member(&mut body, true))?;
        st.entry = std::mem::take(&mut body.entry);
        st.exit = std::mem::take(&mut body.exit);
        st.transitions = std::mem::take(&mut body.transitions);
        st.regions = body.finish(self)?;
        Ok(st)
    }

    fn choice(&mut self, span: Span) -> PResult<StateDef> {
        let name = self.ident("a choice name")?;
        let mut st = StateDef { kind: StateDefKind::Choice, span, ..StateDef::basic(&name) };
        self.block(|p| {
            let span = p.span();
            let (trigger, guard) = if p.eat_kw("else") {
                (Trigger::Else, None)
            } else {
                p.expect("[")?;
                let g = p.expr()?;
                p.expect("]")?;
                (Trigger::Branch, Some(g))
            };
            p.expect("->")?;
            let target = Some(p.path("a target state")?);
            let actions = if p.eat("/") { p.actions()? } else { vec![] };
            p.expect(";")?;
            st.transitions.push(TransitionDef { trigger, guard, target, actions, span });
            Ok(())
        })?;
        Ok(st)
    }

    fn actions(&mut self) -> PResult<Vec<Action>> {
        let mut out = vec![self.action()?];
        while self.eat(",") {
            out.push(self.action()?);
        }
        Ok(out)
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        let mut args = Vec::new();
        if self.eat("(") {
            if !self.is_sym(")") {
                loop {
                    args.push(self.expr()?);
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
        }
        Ok(args)
    }

    fn action(&mut self) -> PResult<Action> {
        let assign_follows = *self.peek_at(1) == Tok::Sym(":=");
        if self.is_kw("raise") && !assign_follows {
            self.bump();
            let event = self.ident("an event name")?;
            let args = self.call_args()?;
            return Ok(Action::Raise { event, args });
        }
        if self.is_kw("emit") && !assign_follows {
            self.bump();
            let span = self.span();
            return match self.postfix()? {
                Expr::Field(target, event) => {
                    let args = self.call_args()?;
                    Ok(Action::Emit { target: *target, event, args })
                }
                _ => {
                    self.errors.push((span, "`emit` needs `target.event`".into()));
                    Err(())
                }
            };
        }
        let span = self.span();
        let lhs = self.postfix()?;
        self.expect(":=")?;
        let value = self.expr()?;
        let target = match lhs {
            Expr::Ident(n) => LValue::Name(n),
            Expr::Field(b, n) => LValue::Field(*b, n),
            _ => {
                self.errors.push((span, "cannot assign to this expression".into()));
                return Err(());
            }
        };
        Ok(Action::Assign { target, value })
    }

    // ---- charts ----

    fn chart(&mut self) -> PResult<ChartDef> {
        let span = self.span();
        self.bump();
        let name = self.ident("a chart name")?;
        let mut lifelines = Vec::new();
        let mut body = Vec::new();
        self.block(|p| {
            if p.is_kw("lifeline") && *p.peek_at(1) != Tok::Sym("->") {
                lifelines.push(p.lifeline()?);
                Ok(())
            } else {
                body.push(p.element()?);
                Ok(())
            }
        })?;
        Ok(ChartDef { name, lifelines, body, span })
    }

    fn lifeline(&mut self) -> PResult<LifelineDef> {
        let span = self.span();
        self.bump();
        let name = self.ident("a lifeline name")?;
        self.expect(":")?;
        let class = self.ident("a class name")?;
        let binding = if self.eat("=") {
            LifelineBinding::Concrete(ObjectId::new(self.ident("an object name")?))
        } else if self.eat_kw("all") {
            LifelineBinding::All(self.where_clause()?)
        } else {
            LifelineBinding::Symbolic(self.where_clause()?)
        };
        self.expect(";")?;
        Ok(LifelineDef { name, class, binding, span })
    }

    fn where_clause(&mut self) -> PResult<Option<Expr>> {
        if !self.eat_kw("where") {
            return Ok(None);
        }
        self.expect("[")?;
        let e = self.expr()?;
        self.expect("]")?;
        Ok(Some(e))
    }

    fn endpoint(&mut self) -> PResult<Endpoint> {
        let name = self.ident("a lifeline or `env`")?;
        Ok(if name == "env" { Endpoint::Env } else { Endpoint::Lifeline(name) })
    }

    fn terms(&mut self) -> PResult<Vec<ArgTerm>> {
        let mut out = Vec::new();
        self.expect("(")?;
        if !self.is_sym(")") {
            loop {
                if self.eat("?") {
                    out.push(ArgTerm::Bind(self.ident("a variable name")?));
                } else {
                    out.push(ArgTerm::Expr(self.expr()?));
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(out)
    }

    fn temp(&mut self) -> Option<Temp> {
        if self.eat_kw("hot") {
            Some(Temp::Hot)
        } else if self.eat_kw("cold") {
            Some(Temp::Cold)
        } else {
            None
        }
    }

    fn element(&mut self) -> PResult<ElementDef> {
        let span = self.span();
        let message_follows = *self.peek_at(1) == Tok::Sym("->");
        let kw = match self.peek() {
            Tok::Ident(k) if !message_follows => k.clone(),
            _ => String::new(),
        };
        match kw.as_str() {
            "sync" => {
                self.bump();
                let lifelines = self.name_list()?;
                self.expect(";")?;
                Ok(ElementDef::Sync { lifelines, span })
            }
            "cond" => {
                self.bump();
                let lifelines = if self.is_sym("(") { self.name_list()? } else { vec![] };
                self.expect("[")?;
                let expr = self.expr()?;
                self.expect("]")?;
                let temp = self.temp().unwrap_or(Temp::Hot);
                self.expect(";")?;
                Ok(ElementDef::Cond { lifelines, expr, temp, span })
            }
            "label" => {
                self.bump();
                let name = self.ident("a label name")?;
                self.expect(";")?;
                Ok(ElementDef::Label { name, span })
            }
            "loop" => {
                self.bump();
                let kind = if self.eat_kw("while") {
                    self.expect("[")?;
                    let e = self.expr()?;
                    self.expect("]")?;
                    LoopKind::While(e)
                } else if self.eat_kw("each") {
                    LoopKind::Each(self.ident("an `all` lifeline")?)
                } else if let Tok::Int(n) = *self.peek() {
                    self.bump();
                    LoopKind::Count(n)
                } else {
                    return self.unexpected("an iteration count, `while` or `each`");
                };
                let mut body = Vec::new();
                self.block(|p| {
                    body.push(p.element()?);
                    Ok(())
                })?;
                Ok(ElementDef::Loop { kind, body, span })
            }
            "forbid" => {
                self.bump();
                let (from, to, name) = self.arrow()?;
                let args = if self.is_sym("(") { Some(self.terms()?) } else { None };
                self.expect_kw("from")?;
                let start = self.ident("a label")?;
                self.expect_kw("to")?;
                let end = self.ident("a label")?;
                self.expect(";")?;
                Ok(ElementDef::Forbid(ForbidDef { from, to, name, args, start, end, span }))
            }
            "" => {
                let (from, to, name) = self.arrow()?;
                let args = if self.is_sym("(") { self.terms()? } else { vec![] };
                let mode = if self.eat_kw("exec") {
                    Mode::Exec
                } else {
                    self.eat_kw("mon");
                    Mode::Mon
                };
                let temp = self.temp().unwrap_or(mode.default_temp());
                self.expect(";")?;
                Ok(ElementDef::Message(MessageDef { from, to, name, args, mode, temp, span }))
            }
            _ => self.unexpected("a message, `sync`, `cond`, `loop`, `forbid`, `label` or `lifeline`"),
        }
    }

    fn arrow(&mut self) -> PResult<(Endpoint, String, String)> {
        let from = self.endpoint()?;
        self.expect("->")?;
        let to = self.ident("a lifeline")?;
        self.expect(":")?;
        let name = self.ident("a message name")?;
        Ok((from, to, name))
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        self.expect("(")?;
        let mut out = Vec::new();
        if !self.is_sym(")") {
            loop {
                out.push(self.ident("a lifeline")?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(out)
    }

    // ---- scripts ----

    fn script_block(&mut self) -> PResult<Script> {
        let mut steps = Vec::new();
        self.block(|p| {
            steps.push(p.step()?);
            Ok(())
        })?;
        Ok(Script { steps })
    }

    /// A whole `.rxs` file: steps separated by optional semicolons.
    pub fn script_file(&mut self) -> Script {
        let mut steps = Vec::new();
        while !self.at_eof() {
            let start = self.pos;
            match self.step() {
                Ok(s) => steps.push(s),
                Err(()) => {
                    if self.pos == start {
                        self.bump();
                    }
                    while !self.at_eof() && !self.eat(";") && !self.at_step_start() {
                        self.bump();
                    }
                }
            }
        }
        Script { steps }
    }

    fn at_step_start(&self) -> bool {
        self.is_kw("inject") || self.is_kw("tick") || self.is_kw("assert")
    }

    fn step(&mut self) -> PResult<Step> {
        let span = self.span();
        let step = if self.eat_kw("inject") {
            let src = self.ident("`env` or a source object")?;
            let source = (src != "env").then_some(src);
            let target = self.ident("a target object")?;
            self.expect(".")?;
            let event = self.ident("an event name")?;
            let mut args = Vec::new();
            if self.eat("(") {
                if !self.is_sym(")") {
                    loop {
                        args.push(self.literal(true)?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
            }
            Step::Inject { source, target, event, args, span }
        } else if self.eat_kw("tick") {
            Step::Tick { ms: self.duration()?, span }
        } else if self.eat_kw("assert") {
            Step::Assert { expr: self.expr()?, span }
        } else {
            return self.unexpected("`inject`, `tick` or `assert`");
        };
        self.eat(";");
        Ok(step)
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else { return None };
        Some(match *s {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop().filter(|op| op.precedence() >= min) {
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.is_sym("-") {
            let field_follows = *self.peek_at(2) == Tok::Sym(".");
            if let (Tok::Int(n), false) = (self.peek_at(1).clone(), field_follows) {
                self.bump();
                self.bump();
                return Ok(Expr::int(self.int_magnitude(n, true)?));
            }
            self.bump();
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat(".") {
            e = Expr::Field(Box::new(e), self.ident("a property name")?);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::int(self.int_magnitude(n, false)?))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Lit(Value::Str(s)))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" | "null" => Ok(Expr::Lit(self.literal(false)?)),
                "if" => {
                    self.bump();
                    let c = self.expr()?;
                    self.expect_kw("then")?;
                    let a = self.expr()?;
                    self.expect_kw("else")?;
                    let b = self.expr()?;
                    Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)))
                }
                "active" if *self.peek_at(1) == Tok::Sym("(") => {
                    self.bump();
                    self.bump();
                    let first = self.path("a state path")?;
                    let (object, path) = if self.eat(",") {
                        if first.len() != 1 {
                            return self.fail("expected an object name before `,`");
                        }
                        (first.into_iter().next(), self.path("a state path")?)
                    } else {
                        (None, first)
                    };
                    self.expect(")")?;
                    Ok(Expr::Active { object, path })
                }
                _ => {
                    self.bump();
                    Ok(Expr::Ident(s))
                }
            },
            _ => self.unexpected("an expression"),
        }
    }
}

/// Members collected while parsing a statechart, state or region body.
struct RegionBody {
    direct: RegionDef,
    has_direct: bool,
    named: Vec<RegionDef>,
    entry: Vec<Action>,
    exit: Vec<Action>,
    transitions: Vec<TransitionDef>,
}

impl RegionBody {
    fn new(span: Span) -> Self {
        RegionBody {
            direct: RegionDef { name: None, initial: None, states: vec![], span },
            has_direct: false,
            named: vec![],
            entry: vec![],
            exit: vec![],
            transitions: vec![],
        }
    }

    fn finish(self, p: &mut Parser) -> PResult<Vec<RegionDef>> {
        match (self.has_direct, self.named.is_empty()) {
            (true, false) => {
                p.errors.push((self.direct.span, "states and named regions cannot be mixed at the same level".into()));
                Err(())
            }
            (true, true) => Ok(vec![self.direct]),
            (false, _) => Ok(self.named),
        }
    }
}
