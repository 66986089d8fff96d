use std::collections::{HashMap, HashSet};

use crate::diag::{Diagnostic, Span};
use crate::expr::{Expr, StaticType, TypeEnv};
use crate::object::{ClassId, ObjectStore};
use crate::statechart::RemoteActiveCheck;
use crate::value::{ObjectId, ValueKind};

use super::{ArgTerm, ChartDef, ElementDef, Endpoint, LifelineBinding, LoopKind, Mode, Temp};

#[derive(Debug, Clone)]
pub(crate) struct Lifeline {
    pub name: String,
    pub class: ClassId,
    pub binding: LifelineBinding,
}

#[derive(Debug, Clone)]
pub(crate) struct Msg {
    /// `None` is the environment.
    pub from: Option<usize>,
    pub to: usize,
    pub name: String,
    pub args: Vec<ArgTerm>,
    pub mode: Mode,
    pub temp: Temp,
}

#[derive(Debug, Clone)]
pub(crate) enum LoopSpec {
    Count(u64),
    While(Expr),
    Each(usize),
}

#[derive(Debug, Clone)]
pub(crate) enum ItemKind {
    Message(Msg),
    Sync,
    Label(String),
    Cond { expr: Expr, temp: Temp },
    Loop { spec: LoopSpec, block: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Item {
    /// Document-order index among all chart elements.
    pub element: usize,
    pub lifelines: Vec<usize>,
    pub kind: ItemKind,
}

#[derive(Debug, Clone)]
pub(crate) struct Forbid {
    pub element: usize,
    pub from: Option<usize>,
    pub to: usize,
    pub name: String,
    pub args: Option<Vec<ArgTerm>>,
    /// Item indices of the scope labels within the same block.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Block {
    pub items: Vec<Item>,
    /// Per lifeline, the items located on it in order.
    pub lanes: Vec<Vec<usize>>,
    pub forbids: Vec<Forbid>,
}

impl Block {
    /// Whether item `i` is the next location on all its lifelines.
    pub fn at_front(&self, i: usize, pos: &[usize]) -> bool {
        self.items[i].lifelines.iter().all(|&l| self.lanes[l].get(pos[l]) == Some(&i))
    }

    pub fn passed(&self, i: usize, pos: &[usize]) -> bool {
        self.items[i].lifelines.iter().all(|&l| self.lanes[l][..pos[l]].contains(&i))
    }

    pub fn done(&self, pos: &[usize]) -> bool {
        self.lanes.iter().zip(pos).all(|(lane, &p)| p >= lane.len())
    }
}

/// A validated chart. Block 0 is the chart body; further blocks are loop
/// bodies.
#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub name: String,
    pub(crate) lifelines: Vec<Lifeline>,
    pub(crate) blocks: Vec<Block>,
    /// Items of block 0 that can activate the chart.
    pub(crate) minimal: Vec<usize>,
}

impl ChartSpec {
    pub fn lifeline_names(&self) -> Vec<&str> {
        self.lifelines.iter().map(|l| l.name.as_str()).collect()
    }

    pub(crate) fn lifeline_index(&self, name: &str) -> Option<usize> {
        self.lifelines.iter().position(|l| l.name == name)
    }

    /// Locates a message by element id.
    pub(crate) fn message(&self, element: usize) -> Option<(usize, usize, &Msg)> {
        for (b, block) in self.blocks.iter().enumerate() {
            for (i, item) in block.items.iter().enumerate() {
                if let (true, ItemKind::Message(m)) = (item.element == element, &item.kind) {
                    return Some((b, i, m));
                }
            }
        }
        None
    }

    /// Validates a declaration. `remote(class, path)` resolves `active()`
    /// references into statecharts.
    pub fn compile(def: &ChartDef, store: &ObjectStore, remote: RemoteActiveCheck<'_>) -> Result<ChartSpec, Vec<Diagnostic>> {
        let mut c = Compiler {
            def,
            store,
            remote,
            diags: Vec::new(),
            lifelines: Vec::new(),
            blocks: vec![Block::default()],
            element: 0,
            bind_vars: HashSet::new(),
        };
        c.lifelines();
        if !c.diags.is_empty() {
            return Err(c.diags);
        }
        collect_bind_vars(&def.body, &mut c.bind_vars);
        for v in &c.bind_vars {
            if c.lifelines.iter().any(|l| l.name == *v) {
                c.diags.push(Diagnostic::new(def.span, format!("variable `?{v}` shadows a lifeline")));
            }
        }
        let n = c.lifelines.len();
        c.blocks[0].lanes = vec![vec![]; n];
        c.block(&def.body, 0, None);
        if c.blocks[0].items.is_empty() {
            c.diags.push(Diagnostic::new(def.span, format!("chart `{}` has no locations", def.name)));
        }
        c.check_bindability();

        let top = &c.blocks[0];
        let minimal: Vec<usize> = (0..top.items.len()).filter(|&i| top.at_front(i, &vec![0; n])).collect();
        for &i in &minimal {
            match &top.items[i].kind {
                ItemKind::Message(m) if m.mode == Mode::Mon => {}
                _ => c.diags.push(Diagnostic::new(
                    def.span,
                    format!("chart `{}` must start with monitored messages (element {})", def.name, top.items[i].element),
                )),
            }
        }
        if !c.diags.is_empty() {
            return Err(c.diags);
        }
        Ok(ChartSpec { name: def.name.clone(), lifelines: c.lifelines, blocks: c.blocks, minimal })
    }
}

fn collect_bind_vars(body: &[ElementDef], out: &mut HashSet<String>) {
    for e in body {
        match e {
            ElementDef::Message(m) => {
                for a in &m.args {
                    if let ArgTerm::Bind(v) = a {
                        out.insert(v.clone());
                    }
                }
            }
            ElementDef::Loop { body, .. } => collect_bind_vars(body, out),
            _ => {}
        }
    }
}

struct Compiler<'a> {
    def: &'a ChartDef,
    store: &'a ObjectStore,
    remote: RemoteActiveCheck<'a>,
    diags: Vec<Diagnostic>,
    lifelines: Vec<Lifeline>,
    blocks: Vec<Block>,
    element: usize,
    bind_vars: HashSet<String>,
}

struct ChartEnv<'a> {
    c: &'a Compiler<'a>,
    /// Class of the candidate object inside a binding expression.
    candidate: Option<ClassId>,
    /// Lifelines visible by name.
    visible: Vec<usize>,
}

impl TypeEnv for ChartEnv<'_> {
    fn ident(&self, name: &str) -> Option<StaticType> {
        let store = self.c.store;
        if let Some(cls) = self.candidate {
            let def = store.class(cls);
            if let Some(p) = def.property_def(name) {
                return Some(StaticType::of_kind(p.kind));
            }
            if name == "self" {
                return Some(StaticType::Ref(Some(def.name.clone())));
            }
        }
        if let Some(&l) = self.visible.iter().find(|&&l| self.c.lifelines[l].name == name) {
            return Some(StaticType::Ref(Some(store.class(self.c.lifelines[l].class).name.clone())));
        }
        if self.c.bind_vars.contains(name) {
            return Some(StaticType::Any);
        }
        store.class_of(&ObjectId::new(name)).ok().map(|c| StaticType::Ref(Some(c.name.clone())))
    }

    fn property(&self, class: &str, prop: &str) -> Option<ValueKind> {
        self.c.store.class_by_name(class)?.property_def(prop).map(|p| p.kind)
    }

    fn check_active(&self, object: Option<&str>, path: &[String]) -> Result<(), String> {
        let Some(o) = object else {
            return Err("`active` in a chart needs an object: active(obj, path)".into());
        };
        match self.ident(o) {
            Some(StaticType::Ref(Some(class))) => (self.c.remote)(&class, path),
            _ => Ok(()),
        }
    }
}

impl<'a> Compiler<'a> {
    fn err(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(span, msg));
    }

    fn lifelines(&mut self) {
        let def = self.def;
        let mut seen = HashSet::new();
        for l in &def.lifelines {
            if !seen.insert(l.name.as_str()) {
                self.err(l.span, format!("lifeline `{}` declared twice", l.name));
            }
            if l.name == "env" {
                self.err(l.span, "`env` is reserved for the environment");
            }
            let Some(class) = self.store.class_id(&l.class) else {
                self.err(l.span, format!("unknown class `{}`", l.class));
                continue;
            };
            if let LifelineBinding::Concrete(o) = &l.binding {
                match self.store.object(o) {
                    Ok(obj) if obj.class == class => {}
                    Ok(_) => self.err(l.span, format!("object `{o}` is not a `{}`", l.class)),
                    Err(_) => self.err(l.span, format!("unknown object `{o}`")),
                }
            }
            self.lifelines.push(Lifeline { name: l.name.clone(), class, binding: l.binding.clone() });
        }
        if !self.diags.is_empty() {
            return;
        }
        for (i, l) in def.lifelines.iter().enumerate() {
            if let LifelineBinding::Symbolic(Some(e)) | LifelineBinding::All(Some(e)) = &l.binding {
                let env = ChartEnv { c: self, candidate: Some(self.lifelines[i].class), visible: (0..i).collect() };
                if let Err(m) = bool_expr(e, &env) {
                    self.err(l.span, format!("binding of `{}`: {m}", l.name));
                }
            }
        }
    }

    fn lifeline(&mut self, name: &str, span: Span, each: Option<usize>) -> Option<usize> {
        match self.lifelines.iter().position(|l| l.name == name) {
            None => {
                self.err(span, format!("undeclared lifeline `{name}`"));
                None
            }
            Some(i) => {
                if matches!(self.lifelines[i].binding, LifelineBinding::All(_)) && each != Some(i) {
                    self.err(span, format!("multiplicity lifeline `{name}` is only usable inside `loop each {name}`"));
                }
                Some(i)
            }
        }
    }

    fn endpoint(&mut self, ep: &Endpoint, span: Span, each: Option<usize>) -> Result<Option<usize>, ()> {
        match ep {
            Endpoint::Env => Ok(None),
            Endpoint::Lifeline(l) => self.lifeline(l, span, each).map(Some).ok_or(()),
        }
    }

    fn visible(&self, each: Option<usize>) -> Vec<usize> {
        (0..self.lifelines.len())
            .filter(|&l| !matches!(self.lifelines[l].binding, LifelineBinding::All(_)) || Some(l) == each)
            .collect()
    }

    fn check_terms(&mut self, terms: &[ArgTerm], span: Span, each: Option<usize>) {
        for t in terms {
            if let ArgTerm::Expr(e) = t {
                let env = ChartEnv { c: self, candidate: None, visible: self.visible(each) };
                if let Err(m) = e.check(&env) {
                    self.err(span, m);
                }
            }
        }
    }

    fn check_event(&mut self, to: usize, name: &str, arity: Option<usize>, span: Span) {
        let class = self.store.class(self.lifelines[to].class);
        match (class.event_arity(name), arity) {
            (None, _) => {
                let msg = format!("class `{}` does not accept `{name}`", class.name);
                self.err(span, msg)
            }
            (Some(n), Some(a)) if n != a => self.err(span, format!("`{name}` takes {n} arguments, message has {a}")),
            _ => {}
        }
    }

    fn block(&mut self, body: &[ElementDef], b: usize, each: Option<usize>) {
        let n = self.lifelines.len();
        let mut labels: HashMap<String, usize> = HashMap::new();
        let mut forbids = Vec::new();
        for e in body {
            let element = self.element;
            self.element += 1;
            let (lifelines, kind) = match e {
                ElementDef::Message(m) => {
                    let (Ok(from), Some(to)) = (self.endpoint(&m.from, m.span, each), self.lifeline(&m.to, m.span, each)) else {
                        continue;
                    };
                    if from.is_none() && m.mode == Mode::Exec {
                        self.err(m.span, "messages from `env` can only be monitored");
                    }
                    self.check_event(to, &m.name, Some(m.args.len()), m.span);
                    self.check_terms(&m.args, m.span, each);
                    let mut ls = vec![to];
                    if let Some(f) = from.filter(|&f| f != to) {
                        ls.insert(0, f);
                    }
                    let msg = Msg { from, to, name: m.name.clone(), args: m.args.clone(), mode: m.mode, temp: m.temp };
                    (ls, ItemKind::Message(msg))
                }
                ElementDef::Sync { lifelines, span } => {
                    let ls: Vec<usize> = lifelines.iter().filter_map(|l| self.lifeline(l, *span, each)).collect();
                    if lifelines.is_empty() {
                        self.err(*span, "sync needs at least one lifeline");
                    }
                    (dedup(ls), ItemKind::Sync)
                }
                ElementDef::Cond { lifelines, expr, temp, span } => {
                    let ls: Vec<usize> = if lifelines.is_empty() {
                        (0..n).collect()
                    } else {
                        lifelines.iter().filter_map(|l| self.lifeline(l, *span, each)).collect()
                    };
                    let env = ChartEnv { c: self, candidate: None, visible: self.visible(each) };
                    if let Err(m) = bool_expr(expr, &env) {
                        self.err(*span, format!("condition: {m}"));
                    }
                    (dedup(ls), ItemKind::Cond { expr: expr.clone(), temp: *temp })
                }
                ElementDef::Loop { kind, body, span } => {
                    if b != 0 {
                        self.err(*span, "loops cannot be nested");
                        continue;
                    }
                    let spec = match kind {
                        LoopKind::Count(k) => LoopSpec::Count(*k),
                        LoopKind::While(e) => {
                            let env = ChartEnv { c: self, candidate: None, visible: self.visible(None) };
                            if let Err(m) = bool_expr(e, &env) {
                                self.err(*span, format!("loop condition: {m}"));
                            }
                            LoopSpec::While(e.clone())
                        }
                        LoopKind::Each(l) => match self.lifelines.iter().position(|x| x.name == *l) {
                            Some(i) if matches!(self.lifelines[i].binding, LifelineBinding::All(_)) => LoopSpec::Each(i),
                            Some(_) => {
                                self.err(*span, format!("`loop each` needs a multiplicity lifeline, `{l}` is not one"));
                                continue;
                            }
                            None => {
                                self.err(*span, format!("undeclared lifeline `{l}`"));
                                continue;
                            }
                        },
                    };
                    let inner_each = match spec {
                        LoopSpec::Each(i) => Some(i),
                        _ => None,
                    };
                    let nb = self.blocks.len();
                    self.blocks.push(Block { lanes: vec![vec![]; n], ..Block::default() });
                    self.block(body, nb, inner_each);
                    if !self.blocks[nb].items.iter().any(|i| matches!(i.kind, ItemKind::Message(_))) {
                        self.err(*span, "loop body needs at least one message");
                    }
                    ((0..n).collect(), ItemKind::Loop { spec, block: nb })
                }
                ElementDef::Forbid(f) => {
                    forbids.push((element, f));
                    continue;
                }
                ElementDef::Label { name, span } => {
                    if labels.contains_key(name) || self.blocks.iter().any(|bl| bl.items.iter().any(|i| matches!(&i.kind, ItemKind::Label(x) if x == name))) {
                        self.err(*span, format!("label `{name}` declared twice"));
                    }
                    labels.insert(name.clone(), self.blocks[b].items.len());
                    ((0..n).collect(), ItemKind::Label(name.clone()))
                }
            };
            let block = &mut self.blocks[b];
            let idx = block.items.len();
            for &l in &lifelines {
                block.lanes[l].push(idx);
            }
            block.items.push(Item { element, lifelines, kind });
        }
        for (element, f) in forbids {
            let (Ok(from), Some(to)) = (self.endpoint(&f.from, f.span, each), self.lifeline(&f.to, f.span, each)) else {
                continue;
            };
            self.check_event(to, &f.name, f.args.as_ref().map(|a| a.len()), f.span);
            if let Some(a) = &f.args {
                self.check_terms(a, f.span, each);
            }
            let (Some(&start), Some(&end)) = (labels.get(&f.start), labels.get(&f.end)) else {
                self.err(f.span, format!("forbid scope `{}`..`{}` must name labels in the same block", f.start, f.end));
                continue;
            };
            if start >= end {
                self.err(f.span, format!("forbid scope label `{}` must precede `{}`", f.start, f.end));
                continue;
            }
            self.blocks[b].forbids.push(Forbid { element, from, to, name: f.name.clone(), args: f.args.clone(), start, end });
        }
    }

    /// Executed messages need every endpoint and argument bound by the time
    /// they are reached.
    fn check_bindability(&mut self) {
        let mut bound: HashSet<usize> = (0..self.lifelines.len())
            .filter(|&l| !matches!(self.lifelines[l].binding, LifelineBinding::Symbolic(None)))
            .collect();
        let mut vars: HashSet<String> = HashSet::new();
        let mut errs = Vec::new();
        self.walk_bindability(0, &mut bound, &mut vars, &mut errs);
        let span = self.def.span;
        for e in errs {
            self.err(span, e);
        }
    }

    fn walk_bindability(&self, b: usize, bound: &mut HashSet<usize>, vars: &mut HashSet<String>, errs: &mut Vec<String>) {
        for item in &self.blocks[b].items {
            match &item.kind {
                ItemKind::Message(m) => {
                    if m.mode == Mode::Exec {
                        for l in m.from.iter().chain([&m.to]) {
                            if !bound.contains(l) {
                                errs.push(format!(
                                    "executed message `{}` (element {}) reaches unbound lifeline `{}`",
                                    m.name, item.element, self.lifelines[*l].name
                                ));
                            }
                        }
                        for a in &m.args {
                            if let ArgTerm::Bind(v) = a {
                                if !vars.contains(v) {
                                    errs.push(format!("executed message `{}` cannot bind `?{v}`", m.name));
                                }
                            }
                        }
                    }
                    bound.extend(m.from.iter().copied().chain([m.to]));
                    for a in &m.args {
                        if let ArgTerm::Bind(v) = a {
                            vars.insert(v.clone());
                        }
                    }
                }
                ItemKind::Loop { block, .. } => self.walk_bindability(*block, bound, vars, errs),
                _ => {}
            }
        }
    }
}

fn dedup(mut ls: Vec<usize>) -> Vec<usize> {
    let mut seen = HashSet::new();
    ls.retain(|l| seen.insert(*l));
    ls
}

fn bool_expr(e: &Expr, env: &dyn TypeEnv) -> Result<(), String> {
    match e.check(env)? {
        StaticType::Bool | StaticType::Any => Ok(()),
        t => Err(format!("`{e}` is {}, expected bool", t.name())),
    }
}
