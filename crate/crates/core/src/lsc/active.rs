use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::event::{EventInstance, Origin, Source};
use crate::expr::{EvalError, Expr, Scope};
use crate::object::ObjectStore;
use crate::statechart::PeerStates;
use crate::value::{ObjectId, Value};

use super::chart::{ChartSpec, ItemKind, LoopSpec, Msg};
use super::{ArgTerm, LifelineBinding, Mode, Temp};

/// Auto-advance steps allowed within one settle, guarding `loop while`
/// bodies that never wait for a message.
const MAX_SETTLE_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartStatus {
    Running,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    Cold,
    Hot,
    Forbidden,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Cold => "cold",
            ViolationKind::Hot => "hot",
            ViolationKind::Forbidden => "forbidden",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub chart: String,
    pub copy: u64,
    pub kind: ViolationKind,
    /// The violated element (message, condition or forbid).
    pub element: Option<usize>,
    pub event: Option<EventInstance>,
    pub cut: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Irrelevant,
    Progressed,
    Completed,
    Violated { kind: ViolationKind, element: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnabledMessage {
    pub element: usize,
    pub name: String,
    pub mode: Mode,
    pub temp: Temp,
    /// The concrete event, when every endpoint and argument is bound.
    pub event: Option<EventInstance>,
}

/// What chart copies may read while advancing.
pub struct LscContext<'a> {
    pub store: &'a ObjectStore,
    pub states: &'a dyn PeerStates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopFrame {
    /// The loop's item in block 0.
    pub item: usize,
    pub block: usize,
    pub pos: Vec<usize>,
    pub iteration: u64,
    /// Instances visited by `loop each`, fixed when the loop starts.
    pub each: Vec<ObjectId>,
    /// Bind-variables first bound inside the current iteration.
    pub locals: BTreeMap<String, Value>,
}

/// One running copy of a chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveChart {
    pub chart: String,
    pub copy: u64,
    pub bindings: BTreeMap<String, Value>,
    /// Bindings established by the activating message.
    pub activation: BTreeMap<String, Value>,
    /// Per lifeline, the next location index in the chart body.
    pub pos: Vec<usize>,
    pub frame: Option<LoopFrame>,
    /// Per lifeline, locations passed so far with loop iterations unrolled.
    pub progress: Vec<u64>,
    pub status: ChartStatus,
}

enum Fit {
    Yes,
    No,
    /// The binding expression depends on a lifeline not bound yet.
    Later,
}

struct ChartScope<'a> {
    copy: &'a ActiveChart,
    spec: &'a ChartSpec,
    ctx: &'a LscContext<'a>,
    candidate: Option<&'a ObjectId>,
}

impl Scope for ChartScope<'_> {
    fn ident(&self, name: &str) -> Result<Value, EvalError> {
        if let Some(c) = self.candidate {
            if name == "self" {
                return Ok(Value::Ref(Some(c.clone())));
            }
            if let Ok(v) = self.ctx.store.get(c, name) {
                return Ok(v);
            }
        }
        if let Some(v) = self.copy.lookup(self.spec, name) {
            return Ok(v);
        }
        if self.spec.lifeline_index(name).is_some() {
            return Err(EvalError::Unbound(name.to_string()));
        }
        let id = ObjectId::new(name);
        if self.ctx.store.contains(&id) {
            return Ok(Value::Ref(Some(id)));
        }
        Err(EvalError::Unbound(name.to_string()))
    }

    fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError> {
        Ok(self.ctx.store.get(object, prop)?)
    }

    fn active(&self, object: Option<&ObjectId>, path: &str) -> Result<bool, EvalError> {
        match object {
            Some(o) => self.ctx.states.is_active(o, path),
            None => Err(EvalError::NoStateQuery),
        }
    }
}

impl ActiveChart {
    fn fresh(spec: &ChartSpec) -> Self {
        let n = spec.lifelines.len();
        let bindings = spec
            .lifelines
            .iter()
            .filter_map(|l| match &l.binding {
                LifelineBinding::Concrete(o) => Some((l.name.clone(), Value::Ref(Some(o.clone())))),
                _ => None,
            })
            .collect();
        ActiveChart {
            chart: spec.name.clone(),
            copy: 0,
            bindings,
            activation: BTreeMap::new(),
            pos: vec![0; n],
            frame: None,
            progress: vec![0; n],
            status: ChartStatus::Running,
        }
    }

    pub fn is_running(&self) -> bool {
        self.status == ChartStatus::Running
    }

    pub fn cut(&self) -> &[u64] {
        &self.progress
    }

    /// New copies for every minimal message `event` unifies with, skipping
    /// binding sets that already have a running copy. Each copy is returned
    /// with the outcome of settling past its activating message.
    pub fn try_activate(
        spec: &ChartSpec,
        event: &EventInstance,
        ctx: &LscContext<'_>,
        running: &[ActiveChart],
        next_copy: &mut u64,
    ) -> Vec<(ActiveChart, Advance)> {
        let mut out: Vec<(ActiveChart, Advance)> = Vec::new();
        let base = ActiveChart::fresh(spec);
        for &i in &spec.minimal {
            let ItemKind::Message(m) = &spec.blocks[0].items[i].kind else { continue };
            let Some(mut copy) = base.unify(spec, 0, m, event, ctx) else { continue };
            let dup = running.iter().any(|c| c.is_running() && c.chart == spec.name && c.activation == copy.bindings)
                || out.iter().any(|(c, _)| c.activation == copy.bindings);
            if dup {
                continue;
            }
            copy.activation = copy.bindings.clone();
            copy.copy = *next_copy;
            *next_copy += 1;
            copy.pass(spec, 0, i);
            let result = copy.settle(spec, ctx);
            out.push((copy, result));
        }
        out
    }

    pub(crate) fn lookup(&self, spec: &ChartSpec, name: &str) -> Option<Value> {
        if let Some(f) = &self.frame {
            if let Some(l) = self.each_lifeline(spec) {
                if spec.lifelines[l].name == name {
                    return f.each.get(f.iteration as usize).map(|o| Value::Ref(Some(o.clone())));
                }
            }
            if let Some(v) = f.locals.get(name) {
                return Some(v.clone());
            }
        }
        self.bindings.get(name).cloned()
    }

    fn each_lifeline(&self, spec: &ChartSpec) -> Option<usize> {
        let f = self.frame.as_ref()?;
        match &spec.blocks[0].items[f.item].kind {
            ItemKind::Loop { spec: LoopSpec::Each(l), .. } => Some(*l),
            _ => None,
        }
    }

    fn lifeline_object(&self, spec: &ChartSpec, l: usize) -> Option<ObjectId> {
        match self.lookup(spec, &spec.lifelines[l].name)? {
            Value::Ref(Some(o)) => Some(o),
            _ => None,
        }
    }

    fn current(&self) -> (usize, &[usize]) {
        match &self.frame {
            Some(f) => (f.block, &f.pos),
            None => (0, &self.pos),
        }
    }

    fn eval(&self, spec: &ChartSpec, e: &Expr, ctx: &LscContext<'_>, candidate: Option<&ObjectId>) -> Result<Value, EvalError> {
        e.eval(&ChartScope { copy: self, spec, ctx, candidate })
    }

    fn holds(&self, spec: &ChartSpec, e: &Expr, ctx: &LscContext<'_>, candidate: Option<&ObjectId>) -> Result<bool, EvalError> {
        e.eval_bool(&ChartScope { copy: self, spec, ctx, candidate })
    }

    /// Moves past item `i` of block `b` on all its lifelines.
    fn pass(&mut self, spec: &ChartSpec, b: usize, i: usize) {
        for &l in &spec.blocks[b].items[i].lifelines {
            self.progress[l] += 1;
            match (&mut self.frame, b) {
                (Some(f), b) if b == f.block => f.pos[l] += 1,
                _ => self.pos[l] += 1,
            }
        }
    }

    fn fit(&self, spec: &ChartSpec, l: usize, o: &ObjectId, ctx: &LscContext<'_>) -> Fit {
        if let Some(v) = self.lookup(spec, &spec.lifelines[l].name) {
            return if v == Value::Ref(Some(o.clone())) { Fit::Yes } else { Fit::No };
        }
        match &spec.lifelines[l].binding {
            LifelineBinding::Symbolic(cond) => {
                if ctx.store.object(o).map(|x| x.class) != Ok(spec.lifelines[l].class) {
                    return Fit::No;
                }
                match cond.as_ref().map(|e| self.holds(spec, e, ctx, Some(o))) {
                    None | Some(Ok(true)) => Fit::Yes,
                    Some(Err(EvalError::Unbound(_))) => Fit::Later,
                    Some(_) => Fit::No,
                }
            }
            _ => Fit::No,
        }
    }

    fn bind_lifeline(&mut self, spec: &ChartSpec, l: usize, o: &ObjectId) {
        let name = &spec.lifelines[l].name;
        if self.lookup(spec, name).is_none() {
            self.bindings.insert(name.clone(), Value::Ref(Some(o.clone())));
        }
    }

    fn bind(&mut self, block: usize, name: &str, v: Value) {
        match &mut self.frame {
            Some(f) if block == f.block => {
                f.locals.insert(name.to_string(), v);
            }
            _ => {
                self.bindings.insert(name.to_string(), v);
            }
        }
    }

    /// Unifies a message located in `block` with an event, returning the
    /// copy with any new bindings.
    fn unify(&self, spec: &ChartSpec, block: usize, m: &Msg, ev: &EventInstance, ctx: &LscContext<'_>) -> Option<ActiveChart> {
        if m.name != ev.name || m.args.len() != ev.args.len() {
            return None;
        }
        let mut t = self.clone();
        let target = Source::Object(ev.target.clone());
        let mut later = Vec::new();
        for (lf, part) in [(m.from, &ev.source), (Some(m.to), &target)] {
            match (lf, part) {
                (None, Source::Env) => {}
                (Some(l), Source::Object(o)) => match t.fit(spec, l, o, ctx) {
                    Fit::Yes => t.bind_lifeline(spec, l, o),
                    Fit::Later => later.push((l, o)),
                    Fit::No => return None,
                },
                _ => return None,
            }
        }
        for (l, o) in later {
            match t.fit(spec, l, o, ctx) {
                Fit::Yes => t.bind_lifeline(spec, l, o),
                _ => return None,
            }
        }
        for (term, v) in m.args.iter().zip(&ev.args) {
            match term {
                ArgTerm::Bind(n) => match t.lookup(spec, n) {
                    Some(b) if b == *v => {}
                    Some(_) => return None,
                    None => t.bind(block, n, v.clone()),
                },
                ArgTerm::Expr(e) => {
                    if t.eval(spec, e, ctx, None).ok().as_ref() != Some(v) {
                        return None;
                    }
                }
            }
        }
        Some(t)
    }

    /// Whether `m` names only lifelines this copy has already bound.
    fn fully_bound_endpoints(&self, spec: &ChartSpec, m: &Msg) -> bool {
        m.from.iter().chain([&m.to]).all(|&l| self.lifeline_object(spec, l).is_some())
    }

    pub fn advance(&mut self, spec: &ChartSpec, ev: &EventInstance, ctx: &LscContext<'_>) -> Advance {
        if !self.is_running() {
            return Advance::Irrelevant;
        }
        if let Origin::Lsc { chart, copy, element } = &ev.origin {
            if *chart == spec.name && *copy == self.copy {
                // The event was concretized from this element, so its
                // arguments are not re-evaluated against the updated store.
                if let Some((b, i, _)) = spec.message(*element) {
                    let (cb, pos) = self.current();
                    if b == cb && spec.blocks[b].at_front(i, pos) {
                        self.pass(spec, b, i);
                        return self.settle(spec, ctx);
                    }
                }
            }
        }
        if let Some(element) = self.forbidden_match(spec, ev, ctx) {
            return self.abort(ViolationKind::Forbidden, Some(element));
        }
        let (b, pos) = self.current();
        let block = &spec.blocks[b];
        for i in 0..block.items.len() {
            if !block.at_front(i, pos) {
                continue;
            }
            if let ItemKind::Message(m) = &block.items[i].kind {
                if let Some(t) = self.unify(spec, b, m, ev, ctx) {
                    *self = t;
                    self.pass(spec, b, i);
                    return self.settle(spec, ctx);
                }
            }
        }
        for (bb, other) in spec.blocks.iter().enumerate() {
            for (ii, item) in other.items.iter().enumerate() {
                let ItemKind::Message(m) = &item.kind else { continue };
                if bb == b && other.at_front(ii, pos) {
                    continue;
                }
                if self.fully_bound_endpoints(spec, m) && self.unify(spec, bb, m, ev, ctx).is_some() {
                    let kind = match m.temp {
                        Temp::Hot => ViolationKind::Hot,
                        Temp::Cold => ViolationKind::Cold,
                    };
                    return self.abort(kind, Some(item.element));
                }
            }
        }
        Advance::Irrelevant
    }

    fn abort(&mut self, kind: ViolationKind, element: Option<usize>) -> Advance {
        self.status = ChartStatus::Aborted;
        Advance::Violated { kind, element }
    }

    /// Element id of an in-scope forbid matching `ev`.
    fn forbidden_match(&self, spec: &ChartSpec, ev: &EventInstance, ctx: &LscContext<'_>) -> Option<usize> {
        let mut scopes = vec![(0usize, self.pos.as_slice())];
        if let Some(f) = &self.frame {
            scopes.push((f.block, f.pos.as_slice()));
        }
        for (b, pos) in scopes {
            let block = &spec.blocks[b];
            for f in &block.forbids {
                if !block.passed(f.start, pos) || block.passed(f.end, pos) {
                    continue;
                }
                if f.name != ev.name {
                    continue;
                }
                let ends_match = |lf: Option<usize>, part: &Source| match (lf, part) {
                    (None, Source::Env) => true,
                    (Some(l), Source::Object(o)) => match self.lifeline_object(spec, l) {
                        Some(b) => b == *o,
                        None => ctx.store.object(o).map(|x| x.class) == Ok(spec.lifelines[l].class),
                    },
                    _ => false,
                };
                if !ends_match(f.from, &ev.source) || !ends_match(Some(f.to), &Source::Object(ev.target.clone())) {
                    continue;
                }
                let args_match = match &f.args {
                    None => true,
                    Some(terms) => {
                        terms.len() == ev.args.len()
                            && terms.iter().zip(&ev.args).all(|(t, v)| match t {
                                ArgTerm::Bind(n) => self.lookup(spec, n).is_none_or(|b| b == *v),
                                ArgTerm::Expr(e) => self.eval(spec, e, ctx, None).ok().as_ref() == Some(v),
                            })
                    }
                };
                if args_match {
                    return Some(f.element);
                }
            }
        }
        None
    }

    /// Binds symbolic lifelines that carry a binding expression as soon as
    /// the lifelines it mentions are bound: first match in creation order.
    fn eager_bind(&mut self, spec: &ChartSpec, ctx: &LscContext<'_>) {
        for (l, lifeline) in spec.lifelines.iter().enumerate() {
            let LifelineBinding::Symbolic(Some(cond)) = &lifeline.binding else { continue };
            if self.bindings.contains_key(&lifeline.name) {
                continue;
            }
            for obj in ctx.store.objects().iter().filter(|o| o.class == spec.lifelines[l].class) {
                match self.holds(spec, cond, ctx, Some(&obj.id)) {
                    Ok(true) => {
                        self.bindings.insert(lifeline.name.clone(), Value::Ref(Some(obj.id.clone())));
                        break;
                    }
                    Err(EvalError::Unbound(_)) => break,
                    _ => {}
                }
            }
        }
    }

    fn loop_continues(&self, spec: &ChartSpec, ls: &LoopSpec, iteration: u64, each_len: usize, ctx: &LscContext<'_>) -> bool {
        match ls {
            LoopSpec::Count(n) => iteration < *n,
            LoopSpec::While(e) => self.holds(spec, e, ctx, None).unwrap_or(false),
            LoopSpec::Each(_) => (iteration as usize) < each_len,
        }
    }

    /// Auto-advances conditions, syncs, labels and loop boundaries.
    fn settle(&mut self, spec: &ChartSpec, ctx: &LscContext<'_>) -> Advance {
        for _ in 0..MAX_SETTLE_STEPS {
            self.eager_bind(spec, ctx);
            let (b, pos) = self.current();
            let block = &spec.blocks[b];
            let front = (0..block.items.len()).find(|&i| {
                block.at_front(i, pos) && !matches!(block.items[i].kind, ItemKind::Message(_))
            });
            if let Some(i) = front {
                let item = &block.items[i];
                match &item.kind {
                    ItemKind::Sync | ItemKind::Label(_) => self.pass(spec, b, i),
                    ItemKind::Cond { expr, temp } => {
                        if self.holds(spec, expr, ctx, None).unwrap_or(false) {
                            self.pass(spec, b, i);
                        } else if *temp == Temp::Hot {
                            return self.abort(ViolationKind::Hot, Some(item.element));
                        } else if b != 0 {
                            let f = self.frame.as_mut().expect("loop block has a frame");
                            for (p, lane) in f.pos.iter_mut().zip(&block.lanes) {
                                *p = lane.len();
                            }
                        } else {
                            return self.abort(ViolationKind::Cold, Some(item.element));
                        }
                    }
                    ItemKind::Loop { spec: ls, block: lb } => {
                        let each = match ls {
                            LoopSpec::Each(l) => {
                                let cond = match &spec.lifelines[*l].binding {
                                    LifelineBinding::All(c) => c.clone(),
                                    _ => None,
                                };
                                ctx.store
                                    .objects()
                                    .iter()
                                    .filter(|o| o.class == spec.lifelines[*l].class)
                                    .filter(|o| cond.as_ref().is_none_or(|c| self.holds(spec, c, ctx, Some(&o.id)).unwrap_or(false)))
                                    .map(|o| o.id.clone())
                                    .collect()
                            }
                            _ => vec![],
                        };
                        if self.loop_continues(spec, ls, 0, each.len(), ctx) {
                            self.frame = Some(LoopFrame {
                                item: i,
                                block: *lb,
                                pos: vec![0; spec.lifelines.len()],
                                iteration: 0,
                                each,
                                locals: BTreeMap::new(),
                            });
                        } else {
                            self.pass(spec, 0, i);
                        }
                    }
                    ItemKind::Message(_) => unreachable!("messages wait for events"),
                }
                continue;
            }
            match &self.frame {
                Some(f) if spec.blocks[f.block].done(&f.pos) => {
                    let item = f.item;
                    let ItemKind::Loop { spec: ls, .. } = &spec.blocks[0].items[item].kind else {
                        unreachable!("frames belong to loops")
                    };
                    let next = f.iteration + 1;
                    if self.loop_continues(spec, ls, next, f.each.len(), ctx) {
                        let f = self.frame.as_mut().expect("checked above");
                        f.iteration = next;
                        f.pos.iter_mut().for_each(|p| *p = 0);
                        f.locals.clear();
                    } else {
                        self.frame = None;
                        self.pass(spec, 0, item);
                    }
                }
                Some(_) => return Advance::Progressed,
                None if spec.blocks[0].done(&self.pos) => {
                    self.status = ChartStatus::Completed;
                    return Advance::Completed;
                }
                None => return Advance::Progressed,
            }
        }
        log::warn!("chart `{}` copy {} kept auto-advancing without waiting; aborting", self.chart, self.copy);
        self.abort(ViolationKind::Hot, None)
    }

    /// Messages at the front of the cut.
    pub fn enabled_messages(&self, spec: &ChartSpec, ctx: &LscContext<'_>) -> Vec<EnabledMessage> {
        if !self.is_running() {
            return vec![];
        }
        let (b, pos) = self.current();
        let block = &spec.blocks[b];
        let mut out = Vec::new();
        for i in 0..block.items.len() {
            let ItemKind::Message(m) = &block.items[i].kind else { continue };
            if !block.at_front(i, pos) {
                continue;
            }
            let element = block.items[i].element;
            out.push(EnabledMessage {
                element,
                name: m.name.clone(),
                mode: m.mode,
                temp: m.temp,
                event: self.concretize(spec, m, element, ctx),
            });
        }
        out
    }

    fn concretize(&self, spec: &ChartSpec, m: &Msg, element: usize, ctx: &LscContext<'_>) -> Option<EventInstance> {
        let source = match m.from {
            None => Source::Env,
            Some(l) => Source::Object(self.lifeline_object(spec, l)?),
        };
        let target = self.lifeline_object(spec, m.to)?;
        let mut args = Vec::new();
        for a in &m.args {
            args.push(match a {
                ArgTerm::Bind(n) => self.lookup(spec, n)?,
                ArgTerm::Expr(e) => self.eval(spec, e, ctx, None).ok()?,
            });
        }
        Some(EventInstance {
            source,
            target,
            name: m.name.clone(),
            args,
            origin: Origin::Lsc { chart: spec.name.clone(), copy: self.copy, element },
            timer: None,
        })
    }

    /// Whether delivering `ev` would cause a hot or forbidden violation here.
    pub fn is_blocked(&self, spec: &ChartSpec, ev: &EventInstance, ctx: &LscContext<'_>) -> bool {
        if !self.is_running() {
            return false;
        }
        let mut probe = self.clone();
        matches!(
            probe.advance(spec, ev, ctx),
            Advance::Violated { kind: ViolationKind::Hot | ViolationKind::Forbidden, .. }
        )
    }
}
