use std::collections::HashSet;

use crate::diag::{Diagnostic, Span};
use crate::expr::{Expr, StaticType, TypeEnv};
use crate::object::{ClassDef, ObjectStore};
use crate::value::{ObjectId, ValueKind};

use super::{join, path_matches, Action, LValue, RegionDef, StateDef, StateDefKind, StatechartDef, Trigger, VarDecl};

pub type StateId = usize;
pub type RegionId = usize;
pub type TransitionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Basic,
    Compound,
    Orthogonal,
    Choice,
    Final,
}

#[derive(Debug, Clone)]
pub(crate) struct StateNode {
    pub name: String,
    pub path: String,
    pub kind: StateKind,
    pub parent: RegionId,
    pub regions: Vec<RegionId>,
    pub entry: Vec<Action>,
    pub exit: Vec<Action>,
    pub transitions: Vec<TransitionId>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub(crate) struct RegionNode {
    /// Dotted path for named regions.
    pub path: Option<String>,
    pub parent: Option<StateId>,
    pub states: Vec<StateId>,
    pub initial: StateId,
}

#[derive(Debug, Clone)]
pub(crate) struct TransitionNode {
    pub source: StateId,
    pub target: Option<StateId>,
    pub trigger: Trigger,
    pub guard: Option<Expr>,
    pub actions: Vec<Action>,
    pub span: Span,
}

/// A validated statechart, flattened into index-addressed nodes.
#[derive(Debug, Clone)]
pub struct StatechartSpec {
    pub name: String,
    pub owner_class: String,
    pub variables: Vec<VarDecl>,
    pub(crate) states: Vec<StateNode>,
    pub(crate) regions: Vec<RegionNode>,
    pub(crate) transitions: Vec<TransitionNode>,
    pub(crate) roots: Vec<RegionId>,
}

/// Resolves `active(obj, path)` against the statechart of the object's
/// class, given the class name.
pub type RemoteActiveCheck<'a> = &'a dyn Fn(&str, &[String]) -> Result<(), String>;

impl StatechartSpec {
    /// Validates a declaration against the object model. `remote` resolves
    /// `active(obj, path)` references to other machines.
    pub fn compile(
        def: &StatechartDef,
        store: &ObjectStore,
        remote: RemoteActiveCheck<'_>,
    ) -> Result<StatechartSpec, Vec<Diagnostic>> {
        let mut b = Builder { diags: Vec::new(), spec: StatechartSpec::empty(def), pending: Vec::new() };
        let Some(owner) = store.class_by_name(&def.owner_class) else {
            return Err(vec![Diagnostic::new(def.span, format!("unknown class `{}`", def.owner_class))]);
        };

        let mut seen = HashSet::new();
        for v in &def.variables {
            if !seen.insert(v.name.as_str()) {
                b.diags.push(Diagnostic::new(v.span, format!("variable `{}` declared twice", v.name)));
            }
            if let Some(d) = &v.default {
                if !d.conforms_to(v.kind) || matches!(d, crate::value::Value::Ref(Some(_))) {
                    b.diags.push(Diagnostic::new(v.span, format!("default of `{}` is not a {} literal", v.name, v.kind)));
                }
            }
        }

        if def.regions.is_empty() {
            b.diags.push(Diagnostic::new(def.span, format!("statechart `{}` has no states", def.name)));
        }
        if def.regions.len() > 1 {
            b.check_region_names(&def.regions, def.span);
        }
        for r in &def.regions {
            let id = b.region(r, None, "");
            b.spec.roots.push(id);
        }
        b.resolve_targets();
        if b.diags.is_empty() {
            b.check_behaviour(owner, store, remote);
        }
        if b.diags.is_empty() {
            Ok(b.spec)
        } else {
            Err(b.diags)
        }
    }

    fn empty(def: &StatechartDef) -> Self {
        StatechartSpec {
            name: def.name.clone(),
            owner_class: def.owner_class.clone(),
            variables: def.variables.clone(),
            states: vec![],
            regions: vec![],
            transitions: vec![],
            roots: vec![],
        }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_path(&self, id: StateId) -> &str {
        &self.states[id].path
    }

    pub fn state_kind(&self, id: StateId) -> StateKind {
        self.states[id].kind
    }

    pub fn state_by_path(&self, path: &str) -> Option<StateId> {
        self.states.iter().position(|s| s.path == path)
    }

    pub(crate) fn parent_state(&self, s: StateId) -> Option<StateId> {
        self.regions[self.states[s].parent].parent
    }

    /// Resolves a path used by `active(...)`: a state or named region, by
    /// exact path or unique dotted suffix.
    pub(crate) fn resolve_query_path(&self, path: &str) -> Result<QueryNode, String> {
        if let Some(s) = self.state_by_path(path) {
            return Ok(QueryNode::State(s));
        }
        if let Some(r) = self.regions.iter().position(|r| r.path.as_deref() == Some(path)) {
            return Ok(QueryNode::Region(r));
        }
        let mut hits: Vec<QueryNode> = self
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| path_matches(&s.path, path))
            .map(|(i, _)| QueryNode::State(i))
            .collect();
        hits.extend(
            self.regions
                .iter()
                .enumerate()
                .filter(|(_, r)| r.path.as_deref().is_some_and(|p| path_matches(p, path)))
                .map(|(i, _)| QueryNode::Region(i)),
        );
        match hits.len() {
            1 => Ok(hits[0]),
            0 => Err(format!("unknown state `{path}` in statechart `{}`", self.name)),
            _ => Err(format!("state path `{path}` is ambiguous in statechart `{}`", self.name)),
        }
    }

    /// Region ancestors of a state, innermost first.
    pub(crate) fn region_chain(&self, s: StateId) -> Vec<RegionId> {
        let mut out = Vec::new();
        let mut r = self.states[s].parent;
        loop {
            out.push(r);
            match self.regions[r].parent {
                Some(p) => r = self.states[p].parent,
                None => return out,
            }
        }
    }

    pub(crate) fn region_contains(&self, r: RegionId, s: StateId) -> bool {
        self.region_chain(s).contains(&r)
    }

    /// Scoped resolution of a transition target: search the source's
    /// enclosing regions from the innermost outward.
    fn resolve_target(&self, source: StateId, path: &str) -> Result<StateId, String> {
        for r in self.region_chain(source) {
            let hits: Vec<StateId> = (0..self.states.len())
                .filter(|&s| path_matches(&self.states[s].path, path) && self.region_contains(r, s))
                .collect();
            match hits.len() {
                0 => continue,
                1 => return Ok(hits[0]),
                _ => return Err(format!("target `{path}` is ambiguous")),
            }
        }
        let hits: Vec<StateId> = (0..self.states.len()).filter(|&s| path_matches(&self.states[s].path, path)).collect();
        match hits.len() {
            1 => Ok(hits[0]),
            0 => Err(format!("transition targets undeclared state `{path}`")),
            _ => Err(format!("target `{path}` is ambiguous")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum QueryNode {
    State(StateId),
    Region(RegionId),
}

struct Builder {
    diags: Vec<Diagnostic>,
    spec: StatechartSpec,
    /// (transition, target path, span) awaiting resolution.
    pending: Vec<(TransitionId, String, Span)>,
}

impl Builder {
    fn check_region_names(&mut self, regions: &[RegionDef], span: Span) {
        let mut seen = HashSet::new();
        for r in regions {
            match &r.name {
                None => self.diags.push(Diagnostic::new(span, "concurrent regions must be named")),
                Some(n) => {
                    if !seen.insert(n.clone()) {
                        self.diags.push(Diagnostic::new(r.span, format!("region `{n}` declared twice")));
                    }
                }
            }
        }
    }

    fn region(&mut self, def: &RegionDef, parent: Option<StateId>, prefix: &str) -> RegionId {
        let id = self.spec.regions.len();
        let base = match &def.name {
            Some(n) => join(prefix, n),
            None => prefix.to_string(),
        };
        self.spec.regions.push(RegionNode {
            path: def.name.as_ref().map(|_| base.clone()),
            parent,
            states: vec![],
            initial: usize::MAX,
        });
        if def.states.is_empty() {
            self.diags.push(Diagnostic::new(def.span, "region has no states"));
        }
        let mut names = HashSet::new();
        for s in &def.states {
            if !names.insert(s.name.as_str()) {
                self.diags.push(Diagnostic::new(s.span, format!("state `{}` declared twice", s.name)));
            }
            let sid = self.state(s, id, &base);
            self.spec.regions[id].states.push(sid);
        }
        let states = self.spec.regions[id].states.clone();
        let initial = match &def.initial {
            Some(n) => {
                let hit = states.iter().copied().find(|&s| self.spec.states[s].name == *n);
                if hit.is_none() {
                    self.diags.push(Diagnostic::new(def.span, format!("initial state `{n}` is not declared here")));
                }
                hit
            }
            None => states.iter().copied().find(|&s| self.spec.states[s].kind != StateKind::Choice),
        };
        match initial {
            Some(s) if self.spec.states[s].kind == StateKind::Choice => {
                self.diags.push(Diagnostic::new(def.span, "a choice node cannot be an initial state"));
            }
            Some(s) => self.spec.regions[id].initial = s,
            None if !def.states.is_empty() => {
                self.diags.push(Diagnostic::new(def.span, "region has no state that can be initial"));
            }
            None => {}
        }
        id
    }

    fn state(&mut self, def: &StateDef, parent: RegionId, prefix: &str) -> StateId {
        let id = self.spec.states.len();
        let path = join(prefix, &def.name);
        let kind = match (def.kind, def.regions.len()) {
            (StateDefKind::Choice, _) => StateKind::Choice,
            (StateDefKind::Final, _) => StateKind::Final,
            (StateDefKind::State, 0) => StateKind::Basic,
            (StateDefKind::State, 1) => StateKind::Compound,
            (StateDefKind::State, _) => StateKind::Orthogonal,
        };
        self.spec.states.push(StateNode {
            name: def.name.clone(),
            path: path.clone(),
            kind,
            parent,
            regions: vec![],
            entry: def.entry.clone(),
            exit: def.exit.clone(),
            transitions: vec![],
            span: def.span,
        });
        match kind {
            StateKind::Orthogonal => self.check_region_names(&def.regions, def.span),
            StateKind::Choice | StateKind::Final if !def.regions.is_empty() => {
                self.diags.push(Diagnostic::new(def.span, format!("`{}` cannot contain substates", def.name)));
            }
            _ => {}
        }
        let mut else_count = 0;
        for t in &def.transitions {
            let branch = matches!(t.trigger, Trigger::Branch | Trigger::Else);
            if kind == StateKind::Choice && !branch {
                self.diags.push(Diagnostic::new(t.span, "choice nodes only have guarded branches"));
            }
            if kind != StateKind::Choice && branch {
                self.diags.push(Diagnostic::new(t.span, "triggerless transitions are only allowed on choice nodes"));
            }
            if kind == StateKind::Final {
                self.diags.push(Diagnostic::new(t.span, "final states have no outgoing transitions"));
            }
            if t.trigger == Trigger::Else {
                else_count += 1;
                if t.guard.is_some() {
                    self.diags.push(Diagnostic::new(t.span, "the else-branch takes no guard"));
                }
            }
            if t.trigger == Trigger::Branch && t.guard.is_none() {
                self.diags.push(Diagnostic::new(t.span, "choice branch needs a guard"));
            }
            if branch && t.target.is_none() {
                self.diags.push(Diagnostic::new(t.span, "choice branch needs a target"));
            }
            if let Trigger::After(0) | Trigger::Every(0) = t.trigger {
                self.diags.push(Diagnostic::new(t.span, "timer duration must be positive"));
            }
            let tid = self.spec.transitions.len();
            self.spec.transitions.push(TransitionNode {
                source: id,
                target: None,
                trigger: t.trigger.clone(),
                guard: t.guard.clone(),
                actions: t.actions.clone(),
                span: t.span,
            });
            if let Some(p) = &t.target {
                self.pending.push((tid, p.join("."), t.span));
            }
            self.spec.states[id].transitions.push(tid);
        }
        if else_count > 1 {
            self.diags.push(Diagnostic::new(def.span, "choice node has more than one else-branch"));
        }
        if kind == StateKind::Choice && def.transitions.is_empty() {
            self.diags.push(Diagnostic::new(def.span, "choice node has no branches"));
        }
        for r in &def.regions {
            let rid = self.region(r, Some(id), &path);
            self.spec.states[id].regions.push(rid);
        }
        id
    }

    fn resolve_targets(&mut self) {
        for (tid, path, span) in std::mem::take(&mut self.pending) {
            let source = self.spec.transitions[tid].source;
            match self.spec.resolve_target(source, &path) {
                Ok(t) => self.spec.transitions[tid].target = Some(t),
                Err(m) => self.diags.push(Diagnostic::new(span, m)),
            }
        }
    }

    fn check_behaviour(&mut self, owner: &ClassDef, store: &ObjectStore, remote: RemoteActiveCheck<'_>) {
        let spec = &self.spec;
        let mut diags = Vec::new();
        let env_for = |params: &[String]| ScEnv { spec, owner, store, params: params.to_vec(), remote };
        for s in &spec.states {
            let span = s.span;
            let env = env_for(&[]);
            for a in s.entry.iter().chain(&s.exit) {
                if let Err(m) = check_action(a, &env) {
                    diags.push(Diagnostic::new(span, format!("in `{}`: {m}", s.path)));
                }
            }
            for &tid in &s.transitions {
                let t = &spec.transitions[tid];
                let span = t.span;
                let params = match &t.trigger {
                    Trigger::Event { name, params } => {
                        match owner.event_arity(name) {
                            None => diags.push(Diagnostic::new(
                                span,
                                format!("`{}` reacts to `{name}`, which class `{}` does not declare", s.path, owner.name),
                            )),
                            Some(n) if !params.is_empty() && params.len() != n => diags.push(Diagnostic::new(
                                span,
                                format!("`{name}` takes {n} arguments, trigger names {}", params.len()),
                            )),
                            _ => {}
                        }
                        params.clone()
                    }
                    _ => vec![],
                };
                let env = env_for(&params);
                if let Some(g) = &t.guard {
                    match g.check(&env) {
                        Ok(StaticType::Bool) | Ok(StaticType::Any) => {}
                        Ok(_) => diags.push(Diagnostic::new(span, format!("guard `{g}` in `{}` is not boolean", s.path))),
                        Err(m) => diags.push(Diagnostic::new(span, format!("in `{}`: {m}", s.path))),
                    }
                }
                for a in &t.actions {
                    if let Err(m) = check_action(a, &env) {
                        diags.push(Diagnostic::new(span, format!("in `{}`: {m}", s.path)));
                    }
                }
            }
        }
        self.diags.extend(diags);
    }
}

struct ScEnv<'a> {
    spec: &'a StatechartSpec,
    owner: &'a ClassDef,
    store: &'a ObjectStore,
    params: Vec<String>,
    remote: RemoteActiveCheck<'a>,
}

impl ScEnv<'_> {
    fn assignable(&self, name: &str) -> Option<ValueKind> {
        if let Some(v) = self.spec.variables.iter().find(|v| v.name == name) {
            return Some(v.kind);
        }
        self.owner.property_def(name).map(|p| p.kind)
    }

    fn event_arity_of(&self, class: &str, event: &str) -> Result<Option<usize>, String> {
        match self.store.class_by_name(class) {
            Some(c) => Ok(c.event_arity(event)),
            None => Err(format!("unknown class `{class}`")),
        }
    }
}

impl TypeEnv for ScEnv<'_> {
    fn ident(&self, name: &str) -> Option<StaticType> {
        if self.params.iter().any(|p| p == name) {
            return Some(StaticType::Any);
        }
        if let Some(k) = self.assignable(name) {
            return Some(StaticType::of_kind(k));
        }
        if name == "self" {
            return Some(StaticType::Ref(Some(self.owner.name.clone())));
        }
        let id = ObjectId::new(name);
        self.store.class_of(&id).ok().map(|c| StaticType::Ref(Some(c.name.clone())))
    }

    fn property(&self, class: &str, prop: &str) -> Option<ValueKind> {
        self.store.class_by_name(class)?.property_def(prop).map(|p| p.kind)
    }

    fn check_active(&self, object: Option<&str>, path: &[String]) -> Result<(), String> {
        match object {
            None | Some("self") => self.spec.resolve_query_path(&path.join(".")).map(|_| ()),
            Some(o) => match self.ident(o) {
                Some(StaticType::Ref(Some(class))) => (self.remote)(&class, path),
                _ => Ok(()),
            },
        }
    }
}

fn check_args(args: &[Expr], env: &ScEnv<'_>) -> Result<(), String> {
    for a in args {
        a.check(env)?;
    }
    Ok(())
}

fn check_action(a: &Action, env: &ScEnv<'_>) -> Result<(), String> {
    match a {
        Action::Assign { target: LValue::Name(n), value } => {
            let kind = env.assignable(n).ok_or_else(|| format!("cannot assign to `{n}`: not a variable or property"))?;
            let t = value.check(env)?;
            if !t.compatible(&StaticType::of_kind(kind)) {
                return Err(format!("`{n}` is {kind}, assigned {}", t.name()));
            }
            Ok(())
        }
        Action::Assign { target: LValue::Field(base, prop), value } => {
            let t = value.check(env)?;
            match base.check(env)? {
                StaticType::Ref(Some(class)) => {
                    let kind = env.property(&class, prop).ok_or_else(|| format!("class `{class}` has no property `{prop}`"))?;
                    if !t.compatible(&StaticType::of_kind(kind)) {
                        return Err(format!("`{prop}` is {kind}, assigned {}", t.name()));
                    }
                    Ok(())
                }
                StaticType::Ref(None) | StaticType::Any => Ok(()),
                other => Err(format!("cannot assign a property of a {} value", other.name())),
            }
        }
        Action::Raise { event, args } => {
            check_args(args, env)?;
            match env.owner.event_arity(event) {
                Some(n) if n == args.len() => Ok(()),
                Some(n) => Err(format!("`{event}` takes {n} arguments, raised with {}", args.len())),
                None => Err(format!("raised event `{event}` is not declared on `{}`", env.owner.name)),
            }
        }
        Action::Emit { target, event, args } => {
            check_args(args, env)?;
            match target.check(env)? {
                StaticType::Ref(Some(class)) => match env.event_arity_of(&class, event)? {
                    Some(n) if n == args.len() => Ok(()),
                    Some(n) => Err(format!("`{event}` takes {n} arguments, emitted with {}", args.len())),
                    None => Err(format!("class `{class}` does not accept `{event}`")),
                },
                StaticType::Ref(None) | StaticType::Any => Ok(()),
                other => Err(format!("emit target `{target}` is a {} value", other.name())),
            }
        }
    }
}
