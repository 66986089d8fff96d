use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventInstance, Origin, Source, TimerTag};
use crate::expr::{EvalError, Expr, Scope};
use crate::object::{GlobalScope, ModelError, ObjectStore};
use crate::value::{ObjectId, Value, ValueKind};

use super::spec::{QueryNode, RegionId, StateId, StateKind, StatechartSpec, TransitionId};
use super::{Action, LValue, Trigger};

/// Upper bound on microsteps within one run-to-completion step.
pub const MAX_MICROSTEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("statechart `{statechart}` is for class `{expected}`, but `{object}` is a `{found}`")]
    ClassMismatch { statechart: String, object: String, expected: String, found: String },
    #[error("machine `{0}` is already initialized")]
    AlreadyInitialized(String),
    #[error("machine `{0}` is not initialized")]
    NotInitialized(String),
    #[error("event for `{target}` delivered to machine `{machine}`")]
    WrongTarget { machine: String, target: String },
    #[error("machine `{machine}`: {error}")]
    Eval { machine: String, error: EvalError },
    #[error("machine `{machine}`: {error}")]
    Store { machine: String, error: ModelError },
    #[error("machine `{machine}`: variable `{name}` is {expected}, assigned {found}")]
    VariableKind { machine: String, name: String, expected: ValueKind, found: ValueKind },
    #[error("machine `{machine}`: no branch of choice `{choice}` is enabled")]
    NoBranch { machine: String, choice: String },
    #[error("machine `{machine}` exceeded {limit} microsteps in one step")]
    MicrostepLimit { machine: String, limit: usize },
    #[error("machine `{machine}`: unknown state `{path}`")]
    UnknownState { machine: String, path: String },
}

/// Answers `active(obj, path)` about other machines.
pub trait PeerStates {
    fn is_active(&self, object: &ObjectId, path: &str) -> Result<bool, EvalError>;
}

/// Peer lookup for a machine running alone.
pub struct NoPeers;

impl PeerStates for NoPeers {
    fn is_active(&self, object: &ObjectId, _: &str) -> Result<bool, EvalError> {
        Err(EvalError::UnknownObject(format!("{object} (no statechart)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmedTimer {
    pub transition: TransitionId,
    pub state: StateId,
    pub due: u64,
    pub period: Option<u64>,
    /// Arming order, the tie-break among timers due at the same instant.
    pub seq: u64,
    pub generation: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    /// Active leaf states after the step, in document order.
    pub configuration: Vec<String>,
    pub emitted: Vec<EventInstance>,
    pub consumed: bool,
    pub log: Vec<String>,
}

/// Serializable image of a machine's mutable state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineState {
    pub owner: ObjectId,
    pub statechart: String,
    pub initialized: bool,
    pub configuration: Vec<String>,
    pub active: Vec<String>,
    pub variables: BTreeMap<String, Value>,
    pub timers: Vec<ArmedTimer>,
    pub entry_counts: Vec<u64>,
    pub timer_seq: u64,
}

/// One statechart bound to one owner object.
#[derive(Debug, Clone)]
pub struct MachineInstance {
    spec: Arc<StatechartSpec>,
    owner: ObjectId,
    initialized: bool,
    active: Vec<bool>,
    vars: Vec<Value>,
    timers: Vec<ArmedTimer>,
    entry_counts: Vec<u64>,
    timer_seq: u64,
}

struct Pending {
    name: String,
    args: Vec<Value>,
    timer: Option<TimerTag>,
}

/// Per-step mutable context.
struct Ctx<'a> {
    store: &'a mut ObjectStore,
    peers: &'a dyn PeerStates,
    now: u64,
    queue: VecDeque<Pending>,
    out: StepResult,
}

struct MachineScope<'a> {
    m: &'a MachineInstance,
    store: &'a ObjectStore,
    peers: &'a dyn PeerStates,
    params: &'a [(String, Value)],
}

impl Scope for MachineScope<'_> {
    fn ident(&self, name: &str) -> Result<Value, EvalError> {
        if let Some((_, v)) = self.params.iter().rev().find(|(n, _)| n == name) {
            return Ok(v.clone());
        }
        if let Some(i) = self.m.var_index(name) {
            return Ok(self.m.vars[i].clone());
        }
        if let Ok(v) = self.store.get(&self.m.owner, name) {
            return Ok(v);
        }
        if name == "self" {
            return Ok(Value::Ref(Some(self.m.owner.clone())));
        }
        GlobalScope { store: self.store }.ident(name)
    }

    fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError> {
        Ok(self.store.get(object, prop)?)
    }

    fn active(&self, object: Option<&ObjectId>, path: &str) -> Result<bool, EvalError> {
        match object {
            Some(o) if *o != self.m.owner => self.peers.is_active(o, path),
            _ => self.m.query(path).map_err(|_| EvalError::UnknownState(path.to_string())),
        }
    }
}

impl MachineInstance {
    pub fn new(spec: Arc<StatechartSpec>, owner: ObjectId, store: &ObjectStore) -> Result<Self, RunError> {
        let class = store
            .class_of(&owner)
            .map_err(|e| RunError::Store { machine: owner.to_string(), error: e })?;
        if class.name != spec.owner_class {
            return Err(RunError::ClassMismatch {
                statechart: spec.name.clone(),
                object: owner.to_string(),
                expected: spec.owner_class.clone(),
                found: class.name.clone(),
            });
        }
        let n = spec.state_count();
        Ok(MachineInstance {
            vars: spec.variables.iter().map(|v| v.initial()).collect(),
            spec,
            owner,
            initialized: false,
            active: vec![false; n],
            timers: vec![],
            entry_counts: vec![0; n],
            timer_seq: 0,
        })
    }

    pub fn owner(&self) -> &ObjectId {
        &self.owner
    }

    pub fn spec(&self) -> &StatechartSpec {
        &self.spec
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn variable(&self, name: &str) -> Option<&Value> {
        self.var_index(name).map(|i| &self.vars[i])
    }

    pub fn timers(&self) -> &[ArmedTimer] {
        &self.timers
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        self.spec.variables.iter().position(|v| v.name == name)
    }

    fn err(&self, error: EvalError) -> RunError {
        RunError::Eval { machine: self.owner.to_string(), error }
    }

    /// Active leaf states in document order.
    pub fn configuration(&self) -> Vec<String> {
        (0..self.active.len())
            .filter(|&s| self.active[s] && self.spec.states[s].regions.is_empty())
            .map(|s| self.spec.states[s].path.clone())
            .collect()
    }

    /// Whether a state (or the state owning a named region) is active.
    pub fn is_active(&self, path: &str) -> Result<bool, RunError> {
        self.query(path)
            .map_err(|_| RunError::UnknownState { machine: self.owner.to_string(), path: path.to_string() })
    }

    fn query(&self, path: &str) -> Result<bool, String> {
        Ok(match self.spec.resolve_query_path(path)? {
            QueryNode::State(s) => self.active[s],
            QueryNode::Region(r) => match self.spec.regions[r].parent {
                Some(p) => self.active[p],
                None => self.initialized,
            },
        })
    }

    /// Checks the structural well-formedness of the active set.
    pub fn check_configuration(&self) -> Result<(), String> {
        let spec = &self.spec;
        if !self.initialized {
            return match self.active.iter().any(|&a| a) {
                true => Err("uninitialized machine has active states".into()),
                false => Ok(()),
            };
        }
        let one_active = |r: RegionId| -> Result<(), String> {
            let n = spec.regions[r].states.iter().filter(|&&s| self.active[s]).count();
            if n == 1 {
                Ok(())
            } else {
                Err(format!("region {:?} of `{}` has {n} active states", spec.regions[r].path, spec.name))
            }
        };
        for &r in &spec.roots {
            one_active(r)?;
        }
        for (s, node) in spec.states.iter().enumerate() {
            if !self.active[s] {
                for &r in &node.regions {
                    if spec.regions[r].states.iter().any(|&c| self.active[c]) {
                        return Err(format!("`{}` is inactive but has active children", node.path));
                    }
                }
                continue;
            }
            if node.kind == StateKind::Choice {
                return Err(format!("choice `{}` is active", node.path));
            }
            for &r in &node.regions {
                one_active(r)?;
            }
        }
        Ok(())
    }

    pub fn initialize(&mut self, store: &mut ObjectStore, peers: &dyn PeerStates, now: u64) -> Result<StepResult, RunError> {
        if self.initialized {
            return Err(RunError::AlreadyInitialized(self.owner.to_string()));
        }
        self.initialized = true;
        let mut ctx = Ctx { store, peers, now, queue: VecDeque::new(), out: StepResult::default() };
        for r in self.spec.roots.clone() {
            self.enter_region(r, &[], &mut ctx)?;
        }
        self.drain(&mut ctx, 0)?;
        ctx.out.configuration = self.configuration();
        Ok(ctx.out)
    }

    /// Runs one event to completion, including internally raised events.
    pub fn dispatch(
        &mut self,
        event: &EventInstance,
        store: &mut ObjectStore,
        peers: &dyn PeerStates,
        now: u64,
    ) -> Result<StepResult, RunError> {
        if !self.initialized {
            return Err(RunError::NotInitialized(self.owner.to_string()));
        }
        if event.target != self.owner {
            return Err(RunError::WrongTarget { machine: self.owner.to_string(), target: event.target.to_string() });
        }
        let mut ctx = Ctx { store, peers, now, queue: VecDeque::new(), out: StepResult::default() };
        ctx.queue.push_back(Pending { name: event.name.clone(), args: event.args.clone(), timer: event.timer });
        self.drain(&mut ctx, 0)?;
        ctx.out.configuration = self.configuration();
        Ok(ctx.out)
    }

    fn drain(&mut self, ctx: &mut Ctx<'_>, mut steps: usize) -> Result<(), RunError> {
        while let Some(ev) = ctx.queue.pop_front() {
            steps += 1;
            if steps > MAX_MICROSTEPS {
                return Err(RunError::MicrostepLimit { machine: self.owner.to_string(), limit: MAX_MICROSTEPS });
            }
            if self.microstep(&ev, ctx)? {
                ctx.out.consumed = true;
            }
        }
        Ok(())
    }

    fn microstep(&mut self, ev: &Pending, ctx: &mut Ctx<'_>) -> Result<bool, RunError> {
        let snapshot = self.active.clone();
        let mut fired = false;
        for r in self.spec.roots.clone() {
            fired |= self.react_region(r, ev, &snapshot, ctx)?;
        }
        Ok(fired)
    }

    fn active_in(&self, r: RegionId) -> Option<StateId> {
        self.spec.regions[r].states.iter().copied().find(|&s| self.active[s])
    }

    /// Offers the event to the active state of `r`, descendants first.
    fn react_region(&mut self, r: RegionId, ev: &Pending, snapshot: &[bool], ctx: &mut Ctx<'_>) -> Result<bool, RunError> {
        let Some(s) = self.active_in(r) else { return Ok(false) };
        if !snapshot[s] {
            return Ok(false);
        }
        let mut fired = false;
        for child in self.spec.states[s].regions.clone() {
            fired |= self.react_region(child, ev, snapshot, ctx)?;
        }
        if fired || !self.active[s] {
            return Ok(fired);
        }
        for t in self.spec.states[s].transitions.clone() {
            if let Some(params) = self.enabled(t, ev, ctx)? {
                self.fire(t, &params, ctx)?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Parameter bindings when transition `t` is enabled by `ev`.
    fn enabled(&self, t: TransitionId, ev: &Pending, ctx: &Ctx<'_>) -> Result<Option<Vec<(String, Value)>>, RunError> {
        let node = &self.spec.transitions[t];
        let params = match &node.trigger {
            Trigger::Event { name, params } => {
                if ev.timer.is_some() || *name != ev.name {
                    return Ok(None);
                }
                params.iter().cloned().zip(ev.args.iter().cloned()).collect()
            }
            Trigger::After(_) | Trigger::Every(_) => match ev.timer {
                Some(tag) if tag.transition == t && tag.generation == self.entry_counts[node.source] => vec![],
                _ => return Ok(None),
            },
            Trigger::Branch | Trigger::Else => return Ok(None),
        };
        if let Some(g) = &node.guard {
            if !self.guard(g, &params, ctx)? {
                return Ok(None);
            }
        }
        Ok(Some(params))
    }

    fn guard(&self, g: &Expr, params: &[(String, Value)], ctx: &Ctx<'_>) -> Result<bool, RunError> {
        let scope = MachineScope { m: self, store: ctx.store, peers: ctx.peers, params };
        g.eval_bool(&scope).map_err(|e| self.err(e))
    }

    fn eval(&self, e: &Expr, params: &[(String, Value)], ctx: &Ctx<'_>) -> Result<Value, RunError> {
        let scope = MachineScope { m: self, store: ctx.store, peers: ctx.peers, params };
        e.eval(&scope).map_err(|e| self.err(e))
    }

    /// Least region enclosing both states; `None` is the root.
    fn lcr(&self, a: StateId, b: StateId) -> Option<RegionId> {
        let cb = self.spec.region_chain(b);
        self.spec.region_chain(a).into_iter().find(|r| cb.contains(r))
    }

    fn encloses(&self, outer: Option<RegionId>, inner: Option<RegionId>) -> bool {
        match (outer, inner) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(o), Some(i)) => {
                let mut cur = Some(i);
                while let Some(r) = cur {
                    if r == o {
                        return true;
                    }
                    cur = self.spec.regions[r].parent.map(|p| self.spec.states[p].parent);
                }
                false
            }
        }
    }

    fn fire(&mut self, t: TransitionId, params: &[(String, Value)], ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        let node = self.spec.transitions[t].clone();
        let src = &self.spec.states[node.source].path;
        let Some(mut target) = node.target else {
            ctx.out.log.push(format!("internal {src}"));
            return self.run_actions(&node.actions, params, ctx);
        };
        ctx.out.log.push(format!("fire {src} -> {}", self.spec.states[target].path));
        let mut scope = self.lcr(node.source, target);
        self.exit_scope(scope, ctx)?;
        self.run_actions(&node.actions, params, ctx)?;
        while self.spec.states[target].kind == StateKind::Choice {
            let branch = self.choose(target, ctx)?;
            let b = self.spec.transitions[branch].clone();
            let next = b.target.expect("choice branches have targets");
            ctx.out.log.push(format!("branch {} -> {}", self.spec.states[target].path, self.spec.states[next].path));
            let bl = self.lcr(target, next);
            if self.encloses(bl, scope) && bl != scope {
                scope = bl;
                self.exit_scope(scope, ctx)?;
            }
            self.run_actions(&b.actions, &[], ctx)?;
            target = next;
        }
        self.enter_scope(scope, target, ctx)
    }

    fn choose(&self, choice: StateId, ctx: &Ctx<'_>) -> Result<TransitionId, RunError> {
        let ts = &self.spec.states[choice].transitions;
        for &t in ts {
            let node = &self.spec.transitions[t];
            match &node.guard {
                Some(g) if node.trigger == Trigger::Branch => {
                    if self.guard(g, &[], ctx)? {
                        return Ok(t);
                    }
                }
                _ => {}
            }
        }
        ts.iter().copied().find(|&t| self.spec.transitions[t].trigger == Trigger::Else).ok_or_else(|| RunError::NoBranch {
            machine: self.owner.to_string(),
            choice: self.spec.states[choice].path.clone(),
        })
    }

    fn exit_scope(&mut self, scope: Option<RegionId>, ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        match scope {
            Some(r) => self.exit_region(r, ctx),
            None => {
                for r in self.spec.roots.clone() {
                    self.exit_region(r, ctx)?;
                }
                Ok(())
            }
        }
    }

    fn exit_region(&mut self, r: RegionId, ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        match self.active_in(r) {
            Some(s) => self.exit_state(s, ctx),
            None => Ok(()),
        }
    }

    fn exit_state(&mut self, s: StateId, ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        for r in self.spec.states[s].regions.clone() {
            self.exit_region(r, ctx)?;
        }
        let exit = self.spec.states[s].exit.clone();
        self.run_actions(&exit, &[], ctx)?;
        self.active[s] = false;
        self.timers.retain(|t| t.state != s);
        ctx.out.log.push(format!("exit {}", self.spec.states[s].path));
        Ok(())
    }

    /// Enters `target` and every ancestor below `scope`, default-entering
    /// regions off the path.
    fn enter_scope(&mut self, scope: Option<RegionId>, target: StateId, ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = self.spec.parent_state(cur) {
            if Some(self.spec.states[cur].parent) == scope {
                break;
            }
            path.push(p);
            cur = p;
        }
        path.reverse();
        match scope {
            Some(_) => self.enter_state(path[0], &path[1..], ctx),
            None => {
                for r in self.spec.roots.clone() {
                    self.enter_region(r, &path, ctx)?;
                }
                Ok(())
            }
        }
    }

    fn enter_region(&mut self, r: RegionId, path: &[StateId], ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        match path.first() {
            Some(&s) if self.spec.states[s].parent == r => self.enter_state(s, &path[1..], ctx),
            _ => self.enter_state(self.spec.regions[r].initial, &[], ctx),
        }
    }

    fn enter_state(&mut self, s: StateId, rest: &[StateId], ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        self.active[s] = true;
        self.entry_counts[s] += 1;
        ctx.out.log.push(format!("enter {}", self.spec.states[s].path));
        for &t in &self.spec.states[s].transitions {
            let (delay, period) = match self.spec.transitions[t].trigger {
                Trigger::After(d) => (d, None),
                Trigger::Every(d) => (d, Some(d)),
                _ => continue,
            };
            self.timers.push(ArmedTimer {
                transition: t,
                state: s,
                due: ctx.now + delay,
                period,
                seq: self.timer_seq,
                generation: self.entry_counts[s],
            });
            self.timer_seq += 1;
        }
        let entry = self.spec.states[s].entry.clone();
        self.run_actions(&entry, &[], ctx)?;
        for r in self.spec.states[s].regions.clone() {
            self.enter_region(r, rest, ctx)?;
        }
        Ok(())
    }

    fn run_actions(&mut self, actions: &[Action], params: &[(String, Value)], ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        for a in actions {
            match a {
                Action::Assign { target, value } => {
                    let v = self.eval(value, params, ctx)?;
                    match target {
                        LValue::Name(n) => match self.var_index(n) {
                            Some(i) => {
                                let kind = self.spec.variables[i].kind;
                                if !v.conforms_to(kind) {
                                    return Err(RunError::VariableKind {
                                        machine: self.owner.to_string(),
                                        name: n.clone(),
                                        expected: kind,
                                        found: v.kind(),
                                    });
                                }
                                self.vars[i] = v;
                            }
                            None => {
                                let owner = self.owner.clone();
                                self.write(&owner, n, v, ctx)?;
                            }
                        },
                        LValue::Field(base, prop) => match self.eval(base, params, ctx)? {
                            Value::Ref(Some(o)) => self.write(&o, prop, v, ctx)?,
                            Value::Ref(None) => return Err(self.err(EvalError::NullReference(prop.clone()))),
                            other => {
                                return Err(self.err(EvalError::Type(format!("cannot assign `.{prop}` of a {} value", other.kind()))))
                            }
                        },
                    }
                }
                Action::Raise { event, args } => {
                    let args = args.iter().map(|e| self.eval(e, params, ctx)).collect::<Result<Vec<_>, _>>()?;
                    ctx.out.log.push(format!("raise {event}"));
                    ctx.queue.push_back(Pending { name: event.clone(), args, timer: None });
                }
                Action::Emit { target, event, args } => {
                    let dst = match self.eval(target, params, ctx)? {
                        Value::Ref(Some(o)) => o,
                        Value::Ref(None) => return Err(self.err(EvalError::NullReference(event.clone()))),
                        other => return Err(self.err(EvalError::Type(format!("emit target is a {} value", other.kind())))),
                    };
                    let args = args.iter().map(|e| self.eval(e, params, ctx)).collect::<Result<Vec<_>, _>>()?;
                    let ev = EventInstance {
                        source: Source::Object(self.owner.clone()),
                        target: dst,
                        name: event.clone(),
                        args,
                        origin: Origin::Statechart(self.owner.clone()),
                        timer: None,
                    };
                    ctx.out.log.push(format!("emit {ev}"));
                    ctx.out.emitted.push(ev);
                }
            }
        }
        Ok(())
    }

    fn write(&self, object: &ObjectId, prop: &str, v: Value, ctx: &mut Ctx<'_>) -> Result<(), RunError> {
        ctx.store
            .set(object, prop, v)
            .map(|_| ())
            .map_err(|error| RunError::Store { machine: self.owner.to_string(), error })
    }

    /// Earliest pending timer due time.
    pub fn next_due(&self) -> Option<u64> {
        self.timers.iter().map(|t| t.due).min()
    }

    /// Pops every timer firing due at or before `now`, ordered by due time
    /// then arming order. Periodic timers re-arm from their scheduled time.
    pub fn due_timers(&mut self, now: u64) -> Vec<EventInstance> {
        let mut out = Vec::new();
        loop {
            let Some(i) = (0..self.timers.len())
                .filter(|&i| self.timers[i].due <= now)
                .min_by_key(|&i| (self.timers[i].due, self.timers[i].seq))
            else {
                return out;
            };
            let t = self.timers[i].clone();
            let name = match self.spec.transitions[t.transition].trigger {
                Trigger::Every(d) => format!("every({d})"),
                Trigger::After(d) => format!("after({d})"),
                _ => unreachable!("only timed transitions are armed"),
            };
            match t.period {
                Some(p) => self.timers[i].due += p,
                None => {
                    self.timers.remove(i);
                }
            }
            out.push(EventInstance {
                source: Source::Object(self.owner.clone()),
                target: self.owner.clone(),
                name,
                args: vec![],
                origin: Origin::Timer(self.owner.clone()),
                timer: Some(TimerTag { transition: t.transition, generation: t.generation }),
            });
        }
    }

    pub fn state(&self) -> MachineState {
        MachineState {
            owner: self.owner.clone(),
            statechart: self.spec.name.clone(),
            initialized: self.initialized,
            configuration: self.configuration(),
            active: (0..self.active.len()).filter(|&s| self.active[s]).map(|s| self.spec.states[s].path.clone()).collect(),
            variables: self.spec.variables.iter().map(|v| v.name.clone()).zip(self.vars.iter().cloned()).collect(),
            timers: self.timers.clone(),
            entry_counts: self.entry_counts.clone(),
            timer_seq: self.timer_seq,
        }
    }

    pub fn restore(&mut self, st: &MachineState) -> Result<(), RunError> {
        let unknown = |path: &str| RunError::UnknownState { machine: self.owner.to_string(), path: path.to_string() };
        let mut active = vec![false; self.spec.state_count()];
        for p in &st.active {
            active[self.spec.state_by_path(p).ok_or_else(|| unknown(p))?] = true;
        }
        if st.entry_counts.len() != active.len() {
            return Err(unknown("<entry counts>"));
        }
        let mut vars = self.vars.clone();
        for (name, v) in &st.variables {
            let i = self.var_index(name).ok_or_else(|| unknown(name))?;
            vars[i] = v.clone();
        }
        self.active = active;
        self.vars = vars;
        self.initialized = st.initialized;
        self.timers = st.timers.clone();
        self.entry_counts = st.entry_counts.clone();
        self.timer_seq = st.timer_seq;
        Ok(())
    }
}
