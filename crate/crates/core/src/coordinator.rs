//! The joint runtime: one logical clock, a FIFO for statechart and timer
//! events, the machine registry, play-out, and the trace.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventInstance, Origin, Source};
use crate::expr::{EvalError, Scope};
use crate::lsc::{ChartSpec, LscContext, Violation, ViolationKind};
use crate::model::Model;
use crate::object::{GlobalScope, ObjectStore, SETTER_PREFIX};
use crate::playout::{Obligation, Playout, PlayoutState};
use crate::script::{check_injection, Script, Step};
use crate::statechart::{MachineInstance, MachineState, PeerStates, RunError, StatechartSpec};
use crate::value::{ObjectId, Value};

pub const DEFAULT_STEP_BOUND: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid injection: {0}")]
    Injection(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("`{0}` already has a machine")]
    DuplicateMachine(String),
    #[error("{0}")]
    Registration(String),
    #[error("the run is halted after a violation in strict mode")]
    Halted,
    #[error("snapshot does not fit this model: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub step_bound: usize,
    /// Halt on the first hot or forbidden violation.
    pub strict: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { step_bound: DEFAULT_STEP_BOUND, strict: false }
    }
}

/// One delivered event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub clock: u64,
    pub event: EventInstance,
    pub violations: Vec<Violation>,
    /// Set on the last entry of a super-step that ended quiescent.
    pub quiescent: bool,
    /// Statechart queue length when this event was selected.
    #[serde(skip)]
    pub queue_depth: usize,
    /// Whether a machine, a chart copy or a setter reacted.
    #[serde(skip)]
    pub consumed: bool,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    seq: u64,
    clock: u64,
    origin: String,
    src: String,
    dst: &'a str,
    event: &'a str,
    args: Vec<serde_json::Value>,
    violations: Vec<ViolationLine<'a>>,
    quiescent: bool,
}

#[derive(Serialize)]
struct ViolationLine<'a> {
    chart: &'a str,
    copy: u64,
    kind: ViolationKind,
}

impl TraceEntry {
    /// The canonical one-line JSON rendering.
    pub fn to_json_line(&self) -> String {
        let line = TraceLine {
            seq: self.seq,
            clock: self.clock,
            origin: self.event.origin.to_string(),
            src: self.event.source.to_string(),
            dst: self.event.target.as_str(),
            event: &self.event.name,
            args: self.event.args.iter().map(Value::to_plain_json).collect(),
            violations: self.violations.iter().map(|v| ViolationLine { chart: &v.chart, copy: v.copy, kind: v.kind }).collect(),
            quiescent: self.quiescent,
        };
        serde_json::to_string(&line).expect("trace lines are plain data")
    }
}

/// Complete serializable state of a running system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSnapshot {
    pub clock: u64,
    pub seq: u64,
    pub objects: Vec<(ObjectId, BTreeMap<String, Value>)>,
    pub machines: Vec<MachineState>,
    pub playout: PlayoutState,
    pub obligations: Vec<Obligation>,
    pub queue: Vec<EventInstance>,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub step: usize,
    pub text: String,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptReport {
    pub entries: Vec<TraceEntry>,
    pub assertions: Vec<AssertionOutcome>,
    /// Steps that could not run (invalid injection, halted run, ...).
    pub errors: Vec<String>,
}

impl ScriptReport {
    pub fn failed_assertions(&self) -> usize {
        self.assertions.iter().filter(|a| !a.passed).count()
    }
}

/// Machines other than the one being dispatched.
struct Peers<'a> {
    left: &'a [MachineInstance],
    right: &'a [MachineInstance],
}

fn query(machines: &[MachineInstance], object: &ObjectId, path: &str) -> Option<Result<bool, EvalError>> {
    let m = machines.iter().find(|m| m.owner() == object)?;
    Some(m.is_active(path).map_err(|_| EvalError::UnknownState(path.to_string())))
}

impl PeerStates for Peers<'_> {
    fn is_active(&self, object: &ObjectId, path: &str) -> Result<bool, EvalError> {
        query(self.left, object, path)
            .or_else(|| query(self.right, object, path))
            .unwrap_or_else(|| Err(EvalError::UnknownObject(format!("{object} (no statechart)"))))
    }
}

struct AllMachines<'a>(&'a [MachineInstance]);

impl PeerStates for AllMachines<'_> {
    fn is_active(&self, object: &ObjectId, path: &str) -> Result<bool, EvalError> {
        query(self.0, object, path).unwrap_or_else(|| Err(EvalError::UnknownObject(format!("{object} (no statechart)"))))
    }
}

struct AssertScope<'a> {
    store: &'a ObjectStore,
    machines: &'a [MachineInstance],
}

impl Scope for AssertScope<'_> {
    fn ident(&self, name: &str) -> Result<Value, EvalError> {
        GlobalScope { store: self.store }.ident(name)
    }

    fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError> {
        Ok(self.store.get(object, prop)?)
    }

    fn active(&self, object: Option<&ObjectId>, path: &str) -> Result<bool, EvalError> {
        match object {
            Some(o) => AllMachines(self.machines).is_active(o, path),
            None => Err(EvalError::NoStateQuery),
        }
    }
}

/// The single owner of all engine state.
#[derive(Debug, Clone)]
pub struct System {
    model: Arc<Model>,
    options: Options,
    store: ObjectStore,
    machines: Vec<MachineInstance>,
    playout: Playout,
    queue: VecDeque<EventInstance>,
    clock: u64,
    seq: u64,
    trace: Vec<TraceEntry>,
    errors: Vec<String>,
    halted: bool,
}

impl System {
    /// A system with no machines or charts registered yet.
    pub fn empty(model: Arc<Model>, options: Options) -> Self {
        System {
            store: model.store.clone(),
            model,
            options,
            machines: vec![],
            playout: Playout::new(),
            queue: VecDeque::new(),
            clock: 0,
            seq: 0,
            trace: vec![],
            errors: vec![],
            halted: false,
        }
    }

    /// Registers a machine for every object whose class has a statechart,
    /// in object creation order, and every chart, then initializes.
    pub fn new(model: Arc<Model>, options: Options) -> Result<Self, EngineError> {
        let mut sys = System::empty(model.clone(), options);
        for obj in model.store.objects() {
            let class = &model.store.class(obj.class).name;
            if let Some(spec) = model.statechart_for(class) {
                sys.register_machine(spec.clone(), obj.id.clone())?;
            }
        }
        for c in &model.charts {
            sys.register_chart(c.clone())?;
        }
        sys.initialize()?;
        Ok(sys)
    }

    pub fn register_machine(&mut self, spec: Arc<StatechartSpec>, owner: ObjectId) -> Result<(), EngineError> {
        if self.machines.iter().any(|m| *m.owner() == owner) {
            return Err(EngineError::DuplicateMachine(owner.to_string()));
        }
        if !self.store.contains(&owner) {
            return Err(EngineError::Registration(format!("unknown object `{owner}`")));
        }
        self.machines.push(MachineInstance::new(spec, owner, &self.store)?);
        Ok(())
    }

    pub fn register_chart(&mut self, spec: Arc<ChartSpec>) -> Result<(), EngineError> {
        self.playout.register(spec).map_err(EngineError::Registration)
    }

    /// Enters every machine's initial configuration; events emitted by
    /// entry actions run as a super-step.
    pub fn initialize(&mut self) -> Result<Vec<TraceEntry>, EngineError> {
        for i in 0..self.machines.len() {
            if self.machines[i].is_initialized() {
                continue;
            }
            let (left, rest) = self.machines.split_at_mut(i);
            let (m, right) = rest.split_first_mut().expect("index in range");
            let res = m.initialize(&mut self.store, &Peers { left, right }, self.clock)?;
            self.queue.extend(res.emitted);
        }
        let start = self.trace.len();
        self.run_super_step(start);
        Ok(self.trace[start..].to_vec())
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    pub fn machines(&self) -> &[MachineInstance] {
        &self.machines
    }

    pub fn machine(&self, owner: &str) -> Option<&MachineInstance> {
        self.machines.iter().find(|m| m.owner().as_str() == owner)
    }

    pub fn playout(&self) -> &Playout {
        &self.playout
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Run errors reported so far (machine failures, exceeded step bounds).
    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Unblocked executable chart events, in selection order.
    pub fn candidates(&self) -> Vec<EventInstance> {
        self.playout.candidates(&LscContext { store: &self.store, states: &AllMachines(&self.machines) })
    }

    /// Enabled executable chart events including blocked ones.
    pub fn enabled_executable(&self) -> Vec<EventInstance> {
        self.playout.enabled_executable(&LscContext { store: &self.store, states: &AllMachines(&self.machines) })
    }

    pub fn obligations(&self) -> Vec<Obligation> {
        self.playout.obligations(&LscContext { store: &self.store, states: &AllMachines(&self.machines) })
    }

    /// Whether delivering `ev` now would violate a running chart copy.
    pub fn is_blocked(&self, ev: &EventInstance) -> bool {
        self.playout.is_blocked(ev, &LscContext { store: &self.store, states: &AllMachines(&self.machines) })
    }

    /// Injects an environment event and runs the resulting super-step.
    pub fn inject(&mut self, source: Option<&str>, target: &str, event: &str, args: Vec<Value>) -> Result<Vec<TraceEntry>, EngineError> {
        if self.halted {
            return Err(EngineError::Halted);
        }
        check_injection(&self.model, source, target, event, &args).map_err(EngineError::Injection)?;
        let ev = EventInstance {
            source: source.map_or(Source::Env, |s| Source::Object(ObjectId::new(s))),
            target: ObjectId::new(target),
            name: event.to_string(),
            args,
            origin: Origin::Environment,
            timer: None,
        };
        let start = self.trace.len();
        self.deliver(ev, self.queue.len());
        self.run_super_step(start);
        Ok(self.trace[start..].to_vec())
    }

    /// Earliest armed timer across all machines.
    pub fn next_due(&self) -> Option<u64> {
        self.machines.iter().filter_map(|m| m.next_due()).min()
    }

    /// Advances the logical clock by `delta` ms, stopping at every timer
    /// due time on the way to run its super-step.
    pub fn tick(&mut self, delta: u64) -> Result<Vec<TraceEntry>, EngineError> {
        if self.halted {
            return Err(EngineError::Halted);
        }
        let end = self.clock.saturating_add(delta);
        let start = self.trace.len();
        while let Some(due) = self.next_due().filter(|&d| d <= end) {
            self.clock = self.clock.max(due);
            for i in 0..self.machines.len() {
                let fired = self.machines[i].due_timers(self.clock);
                self.queue.extend(fired);
            }
            let step_start = self.trace.len();
            self.run_super_step(step_start);
            if self.halted {
                return Ok(self.trace[start..].to_vec());
            }
        }
        self.clock = end;
        Ok(self.trace[start..].to_vec())
    }

    /// Statechart queue first, then the first unblocked chart candidate.
    fn select_next(&self) -> Option<(EventInstance, usize)> {
        if let Some(e) = self.queue.front() {
            return Some((e.clone(), self.queue.len()));
        }
        self.candidates().into_iter().next().map(|e| (e, 0))
    }

    /// Delivers until quiescence; `start` is the trace length when the
    /// super-step began.
    fn run_super_step(&mut self, start: usize) {
        let mut steps = 0;
        loop {
            if self.halted {
                return;
            }
            let Some((ev, depth)) = self.select_next() else { break };
            if depth > 0 {
                self.queue.pop_front();
            }
            steps += 1;
            if steps > self.options.step_bound {
                let msg = format!("step bound of {} events exceeded at clock {}", self.options.step_bound, self.clock);
                log::warn!("{msg}");
                self.errors.push(msg);
                self.queue.clear();
                return;
            }
            self.deliver(ev, depth);
        }
        if self.trace.len() > start {
            if let Some(last) = self.trace.last_mut() {
                last.quiescent = true;
            }
        }
    }

    fn deliver(&mut self, ev: EventInstance, queue_depth: usize) {
        let mut consumed = false;
        if let Some(prop) = ev.name.strip_prefix(SETTER_PREFIX) {
            if ev.args.len() == 1 {
                match self.store.set(&ev.target, prop, ev.args[0].clone()) {
                    Ok(_) => consumed = true,
                    Err(e) => log::debug!("setter {ev} not applied: {e}"),
                }
            }
        }
        if let Some(i) = self.machines.iter().position(|m| *m.owner() == ev.target) {
            let (left, rest) = self.machines.split_at_mut(i);
            let (m, right) = rest.split_first_mut().expect("index in range");
            match m.dispatch(&ev, &mut self.store, &Peers { left, right }, self.clock) {
                Ok(res) => {
                    consumed |= res.consumed;
                    self.queue.extend(res.emitted);
                }
                Err(e) => {
                    log::error!("{e}");
                    self.errors.push(e.to_string());
                    if self.options.strict {
                        self.halted = true;
                    }
                }
            }
        }
        let update = {
            let ctx = LscContext { store: &self.store, states: &AllMachines(&self.machines) };
            self.playout.observe(&ev, &ctx)
        };
        consumed |= !update.is_empty();
        if self.options.strict && !update.violations.is_empty() {
            self.halted = true;
        }
        self.seq += 1;
        self.trace.push(TraceEntry {
            seq: self.seq,
            clock: self.clock,
            event: ev,
            violations: update.violations,
            quiescent: false,
            queue_depth,
            consumed,
        });
    }

    pub fn eval_assertion(&self, expr: &crate::expr::Expr) -> Result<bool, EvalError> {
        expr.eval_bool(&AssertScope { store: &self.store, machines: &self.machines })
    }

    /// Runs every step in order. Failed assertions are recorded and the run
    /// continues.
    pub fn run_script(&mut self, script: &Script) -> ScriptReport {
        let mut report = ScriptReport::default();
        for (i, step) in script.steps.iter().enumerate() {
            match self.run_step(step) {
                Ok(StepOutcome::Entries(e)) => report.entries.extend(e),
                Ok(StepOutcome::Assertion(ok, err)) => report.assertions.push(AssertionOutcome {
                    step: i,
                    text: step.to_string(),
                    passed: ok,
                    error: err,
                }),
                Err(e) => report.errors.push(format!("step {} (`{step}`): {e}", i + 1)),
            }
        }
        report
    }

    pub fn run_step(&mut self, step: &Step) -> Result<StepOutcome, EngineError> {
        match step {
            Step::Inject { source, target, event, args, .. } => {
                self.inject(source.as_deref(), target, event, args.clone()).map(StepOutcome::Entries)
            }
            Step::Tick { ms, .. } => self.tick(*ms).map(StepOutcome::Entries),
            Step::Assert { expr, .. } => Ok(match self.eval_assertion(expr) {
                Ok(b) => StepOutcome::Assertion(b, None),
                Err(e) => StepOutcome::Assertion(false, Some(e.to_string())),
            }),
        }
    }

    pub fn snapshot(&self) -> SystemSnapshot {
        SystemSnapshot {
            clock: self.clock,
            seq: self.seq,
            objects: self
                .store
                .objects()
                .iter()
                .map(|o| (o.id.clone(), self.store.values_of(&o.id).expect("object exists")))
                .collect(),
            machines: self.machines.iter().map(MachineInstance::state).collect(),
            playout: self.playout.state(),
            obligations: self.obligations(),
            queue: self.queue.iter().cloned().collect(),
            halted: self.halted,
        }
    }

    /// Replaces the mutable state with a snapshot taken from a system built
    /// from the same model. The trace restarts empty.
    pub fn restore(&mut self, snap: &SystemSnapshot) -> Result<(), EngineError> {
        let bad = |m: String| EngineError::Snapshot(m);
        if snap.machines.len() != self.machines.len() {
            return Err(bad("machine count differs".into()));
        }
        let mut store = self.store.clone();
        for (id, values) in &snap.objects {
            store.restore_values(id, values).map_err(|e| bad(e.to_string()))?;
        }
        let mut machines = self.machines.clone();
        for (m, st) in machines.iter_mut().zip(&snap.machines) {
            if *m.owner() != st.owner {
                return Err(bad(format!("expected machine `{}`, found `{}`", m.owner(), st.owner)));
            }
            m.restore(st)?;
        }
        let mut playout = self.playout.clone();
        playout.restore(&snap.playout).map_err(bad)?;
        self.store = store;
        self.machines = machines;
        self.playout = playout;
        self.queue = snap.queue.iter().cloned().collect();
        self.clock = snap.clock;
        self.seq = snap.seq;
        self.halted = snap.halted;
        self.trace.clear();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Entries(Vec<TraceEntry>),
    /// Whether the assertion held, and why it could not be evaluated.
    Assertion(bool, Option<String>),
}
