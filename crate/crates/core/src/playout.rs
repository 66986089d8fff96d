//! Play-out over all registered charts: activation, advancement, the
//! candidate set and the blocked set.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::event::EventInstance;
use crate::lsc::{ActiveChart, Advance, ChartSpec, ChartStatus, LscContext, Mode, Temp, Violation, ViolationKind};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayoutUpdate {
    pub activated: Vec<u64>,
    pub advanced: Vec<u64>,
    pub completed: Vec<u64>,
    /// Copies ended by a violation of any temperature.
    pub aborted: Vec<u64>,
    /// Hot and forbidden violations; cold ones only abort.
    pub violations: Vec<Violation>,
}

impl PlayoutUpdate {
    pub fn is_empty(&self) -> bool {
        self.activated.is_empty() && self.advanced.is_empty() && self.completed.is_empty() && self.aborted.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub chart: String,
    pub copy: u64,
    pub element: usize,
    pub message: String,
}

/// Serializable image of the play-out state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayoutState {
    pub copies: Vec<ActiveChart>,
    pub violations: Vec<Violation>,
    pub next_copy: u64,
}

#[derive(Debug, Clone)]
pub struct Playout {
    specs: Vec<Arc<ChartSpec>>,
    copies: Vec<ActiveChart>,
    violations: Vec<Violation>,
    next_copy: u64,
}

impl Default for Playout {
    fn default() -> Self {
        Playout { specs: vec![], copies: vec![], violations: vec![], next_copy: 1 }
    }
}

impl Playout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a chart; fails on a duplicate name.
    pub fn register(&mut self, spec: Arc<ChartSpec>) -> Result<(), String> {
        if self.specs.iter().any(|s| s.name == spec.name) {
            return Err(format!("chart `{}` is already registered", spec.name));
        }
        self.specs.push(spec);
        Ok(())
    }

    pub fn specs(&self) -> &[Arc<ChartSpec>] {
        &self.specs
    }

    fn spec(&self, name: &str) -> &ChartSpec {
        self.specs.iter().find(|s| s.name == name).expect("copies belong to registered charts")
    }

    /// Running copies in activation order.
    pub fn copies(&self) -> &[ActiveChart] {
        &self.copies
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    fn record(&mut self, copy: &ActiveChart, result: Advance, ev: &EventInstance, up: &mut PlayoutUpdate) {
        match result {
            Advance::Irrelevant => {}
            Advance::Progressed => up.advanced.push(copy.copy),
            Advance::Completed => {
                up.advanced.push(copy.copy);
                up.completed.push(copy.copy);
            }
            Advance::Violated { kind: ViolationKind::Cold, element } => {
                log::debug!("chart {}#{} left on cold violation at element {element:?} by {ev}", copy.chart, copy.copy);
                up.aborted.push(copy.copy);
            }
            Advance::Violated { kind, element } => {
                let v = Violation {
                    chart: copy.chart.clone(),
                    copy: copy.copy,
                    kind,
                    element,
                    event: Some(ev.clone()),
                    cut: copy.progress.clone(),
                };
                log::info!("{kind} violation of {}#{} by {ev}", copy.chart, copy.copy);
                self.violations.push(v.clone());
                up.violations.push(v);
                up.aborted.push(copy.copy);
            }
        }
    }

    /// Feeds one observed event to every chart: activation first, then the
    /// copies that were running before the event.
    pub fn observe(&mut self, ev: &EventInstance, ctx: &LscContext<'_>) -> PlayoutUpdate {
        let mut up = PlayoutUpdate::default();
        let mut fresh = Vec::new();
        for spec in self.specs.clone() {
            for (copy, result) in ActiveChart::try_activate(&spec, ev, ctx, &self.copies, &mut self.next_copy) {
                up.activated.push(copy.copy);
                fresh.push((copy, result));
            }
        }
        let mut copies = std::mem::take(&mut self.copies);
        for copy in copies.iter_mut() {
            let result = copy.advance(self.spec(&copy.chart), ev, ctx);
            self.record(copy, result, ev, &mut up);
        }
        for (copy, result) in &fresh {
            if *result != Advance::Progressed {
                self.record(copy, *result, ev, &mut up);
            }
        }
        copies.extend(fresh.into_iter().map(|(c, _)| c));
        copies.retain(|c| c.status == ChartStatus::Running);
        self.copies = copies;
        up
    }

    /// Whether some running copy would be violated (hot or forbidden) by `ev`.
    pub fn is_blocked(&self, ev: &EventInstance, ctx: &LscContext<'_>) -> bool {
        self.copies.iter().any(|c| c.is_blocked(self.spec(&c.chart), ev, ctx))
    }

    /// Executable events, in copy activation order then document order,
    /// without blocked events or repeats.
    pub fn candidates(&self, ctx: &LscContext<'_>) -> Vec<EventInstance> {
        let mut out: Vec<EventInstance> = Vec::new();
        for c in &self.copies {
            for m in c.enabled_messages(self.spec(&c.chart), ctx) {
                let Some(ev) = m.event.filter(|_| m.mode == Mode::Exec) else { continue };
                if out.iter().any(|o| o.same_message(&ev)) || self.is_blocked(&ev, ctx) {
                    continue;
                }
                out.push(ev);
            }
        }
        out
    }

    /// Every fully bound executed message that is enabled, blocked or not.
    pub fn enabled_executable(&self, ctx: &LscContext<'_>) -> Vec<EventInstance> {
        let mut out: Vec<EventInstance> = Vec::new();
        for c in &self.copies {
            for m in c.enabled_messages(self.spec(&c.chart), ctx) {
                if let Some(ev) = m.event.filter(|_| m.mode == Mode::Exec) {
                    if !out.iter().any(|o| o.same_message(&ev)) {
                        out.push(ev);
                    }
                }
            }
        }
        out
    }

    /// Hot monitored messages the running copies are waiting for.
    pub fn obligations(&self, ctx: &LscContext<'_>) -> Vec<Obligation> {
        let mut out = Vec::new();
        for c in &self.copies {
            for m in c.enabled_messages(self.spec(&c.chart), ctx) {
                if m.mode == Mode::Mon && m.temp == Temp::Hot {
                    out.push(Obligation {
                        chart: c.chart.clone(),
                        copy: c.copy,
                        element: m.element,
                        message: m.event.map(|e| e.to_string()).unwrap_or(m.name),
                    });
                }
            }
        }
        out
    }

    pub fn state(&self) -> PlayoutState {
        PlayoutState { copies: self.copies.clone(), violations: self.violations.clone(), next_copy: self.next_copy }
    }

    pub fn restore(&mut self, st: &PlayoutState) -> Result<(), String> {
        for c in &st.copies {
            if !self.specs.iter().any(|s| s.name == c.chart) {
                return Err(format!("snapshot references unknown chart `{}`", c.chart));
            }
        }
        self.copies = st.copies.clone();
        self.violations = st.violations.clone();
        self.next_copy = st.next_copy;
        Ok(())
    }

    /// Drops all copies and the violation log.
    pub fn reset(&mut self) {
        self.copies.clear();
        self.violations.clear();
        self.next_copy = 1;
    }
}
