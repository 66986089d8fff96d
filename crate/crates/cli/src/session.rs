use std::sync::Arc;
use std::time::Instant;

use playweave::{EngineError, Model, Options, System, TraceEntry, Value};

/// One interactive run: the system plus what is needed to reset it and,
/// in wall-clock mode, to keep its clock in step with real time.
pub struct Session {
    model: Arc<Model>,
    options: Options,
    pub sys: System,
    wall: Option<Instant>,
}

impl Session {
    pub fn new(model: Model, options: Options, wall: bool) -> Result<Session, EngineError> {
        let model = Arc::new(model);
        let sys = System::new(model.clone(), options)?;
        Ok(Session { model, options, sys, wall: wall.then(Instant::now) })
    }

    pub fn is_wall(&self) -> bool {
        self.wall.is_some()
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn reset(&mut self) -> Result<Vec<TraceEntry>, EngineError> {
        self.sys = System::new(self.model.clone(), self.options)?;
        if self.wall.is_some() {
            self.wall = Some(Instant::now());
        }
        Ok(self.sys.trace().to_vec())
    }

    /// Ticks by the real time elapsed since the last catch-up. A no-op
    /// outside wall-clock mode.
    pub fn catch_up(&mut self) -> Result<Vec<TraceEntry>, EngineError> {
        let Some(since) = self.wall else { return Ok(vec![]) };
        let target = since.elapsed().as_millis() as u64;
        match target.checked_sub(self.sys.clock()) {
            Some(d) if d > 0 && !self.sys.is_halted() => self.sys.tick(d),
            _ => Ok(vec![]),
        }
    }

    pub fn inject(&mut self, src: &str, dst: &str, event: &str, args: Vec<Value>) -> Result<Vec<TraceEntry>, EngineError> {
        let mut entries = self.catch_up()?;
        let source = (src != "env").then_some(src);
        entries.extend(self.sys.inject(source, dst, event, args)?);
        Ok(entries)
    }
}

/// Human-readable rendering of one trace entry.
pub fn describe(e: &TraceEntry) -> String {
    let mut s = format!("#{} @{} {} {}", e.seq, e.clock, e.event.origin, e.event);
    for v in &e.violations {
        s.push_str(&format!(" !{}({}#{})", v.kind, v.chart, v.copy));
    }
    if e.quiescent {
        s.push_str(" [quiescent]");
    }
    s
}
