use std::fmt::Write;

use crate::lsc::{ArgTerm, ChartDef, ElementDef, LifelineBinding, LoopKind};
use crate::model::ModelBundle;
use crate::object::ClassDef;
use crate::statechart::{Action, RegionDef, StateDef, StateDefKind, StatechartDef, TransitionDef, Trigger};

struct Out {
    buf: String,
    depth: usize,
}

impl Out {
    fn line(&mut self, text: impl AsRef<str>) {
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str(text.as_ref());
        self.buf.push('\n');
    }

    fn open(&mut self, head: impl AsRef<str>) {
        self.line(format!("{} {{", head.as_ref()));
        self.depth += 1;
    }

    fn close(&mut self) {
        self.depth -= 1;
        self.line("}");
    }
}

fn list<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

/// Renders a bundle as canonical model text.
pub fn serialize_model(b: &ModelBundle) -> String {
    let mut o = Out { buf: String::new(), depth: 0 };
    let mut first = true;
    let mut gap = |o: &mut Out| {
        if !std::mem::take(&mut first) {
            o.buf.push('\n');
        }
    };
    for c in &b.classes {
        gap(&mut o);
        class(&mut o, c);
    }
    if !b.objects.is_empty() {
        gap(&mut o);
        for obj in &b.objects {
            if obj.values.is_empty() {
                o.line(format!("object {} : {};", obj.id, obj.class));
            } else {
                o.open(format!("object {} : {}", obj.id, obj.class));
                for (p, v) in &obj.values {
                    o.line(format!("{p} = {v};"));
                }
                o.close();
            }
        }
    }
    for sc in &b.statecharts {
        gap(&mut o);
        statechart(&mut o, sc);
    }
    for ch in &b.charts {
        gap(&mut o);
        chart(&mut o, ch);
    }
    for s in &b.scripts {
        gap(&mut o);
        o.open("script");
        for step in &s.steps {
            o.line(format!("{step};"));
        }
        o.close();
    }
    o.buf
}

fn class(o: &mut Out, c: &ClassDef) {
    o.open(format!("class {}", c.name));
    for p in &c.properties {
        match &p.default {
            Some(d) => o.line(format!("prop {}: {} = {d};", p.name, p.kind)),
            None => o.line(format!("prop {}: {};", p.name, p.kind)),
        }
    }
    for (kw, events) in [("signal", &c.signals), ("method", &c.methods)] {
        for e in events {
            match e.arity {
                0 => o.line(format!("{kw} {};", e.name)),
                n => o.line(format!("{kw} {}/{n};", e.name)),
            }
        }
    }
    o.close();
}

fn statechart(o: &mut Out, sc: &StatechartDef) {
    o.open(format!("statechart {} for {}", sc.name, sc.owner_class));
    for v in &sc.variables {
        match &v.default {
            Some(d) => o.line(format!("var {}: {} = {d};", v.name, v.kind)),
            None => o.line(format!("var {}: {};", v.name, v.kind)),
        }
    }
    regions(o, &sc.regions);
    o.close();
}

fn regions(o: &mut Out, rs: &[RegionDef]) {
    for r in rs {
        match &r.name {
            Some(n) => {
                o.open(format!("region {n}"));
                region_body(o, r);
                o.close();
            }
            None => region_body(o, r),
        }
    }
}

fn region_body(o: &mut Out, r: &RegionDef) {
    if let Some(i) = &r.initial {
        o.line(format!("initial {i};"));
    }
    for s in &r.states {
        state(o, s);
    }
}

fn actions(acts: &[Action]) -> String {
    list(acts)
}

fn state(o: &mut Out, s: &StateDef) {
    match s.kind {
        StateDefKind::Final => o.line(format!("final {};", s.name)),
        StateDefKind::Choice => {
            o.open(format!("choice {}", s.name));
            for t in &s.transitions {
                o.line(transition(t));
            }
            o.close();
        }
        StateDefKind::State => {
            if s.entry.is_empty() && s.exit.is_empty() && s.transitions.is_empty() && s.regions.is_empty() {
                o.line(format!("state {};", s.name));
                return;
            }
            o.open(format!("state {}", s.name));
            if !s.entry.is_empty() {
                o.line(format!("entry / {};", actions(&s.entry)));
            }
            if !s.exit.is_empty() {
                o.line(format!("exit / {};", actions(&s.exit)));
            }
            for t in &s.transitions {
                o.line(transition(t));
            }
            regions(o, &s.regions);
            o.close();
        }
    }
}

fn transition(t: &TransitionDef) -> String {
    let mut s = match &t.trigger {
        Trigger::Event { name, params } if params.is_empty() => format!("on {name}"),
        Trigger::Event { name, params } => format!("on {name}({})", params.join(", ")),
        Trigger::After(ms) => format!("after {ms}ms"),
        Trigger::Every(ms) => format!("every {ms}ms"),
        Trigger::Branch => String::new(),
        Trigger::Else => "else".into(),
    };
    match (&t.trigger, &t.guard) {
        (Trigger::Else, _) => {}
        (Trigger::Branch, g) => {
            let g = g.as_ref().map(|g| g.to_string()).unwrap_or_else(|| "true".into());
            write!(s, "[{g}]").unwrap();
        }
        (_, Some(g)) => write!(s, " [{g}]").unwrap(),
        (_, None) => {}
    }
    if let Some(target) = &t.target {
        write!(s, " -> {}", target.join(".")).unwrap();
    }
    if !t.actions.is_empty() {
        write!(s, " / {}", actions(&t.actions)).unwrap();
    }
    s.push(';');
    s
}

fn chart(o: &mut Out, c: &ChartDef) {
    o.open(format!("chart {}", c.name));
    for l in &c.lifelines {
        let binding = match &l.binding {
            LifelineBinding::Concrete(obj) => format!(" = {obj}"),
            LifelineBinding::Symbolic(None) => String::new(),
            LifelineBinding::Symbolic(Some(e)) => format!(" where [{e}]"),
            LifelineBinding::All(None) => " all".into(),
            LifelineBinding::All(Some(e)) => format!(" all where [{e}]"),
        };
        o.line(format!("lifeline {} : {}{binding};", l.name, l.class));
    }
    elements(o, &c.body);
    o.close();
}

fn terms(args: &[ArgTerm]) -> String {
    format!("({})", list(args))
}

fn elements(o: &mut Out, body: &[ElementDef]) {
    for e in body {
        match e {
            ElementDef::Message(m) => o.line(format!(
                "{} -> {} : {}{} {} {};",
                m.from,
                m.to,
                m.name,
                terms(&m.args),
                m.mode.keyword(),
                m.temp.keyword()
            )),
            ElementDef::Sync { lifelines, .. } => o.line(format!("sync({});", lifelines.join(", "))),
            ElementDef::Cond { lifelines, expr, temp, .. } if lifelines.is_empty() => {
                o.line(format!("cond [{expr}] {};", temp.keyword()))
            }
            ElementDef::Cond { lifelines, expr, temp, .. } => {
                o.line(format!("cond({}) [{expr}] {};", lifelines.join(", "), temp.keyword()))
            }
            ElementDef::Loop { kind, body, .. } => {
                match kind {
                    LoopKind::Count(n) => o.open(format!("loop {n}")),
                    LoopKind::While(e) => o.open(format!("loop while [{e}]")),
                    LoopKind::Each(l) => o.open(format!("loop each {l}")),
                }
                elements(o, body);
                o.close();
            }
            ElementDef::Forbid(f) => {
                let args = f.args.as_deref().map(terms).unwrap_or_default();
                o.line(format!("forbid {} -> {} : {}{args} from {} to {};", f.from, f.to, f.name, f.start, f.end))
            }
            ElementDef::Label { name, .. } => o.line(format!("label {name};")),
        }
    }
}
