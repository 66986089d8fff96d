//! Shared helpers for integration tests: fixture loading, trace rendering
//! and a seeded generator of small random models with scripts.

#![allow(dead_code)]

use std::sync::Arc;

use playweave::{load_model, parse_script, Model, Options, Script, System, TextSource, TraceEntry};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn load(name: &str, text: &str) -> Model {
    load_model(&[TextSource { name, text }]).unwrap_or_else(|es| {
        let msgs: Vec<String> = es.iter().map(|e| e.render()).collect();
        panic!("{name} does not load:\n{}", msgs.join("\n"))
    })
}

pub fn load_fixture(name: &str) -> Model {
    load(name, &fixture(name))
}

pub fn script(model: &Model, text: &str) -> Script {
    parse_script(text, model).unwrap_or_else(|es| panic!("script does not parse: {es:?}"))
}

pub fn system(model: Model) -> System {
    System::new(Arc::new(model), Options::default()).expect("system starts")
}

/// `origin src->dst.event(args)`, one per entry.
pub fn brief(entries: &[TraceEntry]) -> Vec<String> {
    entries
        .iter()
        .map(|e| {
            let args: Vec<String> = e.event.args.iter().map(|a| a.to_string()).collect();
            format!("{} {}->{}.{}({})", e.event.origin, e.event.source, e.event.target, e.event.name, args.join(","))
        })
        .collect()
}

pub fn names(entries: &[TraceEntry]) -> Vec<String> {
    entries.iter().map(|e| e.event.name.clone()).collect()
}

pub fn json_lines(entries: &[TraceEntry]) -> String {
    entries.iter().map(|e| e.to_json_line() + "\n").collect()
}

/// A generated model with a script that exercises it.
#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub model: String,
    pub script: String,
}

struct Gen {
    rng: ChaCha8Rng,
    objects: usize,
    signals: usize,
    methods: usize,
    next_state: usize,
    out: String,
}

impl Gen {
    fn pick<'a>(&mut self, items: &'a [String]) -> &'a String {
        items.choose(&mut self.rng).expect("non-empty")
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn object(&mut self) -> String {
        format!("o{}", self.rng.gen_range(0..self.objects))
    }

    fn signal(&mut self) -> String {
        format!("s{}", self.rng.gen_range(0..self.signals))
    }

    fn method(&mut self) -> String {
        format!("m{}", self.rng.gen_range(0..self.methods))
    }

    fn line(&mut self, depth: usize, text: &str) {
        self.out.push_str(&"  ".repeat(depth));
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn signal_actions(&mut self) -> String {
        let mut acts = vec!["c := c + 1".to_string()];
        for _ in 0..self.rng.gen_range(0..3) {
            let a = match self.rng.gen_range(0..3) {
                0 => format!("emit {}.{}()", self.object(), self.method()),
                1 => format!("raise {}", self.method()),
                _ => "emit self.m0()".to_string(),
            };
            acts.push(a);
        }
        acts.join(", ")
    }

    fn guard(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => format!(" [c < {}]", self.rng.gen_range(1..5)),
            1 => " [v >= 0]".into(),
            _ => String::new(),
        }
    }

    /// Writes one region's states; `targets` lists every state name in the
    /// enclosing top-level region.
    fn region_states(&mut self, depth: usize, names: &[String], nested: &[(usize, Vec<String>)], targets: &[String]) {
        self.line(depth, &format!("initial {};", names[0]));
        for (i, name) in names.iter().enumerate() {
            let children = nested.iter().find(|(k, _)| *k == i).map(|(_, c)| c.clone());
            let mut body = Vec::new();
            for _ in 0..self.rng.gen_range(0..3) {
                let trig = self.signal();
                let g = self.guard();
                let acts = self.signal_actions();
                let t = if self.chance(0.8) { format!(" -> {}", self.pick(targets)) } else { String::new() };
                body.push(format!("on {trig}{g}{t} / {acts};"));
            }
            if self.chance(0.4) {
                let m = self.method();
                let t = self.pick(targets).clone();
                body.push(format!("on {m} -> {t};"));
            }
            if self.chance(0.15) {
                let t = self.pick(targets).clone();
                body.push(format!("after {}ms -> {t};", self.rng.gen_range(1..8) * 250));
            }
            if self.chance(0.1) {
                body.push("every 1s / c := c + 1;".into());
            }
            if self.chance(0.2) {
                body.push("entry / c := c + 1;".into());
            }
            if body.is_empty() && children.is_none() {
                self.line(depth, &format!("state {name};"));
                continue;
            }
            self.line(depth, &format!("state {name} {{"));
            for b in &body {
                self.line(depth + 1, b);
            }
            if let Some(children) = children {
                self.region_states(depth + 1, &children, &[], targets);
            }
            self.line(depth, "}");
        }
    }

    fn fresh_states(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| {
                self.next_state += 1;
                format!("S{}", self.next_state)
            })
            .collect()
    }

    fn top_region(&mut self, depth: usize) {
        let n = self.rng.gen_range(2..4);
        let names = self.fresh_states(n);
        let mut nested = Vec::new();
        let mut targets = names.clone();
        if self.chance(0.35) {
            let children = self.fresh_states(2);
            targets.extend(children.iter().cloned());
            nested.push((0, children));
        }
        if self.chance(0.2) {
            self.next_state += 1;
            let choice = format!("C{}", self.next_state);
            let (a, b) = (self.pick(&names).clone(), self.pick(&names).clone());
            self.line(depth, &format!("choice {choice} {{"));
            self.line(depth + 1, &format!("[c > 1] -> {a};"));
            self.line(depth + 1, &format!("else -> {b};"));
            self.line(depth, "}");
            targets.push(choice);
        }
        self.region_states(depth, &names, &nested, &targets);
    }

    fn statechart(&mut self) {
        self.line(0, "statechart G for N {");
        self.line(1, "var c: int;");
        if self.chance(0.5) {
            for r in 0..2 {
                self.line(1, &format!("region R{r} {{"));
                self.top_region(2);
                self.line(1, "}");
            }
        } else {
            self.top_region(1);
        }
        self.line(0, "}");
    }

    fn chart(&mut self, k: usize) {
        let n = self.rng.gen_range(2..=self.objects.min(3));
        let mut objs: Vec<usize> = (0..self.objects).collect();
        objs.shuffle(&mut self.rng);
        self.line(0, &format!("chart X{k} {{"));
        let lifelines: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
        for (i, l) in lifelines.iter().enumerate() {
            self.line(1, &format!("lifeline {l} : N = o{};", objs[i]));
        }
        let trig = if self.chance(0.7) { self.signal() } else { self.method() };
        self.line(1, &format!("env -> l0 : {trig}() mon cold;"));
        // Orders every later element after the trigger.
        self.line(1, &format!("sync({});", lifelines.join(", ")));
        let mut labels = 0;
        for _ in 0..self.rng.gen_range(1..5) {
            let roll = self.rng.gen_range(0..10);
            if roll == 0 {
                let all = lifelines.join(", ");
                self.line(1, &format!("sync({all});"));
            } else if roll == 1 && labels == 0 {
                labels += 1;
                let (a, b) = (self.pick(&lifelines).clone(), self.pick(&lifelines).clone());
                let m = self.method();
                self.line(1, "label open;");
                self.message(&lifelines);
                self.line(1, "label shut;");
                self.line(1, &format!("forbid {a} -> {b} : {m} from open to shut;"));
            } else if roll == 2 {
                let bound = self.rng.gen_range(0..2);
                self.line(1, &format!("cond [l0.v >= {bound}] cold;"));
            } else {
                self.message(&lifelines);
            }
        }
        self.line(0, "}");
    }

    fn message(&mut self, lifelines: &[String]) {
        let (a, b) = (self.pick(lifelines).clone(), self.pick(lifelines).clone());
        let m = self.method();
        let mode = if self.chance(0.6) { "exec" } else { "mon" };
        let temp = if self.chance(0.6) { "hot" } else { "cold" };
        self.line(1, &format!("{a} -> {b} : {m}() {mode} {temp};"));
    }

    fn script(&mut self) -> String {
        let mut s = String::new();
        for _ in 0..self.rng.gen_range(3..9) {
            let step = match self.rng.gen_range(0..10) {
                0..=5 => format!("inject env {}.{}", self.object(), self.signal()),
                6 | 7 => format!("inject {} {}.{}", self.object(), self.object(), self.method()),
                _ => format!("tick {}ms", self.rng.gen_range(1..7) * 250),
            };
            s.push_str(&step);
            s.push_str(";\n");
        }
        s
    }
}

/// Deterministically generates the model and script for `seed`.
pub fn generate(seed: u64) -> Case {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        objects: 0,
        signals: 0,
        methods: 0,
        next_state: 0,
        out: String::new(),
    };
    g.objects = g.rng.gen_range(2..4);
    g.signals = g.rng.gen_range(1..4);
    g.methods = g.rng.gen_range(1..4);
    g.line(0, "class N {");
    g.line(1, "prop v: int;");
    for i in 0..g.signals {
        g.line(1, &format!("signal s{i};"));
    }
    for i in 0..g.methods {
        g.line(1, &format!("method m{i};"));
    }
    g.line(0, "}");
    for i in 0..g.objects {
        let v = g.rng.gen_range(0..2);
        g.line(0, &format!("object o{i} : N {{ v = {v}; }}"));
    }
    if g.chance(0.8) {
        g.statechart();
    }
    for k in 0..g.rng.gen_range(0..4) {
        g.chart(k);
    }
    let script = g.script();
    Case { seed, model: g.out, script }
}

/// Runs `script` step by step, checking configuration validity, cut
/// monotonicity and that no chart-executed entry is violating. Returns the
/// full trace.
pub fn run_checked(model: &Model, script: &Script) -> Result<Vec<TraceEntry>, String> {
    let mut sys = System::new(Arc::new(model.clone()), Options { step_bound: 500, strict: false })
        .map_err(|e| e.to_string())?;
    for (i, step) in script.steps.iter().enumerate() {
        let before: Vec<(String, u64, Vec<u64>)> =
            sys.playout().copies().iter().map(|c| (c.chart.clone(), c.copy, c.cut().to_vec())).collect();
        let start = sys.trace().len();
        if let Err(e) = sys.run_step(step) {
            return Err(format!("step {i} `{step}`: {e}"));
        }
        for m in sys.machines() {
            m.check_configuration().map_err(|e| format!("step {i}: {e}"))?;
        }
        for c in sys.playout().copies() {
            if let Some((_, _, old)) = before.iter().find(|(ch, id, _)| *ch == c.chart && *id == c.copy) {
                if c.cut().iter().zip(old).any(|(new, old)| new < old) {
                    return Err(format!("step {i}: cut of {}#{} went back: {old:?} -> {:?}", c.chart, c.copy, c.cut()));
                }
            }
        }
        for e in &sys.trace()[start..] {
            if e.event.origin.is_lsc() && !e.violations.is_empty() {
                return Err(format!("step {i}: chart-executed entry {} carries {:?}", e.to_json_line(), e.violations));
            }
        }
    }
    Ok(sys.trace().to_vec())
}

/// Runs the first `split` steps, moves the state through a JSON snapshot
/// into a fresh system, and checks that the rest of the run matches.
pub fn check_snapshot_replay(model: &Model, script: &Script, split: usize) -> Result<(), String> {
    let fresh = || System::new(Arc::new(model.clone()), Options { step_bound: 500, strict: false }).unwrap();
    let mut a = fresh();
    for step in &script.steps[..split] {
        let _ = a.run_step(step);
    }
    let json = serde_json::to_string(&a.snapshot()).map_err(|e| e.to_string())?;
    let mut b = fresh();
    b.restore(&serde_json::from_str(&json).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mark = a.trace().len();
    for step in &script.steps[split..] {
        let ra = a.run_step(step).map_err(|e| e.to_string());
        let rb = b.run_step(step).map_err(|e| e.to_string());
        if ra != rb {
            return Err(format!("step `{step}` diverged after restore"));
        }
    }
    if json_lines(&a.trace()[mark..]) != json_lines(b.trace()) {
        return Err(format!("traces diverged after restore at step {split}"));
    }
    if a.snapshot() != b.snapshot() {
        return Err("final snapshots differ".into());
    }
    Ok(())
}

/// parse, print, parse again: equal bundles, and printing is stable.
pub fn check_round_trip(name: &str, text: &str) -> Result<(), String> {
    let parse = |t: &str| playweave::text::parse_bundle(&[TextSource { name, text: t }]);
    let first = parse(text).map_err(|e| format!("original does not parse: {e:?}"))?;
    let printed = playweave::serialize_model(&first);
    let second = parse(&printed).map_err(|e| format!("printed text does not parse: {e:?}\n{printed}"))?;
    if first != second {
        return Err(format!("bundle changed through printing:\n{printed}"));
    }
    if playweave::serialize_model(&second) != printed {
        return Err("printing is not stable".into());
    }
    Ok(())
}

/// Random byte-level edits of `text`.
pub fn mutations(text: &str, seed: u64, count: usize) -> Vec<String> {
    const PIECES: [&str; 12] = ["{", "}", ";", "->", "(", ")", "[", "\"", "-", "9999999999999999999999", "ś", "state"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut chars: Vec<char> = text.chars().collect();
            for _ in 0..rng.gen_range(1..4) {
                let at = rng.gen_range(0..=chars.len());
                match rng.gen_range(0..3) {
                    0 if at < chars.len() => {
                        let end = (at + rng.gen_range(1..12)).min(chars.len());
                        chars.drain(at..end);
                    }
                    1 => {
                        let piece = PIECES.choose(&mut rng).expect("non-empty");
                        chars.splice(at..at, piece.chars());
                    }
                    _ => chars.truncate(at),
                }
            }
            chars.into_iter().collect()
        })
        .collect()
}

/// Feeds mutated model and script text to the parser; panics are failures.
pub fn check_fuzz(case: &Case, count: usize) -> Result<(), String> {
    let model = load("gen.rxm", &case.model);
    for (i, text) in mutations(&case.model, case.seed, count).into_iter().enumerate() {
        let r = std::panic::catch_unwind(|| {
            let _ = load_model(&[TextSource { name: "fuzz.rxm", text: &text }]);
        });
        if r.is_err() {
            return Err(format!("model mutation {i} panicked:\n{text}"));
        }
    }
    for (i, text) in mutations(&case.script, case.seed ^ 0x5eed, count).into_iter().enumerate() {
        if std::panic::catch_unwind(|| parse_script(&text, &model)).is_err() {
            return Err(format!("script mutation {i} panicked:\n{text}"));
        }
    }
    Ok(())
}

/// Every property for one generated case.
pub fn check_case(case: &Case) -> Result<(), String> {
    let ctx = |e: String| format!("seed {}: {e}", case.seed);
    let model = load("gen.rxm", &case.model);
    let script = script(&model, &case.script);
    let first = run_checked(&model, &script).map_err(ctx)?;
    let second = run_checked(&model, &script).map_err(ctx)?;
    if json_lines(&first) != json_lines(&second) {
        return Err(ctx("two runs produced different traces".into()));
    }
    let split = (case.seed as usize) % (script.steps.len() + 1);
    check_snapshot_replay(&model, &script, split).map_err(ctx)?;
    check_round_trip("gen.rxm", &case.model).map_err(ctx)?;
    check_fuzz(case, 8).map_err(ctx)?;
    Ok(())
}
