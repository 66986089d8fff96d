use std::io::{self, BufRead, IsTerminal, Write};

use playweave::{StepOutcome, TraceEntry};

use crate::session::{describe, Session};

const USAGE: &str = "commands: inject <src> <obj>.<event>[(args)] | tick <duration> | assert <expr> | state <obj> | charts | trace | reset | help | quit";

pub fn run(mut session: Session) -> io::Result<()> {
    let stdin = io::stdin();
    let prompt = stdin.is_terminal();
    repl(&mut session, stdin.lock(), io::stdout().lock(), prompt)
}

fn print_entries(out: &mut impl Write, entries: &[TraceEntry], clock: u64) -> io::Result<()> {
    for e in entries {
        writeln!(out, "{}", describe(e))?;
    }
    if entries.is_empty() {
        writeln!(out, "quiescent, clock={clock}")?;
    }
    Ok(())
}

/// Reads commands until `quit` or end of input.
pub fn repl(session: &mut Session, input: impl BufRead, mut out: impl Write, prompt: bool) -> io::Result<()> {
    let mut lines = input.lines();
    loop {
        if prompt {
            write!(out, "> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else { return Ok(()) };
        let line = line?;
        let line = line.trim();
        let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match session.catch_up() {
            Ok(entries) => {
                for e in &entries {
                    writeln!(out, "{}", describe(e))?;
                }
            }
            Err(e) => writeln!(out, "error: {e}")?,
        }
        match word {
            "" => {}
            "quit" | "exit" => return Ok(()),
            "help" => writeln!(out, "{USAGE}")?,
            "inject" | "tick" | "assert" => step(session, line, &mut out)?,
            "state" => state(session, rest.trim(), &mut out)?,
            "charts" => charts(session, &mut out)?,
            "trace" => {
                for e in session.sys.trace() {
                    writeln!(out, "{}", e.to_json_line())?;
                }
            }
            "reset" => match session.reset() {
                Ok(_) => writeln!(out, "reset, clock=0")?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
            other => writeln!(out, "unknown command `{other}`\n{USAGE}")?,
        }
        out.flush()?;
    }
}

fn step(session: &mut Session, line: &str, out: &mut impl Write) -> io::Result<()> {
    let script = match playweave::text::parse_script_named("<repl>", line, session.model()) {
        Ok(s) => s,
        Err(errs) => {
            for e in errs {
                writeln!(out, "{}", e.render())?;
            }
            return writeln!(out, "{USAGE}");
        }
    };
    for s in &script.steps {
        match session.sys.run_step(s) {
            Ok(StepOutcome::Entries(entries)) => print_entries(out, &entries, session.sys.clock())?,
            Ok(StepOutcome::Assertion(true, _)) => writeln!(out, "holds")?,
            Ok(StepOutcome::Assertion(false, None)) => writeln!(out, "fails")?,
            Ok(StepOutcome::Assertion(false, Some(why))) => writeln!(out, "cannot evaluate: {why}")?,
            Err(e) => writeln!(out, "error: {e}")?,
        }
    }
    Ok(())
}

fn state(session: &Session, obj: &str, out: &mut impl Write) -> io::Result<()> {
    let id = playweave::ObjectId::new(obj);
    let Ok(values) = session.sys.store().values_of(&id) else {
        return writeln!(out, "unknown object `{obj}`");
    };
    match session.sys.machine(obj) {
        Some(m) => writeln!(out, "{obj}: {{{}}}", m.configuration().join(", "))?,
        None => writeln!(out, "{obj}: no statechart")?,
    }
    for (p, v) in values {
        writeln!(out, "  {p} = {v}")?;
    }
    if let Some(m) = session.sys.machine(obj) {
        for v in &m.spec().variables {
            if let Some(val) = m.variable(&v.name) {
                writeln!(out, "  var {} = {val}", v.name)?;
            }
        }
    }
    Ok(())
}

fn charts(session: &Session, out: &mut impl Write) -> io::Result<()> {
    let copies = session.sys.playout().copies();
    if copies.is_empty() {
        writeln!(out, "no running charts")?;
    }
    for c in copies {
        writeln!(out, "{}#{} cut {:?}", c.chart, c.copy, c.cut())?;
    }
    for e in session.sys.candidates() {
        writeln!(out, "candidate {e}")?;
    }
    for o in session.sys.obligations() {
        writeln!(out, "awaiting {} in {}#{}", o.message, o.chart, o.copy)?;
    }
    Ok(())
}
