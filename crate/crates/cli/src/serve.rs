//! Session protocol: one JSON object per line in each direction.
//!
//! Requests carry a `cmd` of `inject`, `tick`, `snapshot` or `reset`.
//! Every request gets exactly one response with an `ok` flag. After a
//! request that ran a super-step or reset the system, an unsolicited
//! `{"type":"delta", ...}` line follows the response with what changed.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use anyhow::Context;
use serde::Deserialize;
use serde_json::{json, Map, Value as Json};

use playweave::{SystemSnapshot, TraceEntry, Value};

use crate::session::Session;

/// How often the wall-clock ticker wakes the coordinator.
const WALL_PERIOD: Duration = Duration::from_millis(100);

#[derive(Debug, Deserialize, PartialEq)]
#[serde(tag = "cmd", rename_all = "lowercase", deny_unknown_fields)]
enum Request {
    Inject {
        #[serde(default = "env")]
        src: String,
        dst: String,
        event: String,
        #[serde(default)]
        args: Vec<Json>,
    },
    Tick {
        ms: u64,
    },
    Snapshot,
    Reset,
}

fn env() -> String {
    "env".into()
}

enum Msg {
    Line(String),
    Clock,
    Closed,
}

/// Plain JSON arguments: numbers, strings, booleans, `null` for the null
/// reference and `{"ref": "id"}` for an object.
fn to_value(j: &Json) -> Result<Value, String> {
    match j {
        Json::Number(n) => n.as_i64().map(Value::Int).ok_or_else(|| format!("`{n}` is not an integer")),
        Json::String(s) => Ok(Value::Str(s.clone())),
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Null => Ok(Value::Ref(None)),
        Json::Object(m) => match (m.len(), m.get("ref")) {
            (1, Some(Json::String(id))) => Ok(Value::obj(id.as_str())),
            _ => Err(format!("unsupported argument {j}")),
        },
        Json::Array(_) => Err(format!("unsupported argument {j}")),
    }
}

fn entries_json(entries: &[TraceEntry]) -> Json {
    Json::Array(
        entries.iter().map(|e| serde_json::from_str(&e.to_json_line()).expect("trace lines are JSON")).collect(),
    )
}

fn plain(values: &BTreeMap<String, Value>) -> Json {
    Json::Object(values.iter().map(|(k, v)| (k.clone(), v.to_plain_json())).collect())
}

/// What differs between two snapshots. Objects and machines appear only
/// when changed; chart copies, obligations and the queue are always sent
/// whole.
pub fn delta(old: Option<&SystemSnapshot>, new: &SystemSnapshot) -> Json {
    let mut objects = Map::new();
    for (id, values) in &new.objects {
        let before = old.and_then(|o| o.objects.iter().find(|(i, _)| i == id)).map(|(_, v)| v);
        if before != Some(values) {
            objects.insert(id.to_string(), plain(values));
        }
    }
    let mut machines = Map::new();
    for m in &new.machines {
        let before = old.and_then(|o| o.machines.iter().find(|x| x.owner == m.owner));
        if before.map(|b| (&b.configuration, &b.variables)) != Some((&m.configuration, &m.variables)) {
            machines.insert(
                m.owner.to_string(),
                json!({ "configuration": m.configuration, "variables": plain(&m.variables) }),
            );
        }
    }
    let charts: Vec<Json> = new
        .playout
        .copies
        .iter()
        .map(|c| json!({ "chart": c.chart, "copy": c.copy, "cut": c.progress }))
        .collect();
    json!({
        "type": "delta",
        "clock": new.clock,
        "seq": new.seq,
        "halted": new.halted,
        "objects": objects,
        "machines": machines,
        "charts": charts,
        "obligations": new.obligations,
        "violations": new.playout.violations.len(),
    })
}

struct Server<W: Write> {
    session: Session,
    out: W,
    last: SystemSnapshot,
}

impl<W: Write> Server<W> {
    fn send(&mut self, msg: &Json) -> io::Result<()> {
        writeln!(self.out, "{msg}")?;
        self.out.flush()
    }

    fn push_delta(&mut self) -> io::Result<()> {
        let now = self.session.sys.snapshot();
        let d = delta(Some(&self.last), &now);
        self.last = now;
        self.send(&d)
    }

    fn handle(&mut self, line: &str) -> io::Result<()> {
        let raw: Json = match serde_json::from_str(line) {
            Ok(j) => j,
            Err(_) => return self.send(&json!({ "ok": false, "error": "parse" })),
        };
        let req: Request = match serde_json::from_value(raw) {
            Ok(r) => r,
            Err(e) => return self.send(&json!({ "ok": false, "error": format!("bad request: {e}") })),
        };
        let result = match req {
            Request::Snapshot => {
                let snap = serde_json::to_value(self.session.sys.snapshot()).expect("snapshots serialize");
                return self.send(&json!({ "ok": true, "snapshot": snap }));
            }
            Request::Inject { src, dst, event, args } => match args.iter().map(to_value).collect::<Result<Vec<_>, _>>() {
                Ok(args) => self.session.inject(&src, &dst, &event, args).map_err(|e| e.to_string()),
                Err(e) => Err(e),
            },
            Request::Tick { ms } => self.session.sys.tick(ms).map_err(|e| e.to_string()),
            Request::Reset => self.session.reset().map_err(|e| e.to_string()),
        };
        match result {
            Ok(entries) => {
                self.send(&json!({ "ok": true, "entries": entries_json(&entries) }))?;
                self.push_delta()
            }
            Err(e) => self.send(&json!({ "ok": false, "error": e })),
        }
    }

    fn wall_tick(&mut self) -> io::Result<()> {
        match self.session.catch_up() {
            Ok(entries) if !entries.is_empty() => {
                self.send(&json!({ "type": "entries", "entries": entries_json(&entries) }))?;
                self.push_delta()
            }
            Ok(_) => Ok(()),
            Err(e) => self.send(&json!({ "type": "error", "error": e.to_string() })),
        }
    }
}

/// Serves one session until the input closes. The reader runs on its own
/// thread and hands lines to this one, which alone owns the session.
pub fn serve_stream<R, W>(session: Session, input: R, out: W, wall: bool) -> io::Result<()>
where
    R: BufRead + Send + 'static,
    W: Write,
{
    let (tx, rx) = mpsc::channel();
    let reader_tx = tx.clone();
    thread::spawn(move || {
        for line in input.lines() {
            let Ok(line) = line else { break };
            if reader_tx.send(Msg::Line(line)).is_err() {
                return;
            }
        }
        let _ = reader_tx.send(Msg::Closed);
    });
    if wall {
        thread::spawn(move || loop {
            thread::sleep(WALL_PERIOD);
            if tx.send(Msg::Clock).is_err() {
                return;
            }
        });
    } else {
        drop(tx);
    }
    let last = session.sys.snapshot();
    let mut server = Server { session, out, last };
    let hello = delta(None, &server.last);
    server.send(&hello)?;
    for msg in rx {
        match msg {
            Msg::Line(l) if l.trim().is_empty() => {}
            Msg::Line(l) => server.handle(&l)?,
            Msg::Clock => server.wall_tick()?,
            Msg::Closed => break,
        }
    }
    Ok(())
}

pub fn run(session: Session, port: Option<u16>) -> anyhow::Result<()> {
    let wall = session.is_wall();
    match port {
        None => serve_stream(session, BufReader::new(io::stdin()), io::stdout(), wall)?,
        Some(p) => {
            let listener = TcpListener::bind(("127.0.0.1", p)).with_context(|| format!("cannot listen on port {p}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept().context("accept failed")?;
            log::info!("session from {peer}");
            let input = BufReader::new(stream.try_clone()?);
            serve_stream(session, input, stream, wall)?;
        }
    }
    Ok(())
}
