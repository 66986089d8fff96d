//! `playweave`: run scripts against models, play them out interactively, or
//! serve a session over newline-delimited JSON.

mod repl;
mod serve;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use playweave::{load_model, Model, Options, System, TextSource, ViolationKind};

#[derive(Parser)]
#[command(name = "playweave", version, about = "Joint play-out of sequence charts and statecharts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a script and write the trace as JSON lines.
    Run {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        script: PathBuf,
        /// Trace output file; standard output when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Interactive play-out.
    Repl {
        #[command(flatten)]
        engine: EngineArgs,
        /// Advance the clock with real elapsed time.
        #[arg(long)]
        wall: bool,
    },
    /// Serve one session over standard streams or a local TCP port.
    Serve {
        #[command(flatten)]
        engine: EngineArgs,
        /// Listen on 127.0.0.1 at this port (0 picks a free one).
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        wall: bool,
    },
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Model files, loaded together.
    #[arg(long = "model", required = true, num_args = 1..)]
    models: Vec<PathBuf>,
    /// Stop at the first hot or forbidden violation.
    #[arg(long)]
    strict: bool,
    /// Maximum events selected in one super-step.
    #[arg(long, default_value_t = playweave::coordinator::DEFAULT_STEP_BOUND)]
    step_bound: usize,
}

impl EngineArgs {
    fn options(&self) -> Options {
        Options { step_bound: self.step_bound, strict: self.strict }
    }
}

/// Exit status for unreadable or invalid input.
const EXIT_INPUT: u8 = 2;

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_INPUT)
    })
}

fn load(args: &EngineArgs) -> Result<Model, ExitCode> {
    let texts = args.models.iter().map(read).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = args.models.iter().map(|p| p.display().to_string()).collect();
    let sources: Vec<TextSource> = names.iter().zip(&texts).map(|(name, text)| TextSource { name, text }).collect();
    load_model(&sources).map_err(|errs| {
        for e in errs {
            eprintln!("{}", e.render());
        }
        ExitCode::from(EXIT_INPUT)
    })
}

fn run(engine: &EngineArgs, script_path: &PathBuf, trace: Option<&PathBuf>) -> Result<ExitCode, ExitCode> {
    let model = load(engine)?;
    let text = read(script_path)?;
    let name = script_path.display().to_string();
    let script = playweave::text::parse_script_named(&name, &text, &model).map_err(|errs| {
        for e in errs {
            eprintln!("{}", e.render());
        }
        ExitCode::from(EXIT_INPUT)
    })?;
    let mut sys = System::new(model.into(), engine.options()).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_INPUT)
    })?;
    let report = sys.run_script(&script);
    let lines: String = sys.trace().iter().map(|e| e.to_json_line() + "\n").collect();
    match trace {
        Some(path) => std::fs::write(path, lines).map_err(|e| {
            eprintln!("{}: {e}", path.display());
            ExitCode::FAILURE
        })?,
        None => print!("{lines}"),
    }
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    for e in sys.errors() {
        eprintln!("run error: {e}");
    }
    for a in report.assertions.iter().filter(|a| !a.passed) {
        match &a.error {
            Some(why) => eprintln!("step {}: `{}` could not be evaluated: {why}", a.step + 1, a.text),
            None => eprintln!("step {}: `{}` failed", a.step + 1, a.text),
        }
    }
    let serious = sys
        .trace()
        .iter()
        .flat_map(|e| &e.violations)
        .filter(|v| matches!(v.kind, ViolationKind::Hot | ViolationKind::Forbidden))
        .count();
    eprintln!(
        "{} entries, {}/{} assertions passed, {serious} violations",
        sys.trace().len(),
        report.assertions.len() - report.failed_assertions(),
        report.assertions.len()
    );
    let failed = report.failed_assertions() > 0 || (engine.strict && serious > 0);
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { engine, script, trace } => run(engine, script, trace.as_ref()),
        Command::Repl { engine, wall } => load(engine).and_then(|m| {
            let session = session::Session::new(m, engine.options(), *wall).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INPUT)
            })?;
            repl::run(session).map(|_| ExitCode::SUCCESS).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            })
        }),
        Command::Serve { engine, port, wall } => load(engine).and_then(|m| {
            let session = session::Session::new(m, engine.options(), *wall).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INPUT)
            })?;
            serve::run(session, *port).map(|_| ExitCode::SUCCESS).map_err(|e| {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            })
        }),
    };
    result.unwrap_or_else(|code| code)
}

