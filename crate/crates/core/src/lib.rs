//! Joint execution of live sequence charts and hierarchical statecharts over
//! a shared object model.
//!
//! A [`Model`] is loaded from model text (see [`text`]), then run by a
//! [`System`], which interleaves statechart steps with chart play-out and
//! records a [`TraceEntry`] for every delivered event.

pub mod coordinator;
pub mod diag;
pub mod event;
pub mod expr;
pub mod lsc;
pub mod model;
pub mod object;
pub mod playout;
pub mod script;
pub mod statechart;
pub mod text;
pub mod value;

pub use coordinator::{EngineError, Options, ScriptReport, StepOutcome, System, SystemSnapshot, TraceEntry};
pub use event::{EventInstance, Origin, Source};
pub use expr::Expr;
pub use lsc::{ChartSpec, Violation, ViolationKind};
pub use model::{Model, ModelBundle};
pub use object::{ClassDef, ObjectStore};
pub use playout::Playout;
pub use script::{Script, Step};
pub use statechart::{MachineInstance, StatechartSpec};
pub use text::{load_model, parse_model, parse_script, serialize_model, ParseError, Source as TextSource};
pub use value::{ObjectId, Value, ValueKind};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::model::Model;
    use crate::text::{load_model, Source};

    pub fn model(text: &str) -> Model {
        load_model(&[Source { name: "test.rxm", text }]).unwrap_or_else(|es| {
            let msgs: Vec<String> = es.iter().map(|e| e.render()).collect();
            panic!("model does not load:\n{}", msgs.join("\n"))
        })
    }

    pub fn fixture(name: &str) -> String {
        let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
    }
}
