//! A parsed model bundle and its validated, runnable form.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, Span};
use crate::lsc::{ChartDef, ChartSpec};
use crate::object::{ClassDef, ObjectStore};
use crate::script::Script;
use crate::statechart::{path_matches, StatechartDef, StatechartSpec};
use crate::value::{ObjectId, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDef {
    pub id: String,
    pub class: String,
    pub values: Vec<(String, Value)>,
    #[serde(skip)]
    pub span: Span,
}

/// Everything declared in one or more model files, before validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub classes: Vec<ClassDef>,
    pub objects: Vec<ObjectDef>,
    pub statecharts: Vec<StatechartDef>,
    pub charts: Vec<ChartDef>,
    pub scripts: Vec<Script>,
}

impl ModelBundle {
    /// Appends the declarations of another bundle.
    pub fn extend(&mut self, other: ModelBundle) {
        self.classes.extend(other.classes);
        self.objects.extend(other.objects);
        self.statecharts.extend(other.statecharts);
        self.charts.extend(other.charts);
        self.scripts.extend(other.scripts);
    }
}

/// A validated model: the initial object store plus compiled behaviour.
#[derive(Debug, Clone)]
pub struct Model {
    pub bundle: ModelBundle,
    pub store: ObjectStore,
    pub statecharts: Vec<Arc<StatechartSpec>>,
    pub charts: Vec<Arc<ChartSpec>>,
}

impl Model {
    pub fn from_bundle(bundle: ModelBundle) -> Result<Model, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut store = ObjectStore::new();
        for c in &bundle.classes {
            if let Err(e) = store.register_class(c.clone()) {
                diags.push(Diagnostic::new(c.span, e.to_string()));
            }
        }
        // Objects first with scalar values, then references, so that
        // references may point forward.
        let mut created = Vec::new();
        for o in &bundle.objects {
            let scalars: Vec<(String, Value)> =
                o.values.iter().filter(|(_, v)| !matches!(v, Value::Ref(Some(_)))).cloned().collect();
            let Some(class) = store.class_id(&o.class) else {
                diags.push(Diagnostic::new(o.span, format!("object `{}` has unknown class `{}`", o.id, o.class)));
                continue;
            };
            match store.create_object(class, &o.id, &scalars) {
                Ok(_) => created.push(o),
                Err(e) => diags.push(Diagnostic::new(o.span, e.to_string())),
            }
        }
        for o in created {
            let id = ObjectId::new(o.id.as_str());
            for (p, v) in o.values.iter().filter(|(_, v)| matches!(v, Value::Ref(Some(_)))) {
                let target = v.as_object().expect("filtered to references");
                if !store.contains(target) {
                    diags.push(Diagnostic::new(o.span, format!("`{}.{p}` refers to unknown object `{target}`", o.id)));
                } else if let Err(e) = store.set(&id, p, v.clone()) {
                    diags.push(Diagnostic::new(o.span, e.to_string()));
                }
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }

        let remote = |class: &str, path: &[String]| -> Result<(), String> {
            let Some(sc) = bundle.statecharts.iter().find(|s| s.owner_class == class) else {
                return Err(format!("class `{class}` has no statechart to query"));
            };
            let path = path.join(".");
            let paths = sc.state_paths();
            if paths.iter().any(|p| *p == path) {
                return Ok(());
            }
            match paths.iter().filter(|p| path_matches(p, &path)).count() {
                1 => Ok(()),
                0 => Err(format!("unknown state `{path}` in statechart `{}`", sc.name)),
                _ => Err(format!("state path `{path}` is ambiguous in statechart `{}`", sc.name)),
            }
        };

        let mut statecharts = Vec::new();
        for (i, def) in bundle.statecharts.iter().enumerate() {
            if bundle.statecharts[..i].iter().any(|d| d.name == def.name) {
                diags.push(Diagnostic::new(def.span, format!("statechart `{}` declared twice", def.name)));
                continue;
            }
            if bundle.statecharts[..i].iter().any(|d| d.owner_class == def.owner_class) {
                diags.push(Diagnostic::new(def.span, format!("class `{}` already has a statechart", def.owner_class)));
                continue;
            }
            match StatechartSpec::compile(def, &store, &remote) {
                Ok(s) => statecharts.push(Arc::new(s)),
                Err(d) => diags.extend(d),
            }
        }
        let mut charts = Vec::new();
        for (i, def) in bundle.charts.iter().enumerate() {
            if bundle.charts[..i].iter().any(|d| d.name == def.name) {
                diags.push(Diagnostic::new(def.span, format!("chart `{}` declared twice", def.name)));
                continue;
            }
            match ChartSpec::compile(def, &store, &remote) {
                Ok(c) => charts.push(Arc::new(c)),
                Err(d) => diags.extend(d),
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        Ok(Model { bundle, store, statecharts, charts })
    }

    /// Statechart bound to objects of `class`, if any.
    pub fn statechart_for(&self, class: &str) -> Option<&Arc<StatechartSpec>> {
        self.statecharts.iter().find(|s| s.owner_class == class)
    }
}
