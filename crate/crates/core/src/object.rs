//! The shared object model: classes, object instances and their properties.
//!
//! Both statechart machines and chart copies read and write the same
//! [`ObjectStore`]. Objects are created before a run starts and are never
//! deleted, so every stored reference stays valid for the whole run.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Span;
use crate::expr::{EvalError, Expr, Scope};
use crate::value::{ObjectId, Value, ValueKind};

/// Prefix of the implicit one-argument setter event every property gets.
pub const SETTER_PREFIX: &str = "set_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub name: String,
    pub kind: ValueKind,
    /// Explicit default; `None` means the kind's zero value.
    pub default: Option<Value>,
    #[serde(skip)]
    pub span: Span,
}

impl PropertyDef {
    pub fn initial(&self) -> Value {
        self.default.clone().unwrap_or_else(|| self.kind.default_value())
    }
}

/// A signal or method a class accepts, with its arity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDecl {
    pub name: String,
    pub arity: usize,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    pub properties: Vec<PropertyDef>,
    pub signals: Vec<EventDecl>,
    pub methods: Vec<EventDecl>,
    #[serde(skip)]
    pub span: Span,
}

impl ClassDef {
    pub fn new(name: &str) -> Self {
        ClassDef { name: name.to_string(), ..Default::default() }
    }

    pub fn property(mut self, name: &str, kind: ValueKind, default: Option<Value>) -> Self {
        self.properties.push(PropertyDef { name: name.into(), kind, default, span: Span::default() });
        self
    }

    pub fn signal(mut self, name: &str, arity: usize) -> Self {
        self.signals.push(EventDecl { name: name.into(), arity, span: Span::default() });
        self
    }

    pub fn method(mut self, name: &str, arity: usize) -> Self {
        self.methods.push(EventDecl { name: name.into(), arity, span: Span::default() });
        self
    }

    pub fn property_def(&self, name: &str) -> Option<&PropertyDef> {
        self.properties.iter().find(|p| p.name == name)
    }

    fn property_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    /// Arity of an event this class accepts: a declared signal or method, or
    /// the implicit `set_<prop>` setter.
    pub fn event_arity(&self, name: &str) -> Option<usize> {
        if let Some(e) = self.signals.iter().chain(&self.methods).find(|e| e.name == name) {
            return Some(e.arity);
        }
        let prop = name.strip_prefix(SETTER_PREFIX)?;
        self.property_def(prop).map(|_| 1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = Vec::new();
        for p in &self.properties {
            if seen.contains(&p.name.as_str()) {
                return Err(ModelError::DuplicateMember { class: self.name.clone(), member: p.name.clone() });
            }
            seen.push(&p.name);
            if let Some(d) = &p.default {
                if !d.conforms_to(p.kind) || matches!(d, Value::Ref(Some(_))) {
                    return Err(ModelError::MalformedDefault {
                        class: self.name.clone(),
                        property: p.name.clone(),
                    });
                }
            }
        }
        let mut seen = Vec::new();
        for e in self.signals.iter().chain(&self.methods) {
            if seen.contains(&e.name.as_str()) {
                return Err(ModelError::DuplicateMember { class: self.name.clone(), member: e.name.clone() });
            }
            seen.push(&e.name);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("class `{0}` is already registered")]
    DuplicateClass(String),
    #[error("class `{class}` declares `{member}` more than once")]
    DuplicateMember { class: String, member: String },
    #[error("default of `{class}.{property}` does not match its declared kind")]
    MalformedDefault { class: String, property: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("object `{0}` already exists")]
    DuplicateObject(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown property `{property}` on `{object}`")]
    UnknownProperty { object: String, property: String },
    #[error("`{object}.{property}` is {expected}, got {found}")]
    KindMismatch { object: String, property: String, expected: ValueKind, found: ValueKind },
}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownObject(o) => EvalError::UnknownObject(o),
            ModelError::UnknownProperty { object, property } => {
                EvalError::UnknownProperty { object, prop: property }
            }
            other => EvalError::Type(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub class: ClassId,
    values: Vec<Value>,
}

impl ObjectInstance {
    pub fn values(&self) -> &[Value] {
        &self.values
    }
}

/// Single-owner store of classes and objects.
#[derive(Debug, Clone, Default)]
pub struct ObjectStore {
    classes: Vec<ClassDef>,
    class_index: HashMap<String, ClassId>,
    objects: Vec<ObjectInstance>,
    object_index: HashMap<ObjectId, usize>,
}

impl ObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_class(&mut self, def: ClassDef) -> Result<ClassId, ModelError> {
        if self.class_index.contains_key(&def.name) {
            return Err(ModelError::DuplicateClass(def.name));
        }
        def.validate()?;
        let id = ClassId(self.classes.len());
        self.class_index.insert(def.name.clone(), id);
        self.classes.push(def);
        Ok(id)
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn class(&self, id: ClassId) -> &ClassDef {
        &self.classes[id.0]
    }

    pub fn class_by_name(&self, name: &str) -> Option<&ClassDef> {
        self.class_id(name).map(|c| self.class(c))
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn create_object(
        &mut self,
        class: ClassId,
        id: &str,
        overrides: &[(String, Value)],
    ) -> Result<ObjectId, ModelError> {
        let def = self.classes.get(class.0).ok_or_else(|| ModelError::UnknownClass(format!("#{}", class.0)))?;
        let oid = ObjectId::new(id);
        if self.object_index.contains_key(&oid) {
            return Err(ModelError::DuplicateObject(id.to_string()));
        }
        let mut values: Vec<Value> = def.properties.iter().map(PropertyDef::initial).collect();
        for (name, v) in overrides {
            let idx = def.property_index(name).ok_or_else(|| ModelError::UnknownProperty {
                object: id.to_string(),
                property: name.clone(),
            })?;
            let kind = def.properties[idx].kind;
            if !v.conforms_to(kind) {
                return Err(ModelError::KindMismatch {
                    object: id.to_string(),
                    property: name.clone(),
                    expected: kind,
                    found: v.kind(),
                });
            }
            if let Value::Ref(Some(target)) = v {
                if target != &oid && !self.object_index.contains_key(target) {
                    return Err(ModelError::UnknownObject(target.0.clone()));
                }
            }
            values[idx] = v.clone();
        }
        self.object_index.insert(oid.clone(), self.objects.len());
        self.objects.push(ObjectInstance { id: oid.clone(), class, values });
        Ok(oid)
    }

    pub fn contains(&self, id: &ObjectId) -> bool {
        self.object_index.contains_key(id)
    }

    pub fn object(&self, id: &ObjectId) -> Result<&ObjectInstance, ModelError> {
        self.object_index
            .get(id)
            .map(|&i| &self.objects[i])
            .ok_or_else(|| ModelError::UnknownObject(id.0.clone()))
    }

    pub fn class_of(&self, id: &ObjectId) -> Result<&ClassDef, ModelError> {
        Ok(self.class(self.object(id)?.class))
    }

    /// Objects in creation order.
    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn get(&self, id: &ObjectId, prop: &str) -> Result<Value, ModelError> {
        let obj = self.object(id)?;
        let idx = self.class(obj.class).property_index(prop).ok_or_else(|| {
            ModelError::UnknownProperty { object: id.0.clone(), property: prop.into() }
        })?;
        Ok(obj.values[idx].clone())
    }

    pub fn set(&mut self, id: &ObjectId, prop: &str, value: Value) -> Result<Value, ModelError> {
        let &oi = self.object_index.get(id).ok_or_else(|| ModelError::UnknownObject(id.0.clone()))?;
        let def = &self.classes[self.objects[oi].class.0];
        let idx = def.property_index(prop).ok_or_else(|| ModelError::UnknownProperty {
            object: id.0.clone(),
            property: prop.into(),
        })?;
        let kind = def.properties[idx].kind;
        if !value.conforms_to(kind) {
            return Err(ModelError::KindMismatch {
                object: id.0.clone(),
                property: prop.into(),
                expected: kind,
                found: value.kind(),
            });
        }
        if let Value::Ref(Some(target)) = &value {
            if !self.object_index.contains_key(target) {
                return Err(ModelError::UnknownObject(target.0.clone()));
            }
        }
        self.objects[oi].values[idx] = value.clone();
        Ok(value)
    }

    /// Reads a property, or writes it when `write` is given, returning the
    /// current value either way.
    pub fn property_access(
        &mut self,
        id: &ObjectId,
        prop: &str,
        write: Option<Value>,
    ) -> Result<Value, ModelError> {
        match write {
            Some(v) => self.set(id, prop, v),
            None => self.get(id, prop),
        }
    }

    /// All instances of `class` for which `keep` holds, in creation order.
    pub fn query_with<E>(
        &self,
        class: ClassId,
        mut keep: impl FnMut(&ObjectId) -> Result<bool, E>,
    ) -> Result<Vec<ObjectId>, E> {
        let mut out = Vec::new();
        for o in self.objects.iter().filter(|o| o.class == class) {
            if keep(&o.id)? {
                out.push(o.id.clone());
            }
        }
        Ok(out)
    }

    /// All instances of `class` satisfying `predicate`, in creation order.
    /// Bare identifiers in the predicate name the candidate's own properties
    /// first and fall back to object ids.
    pub fn query_objects(&self, class: ClassId, predicate: &Expr) -> Result<Vec<ObjectId>, EvalError> {
        let def = self.classes.get(class.0).ok_or_else(|| EvalError::Type(format!("unknown class #{}", class.0)))?;
        for name in predicate.identifiers() {
            if def.property_def(name).is_none() && !self.contains(&ObjectId::new(name)) && name != "self" {
                return Err(EvalError::UnknownIdentifier(name.to_string()));
            }
        }
        self.query_with(class, |id| predicate.eval_bool(&PropertyScope { store: self, this: id }))
    }

    /// Property values of one object keyed by name, for snapshots.
    pub fn values_of(&self, id: &ObjectId) -> Result<BTreeMap<String, Value>, ModelError> {
        let obj = self.object(id)?;
        let def = self.class(obj.class);
        Ok(def.properties.iter().map(|p| p.name.clone()).zip(obj.values.iter().cloned()).collect())
    }

    pub(crate) fn restore_values(&mut self, id: &ObjectId, values: &BTreeMap<String, Value>) -> Result<(), ModelError> {
        for (k, v) in values {
            self.set(id, k, v.clone())?;
        }
        Ok(())
    }
}

/// Scope where bare identifiers resolve to one object's properties, then to
/// object ids.
pub struct PropertyScope<'a> {
    pub store: &'a ObjectStore,
    pub this: &'a ObjectId,
}

impl Scope for PropertyScope<'_> {
    fn ident(&self, name: &str) -> Result<Value, EvalError> {
        if name == "self" {
            return Ok(Value::Ref(Some(self.this.clone())));
        }
        match self.store.get(self.this, name) {
            Ok(v) => Ok(v),
            Err(_) => GlobalScope { store: self.store }.ident(name),
        }
    }

    fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError> {
        Ok(self.store.get(object, prop)?)
    }

    fn active(&self, _: Option<&ObjectId>, _: &str) -> Result<bool, EvalError> {
        Err(EvalError::NoStateQuery)
    }
}

/// Scope where bare identifiers are object ids.
pub struct GlobalScope<'a> {
    pub store: &'a ObjectStore,
}

impl Scope for GlobalScope<'_> {
    fn ident(&self, name: &str) -> Result<Value, EvalError> {
        let id = ObjectId::new(name);
        if self.store.contains(&id) {
            Ok(Value::Ref(Some(id)))
        } else {
            Err(EvalError::UnknownIdentifier(name.to_string()))
        }
    }

    fn property(&self, object: &ObjectId, prop: &str) -> Result<Value, EvalError> {
        Ok(self.store.get(object, prop)?)
    }

    fn active(&self, _: Option<&ObjectId>, _: &str) -> Result<bool, EvalError> {
        Err(EvalError::NoStateQuery)
    }
}
