//! Name-keyed registries of trait-object builders.
//!
//! Every interchangeable piece of a run (boundary data, loads, initial
//! fields, damage solvers) is registered here under a string name and
//! constructed at runtime from the `family` field of its configuration
//! object. The remaining keys of that object are the family's parameters.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub type Builder<T> = fn(&Map<String, Value>, &str) -> Result<Box<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Builder<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, builder: Builder<T>) -> &mut Self {
        self.entries.insert(name, builder);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Builds from `{"family": <name>, ...params}` found at `path`.
    pub fn build(&self, entry: &Value, path: &str) -> Result<Box<T>> {
        let obj = entry
            .as_object()
            .ok_or_else(|| Error::config(path, format!("expected an object describing a {}", self.kind)))?;
        let family = obj
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::config(format!("{path}.family"), "missing family name"))?;
        let builder = self.entries.get(family).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            let hint = suggest(family, &known)
                .map(|s| format!(" (did you mean `{s}`?)"))
                .unwrap_or_default();
            Error::config(
                format!("{path}.family"),
                format!("unknown {} `{family}`{hint}; known: {}", self.kind, known.join(", ")),
            )
        })?;
        let mut params = obj.clone();
        params.remove("family");
        builder(&params, path)
    }
}

/// Deserializes family parameters, reporting the offending key path.
pub fn params<P: DeserializeOwned>(map: &Map<String, Value>, path: &str) -> Result<P> {
    let value = Value::Object(map.clone());
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
        Error::config(full, with_suggestion(&e.inner().to_string()))
    })
}

/// Closest candidate within edit distance 2.
pub fn suggest<'a>(word: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(word, c), *c))
        .filter(|(d, _)| *d <= 2)
        .min()
        .map(|(_, c)| c)
}

/// Appends a "did you mean" hint to serde's unknown-field messages.
pub fn with_suggestion(message: &str) -> String {
    // serde: "unknown field `x`, expected one of `a`, `b`" / "expected `a`"
    let Some(rest) = message.strip_prefix("unknown field `") else {
        return message.to_string();
    };
    let Some(end) = rest.find('`') else {
        return message.to_string();
    };
    let field = &rest[..end];
    let expected: Vec<&str> = rest[end..]
        .split('`')
        .skip(2)
        .step_by(2)
        .collect();
    match suggest(field, &expected) {
        Some(s) => format!("{message} (did you mean `{s}`?)"),
        None => message.to_string(),
    }
}
