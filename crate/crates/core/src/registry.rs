//! Name-keyed factories for runtime-selectable components.

use serde::de::DeserializeOwned;

use crate::{Error, Result};

/// Builds a component from its parameter table.
pub type Factory<T> = fn(&toml::Table) -> Result<Box<T>>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Factory<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, name: &'static str, factory: Factory<T>) -> &mut Self {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, factory));
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn build(&self, name: &str, params: &toml::Table) -> Result<Box<T>> {
        let factory = self
            .entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| *f)
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })?;
        factory(params)
    }
}

/// Deserializes a parameter table into a typed struct, reporting failures
/// against `field`.
pub fn parse_params<P: DeserializeOwned>(field: &str, params: &toml::Table) -> Result<P> {
    P::deserialize(toml::Value::Table(params.clone())).map_err(|e| Error::config(field, e.to_string()))
}
