//! Name-keyed registries of interchangeable strategies.

use crate::error::{Error, Result};

pub trait Named {
    fn name(&self) -> &'static str;
}

/// Holds boxed strategy objects and resolves them by name at runtime.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Box<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds a strategy, replacing any earlier entry with the same name.
    pub fn register(&mut self, strategy: Box<T>) {
        let name = strategy.name();
        self.entries.retain(|e| e.name() != name);
        self.entries.push(strategy);
    }

    pub fn with(mut self, strategy: Box<T>) -> Self {
        self.register(strategy);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}
