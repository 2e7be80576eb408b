//! Name-keyed registries of interchangeable strategies.
//!
//! Each strategy family (indicator loss, NP scoring, evaluation metric) is a
//! trait; its implementations are registered here under a stable name and
//! resolved at runtime from config files or CLI flags.

use crate::error::{Error, Result};

type Factory<T> = Box<dyn Fn() -> Box<T> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(String, Factory<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Register a constructor under `name`. A later registration with the
    /// same name replaces the earlier one.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn() -> Box<T> + Send + Sync + 'static,
    {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), Box::new(factory)));
        self
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    /// Registered names in registration order.
    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }
    struct Hello;
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }
    struct Hi;
    impl Greeter for Hi {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn resolves_by_name_and_reports_unknown() {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter");
        r.register("hello", || Box::new(Hello)).register("hi", || Box::new(Hi));
        assert_eq!(r.create("hi").unwrap().greet(), "hi");
        assert_eq!(r.names(), vec!["hello", "hi"]);
        let err = r.create("hey").err().unwrap().to_string();
        assert!(err.contains("hello, hi"), "{err}");
    }

    #[test]
    fn re_registration_replaces() {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter");
        r.register("x", || Box::new(Hello)).register("x", || Box::new(Hi));
        assert_eq!(r.names().len(), 1);
        assert_eq!(r.create("x").unwrap().greet(), "hi");
    }
}
