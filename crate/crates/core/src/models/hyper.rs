use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl HyperValue {
    /// `null` and the string `"none"` both mean "unset".
    pub fn is_none(&self) -> bool {
        matches!(self, HyperValue::Null) || matches!(self, HyperValue::Text(s) if s == "none")
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HyperValue::Int(i) => Some(*i as f64),
            HyperValue::Float(f) => Some(*f),
            _ => None,
        }
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Null => f.write_str("none"),
            HyperValue::Bool(b) => write!(f, "{b}"),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Float(v)
    }
}

impl From<i64> for HyperValue {
    fn from(v: i64) -> Self {
        HyperValue::Int(v)
    }
}

impl From<usize> for HyperValue {
    fn from(v: usize) -> Self {
        HyperValue::Int(v as i64)
    }
}

impl From<i32> for HyperValue {
    fn from(v: i32) -> Self {
        HyperValue::Int(v as i64)
    }
}

impl From<bool> for HyperValue {
    fn from(v: bool) -> Self {
        HyperValue::Bool(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_string())
    }
}

impl<T: Into<HyperValue>> From<Option<T>> for HyperValue {
    fn from(v: Option<T>) -> Self {
        v.map_or(HyperValue::Null, Into::into)
    }
}

/// Typed key/value map of hyperparameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparams(BTreeMap<String, HyperValue>);

impl Hyperparams {
    pub fn new() -> Self {
        Hyperparams::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<HyperValue>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&HyperValue> {
        self.0.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &HyperValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn merged(&self, other: &Hyperparams) -> Hyperparams {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.set(k, v.clone());
        }
        out
    }

    fn bad(key: &str, want: &str, v: &HyperValue) -> Error {
        Error::Invalid(format!("hyperparameter {key:?} must be {want}, got {v}"))
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| Self::bad(key, "a number", v)),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(HyperValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(Self::bad(key, "a non-negative integer", v)),
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) if v.is_none() => Ok(None),
            Some(HyperValue::Int(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(Self::bad(key, "a non-negative integer or none", v)),
        }
    }

    pub fn text(&self, key: &str, default: &str) -> Result<String> {
        match self.get(key) {
            None | Some(HyperValue::Null) => Ok(default.to_string()),
            Some(HyperValue::Text(s)) => Ok(s.clone()),
            Some(v) => Err(Self::bad(key, "a string", v)),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(HyperValue::Bool(b)) => Ok(*b),
            Some(v) => Err(Self::bad(key, "a boolean", v)),
        }
    }

    /// Stable `key=value;...` rendering used in traces and reports.
    pub fn label(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl FromIterator<(String, HyperValue)> for Hyperparams {
    fn from_iter<I: IntoIterator<Item = (String, HyperValue)>>(iter: I) -> Self {
        Hyperparams(iter.into_iter().collect())
    }
}
