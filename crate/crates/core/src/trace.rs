//! Actions and traces: the observable alphabet of a system.
//!
//! An action is either the silent action `tau` or an output `m<v>` carrying
//! a value `v` over a named mechanism `m`. A trace is a finite sequence of
//! actions. Traces are totally ordered by length first and then
//! lexicographically (with `tau` before every output); every set of traces
//! in this crate is iterated in that order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Name of the reserved separator output used by parallel composition.
pub const SEPARATOR_NAME: &str = "sep";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Tau,
    Out { name: String, value: String },
}

impl Action {
    pub fn out(name: impl Into<String>, value: impl Into<String>) -> Self {
        Action::Out {
            name: name.into(),
            value: value.into(),
        }
    }

    /// The separator action `sep<sep>`.
    pub fn separator() -> Self {
        Action::out(SEPARATOR_NAME, SEPARATOR_NAME)
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, Action::Tau)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tau => f.write_str("tau"),
            Action::Out { name, value } => write!(f, "{name}:{value}"),
        }
    }
}

impl FromStr for Action {
    type Err = Error;

    /// Parses `tau` or `name:value`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "tau" {
            return Ok(Action::Tau);
        }
        match s.split_once(':') {
            Some((name, value)) if !name.is_empty() && !value.is_empty() => {
                Ok(Action::out(name, value))
            }
            _ => Err(Error::Syntax(format!(
                "expected `tau` or `name:value`, found `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Trace(Vec<Action>);

impl Trace {
    pub fn new(actions: Vec<Action>) -> Self {
        Trace(actions)
    }

    pub fn empty() -> Self {
        Trace(Vec::new())
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, action: &Action) -> bool {
        self.0.contains(action)
    }

    /// `self.other`
    pub fn concat(&self, other: &Trace) -> Trace {
        let mut actions = Vec::with_capacity(self.len() + other.len());
        actions.extend_from_slice(&self.0);
        actions.extend_from_slice(&other.0);
        Trace(actions)
    }

    pub fn prepend(&self, action: Action) -> Trace {
        let mut actions = Vec::with_capacity(self.len() + 1);
        actions.push(action);
        actions.extend_from_slice(&self.0);
        Trace(actions)
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.0
    }

    /// Parses the compact comma-separated form, e.g. `tau,m1:0`. The empty
    /// string (or `-`) is the empty trace.
    pub fn parse_compact(s: &str) -> Result<Trace, Error> {
        let s = s.trim();
        if s.is_empty() || s == "-" {
            return Ok(Trace::empty());
        }
        s.split(',').map(str::parse).collect::<Result<_, _>>().map(Trace)
    }

    /// Inverse of [`Trace::parse_compact`].
    pub fn to_compact(&self) -> String {
        if self.is_empty() {
            return "-".to_string();
        }
        self.0
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl From<Vec<Action>> for Trace {
    fn from(actions: Vec<Action>) -> Self {
        Trace(actions)
    }
}

impl FromIterator<Action> for Trace {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        Trace(iter.into_iter().collect())
    }
}

impl Ord for Trace {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Trace {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("∅");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match a {
                Action::Tau => f.write_str("τ")?,
                Action::Out { name, value } => write!(f, "{name}<{value}>")?,
            }
        }
        Ok(())
    }
}

/// Sorts traces canonically and removes duplicates.
pub fn canonical_set(traces: impl IntoIterator<Item = Trace>) -> Vec<Trace> {
    let mut v: Vec<Trace> = traces.into_iter().collect();
    v.sort();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Trace {
        Trace::parse_compact(s).unwrap()
    }

    #[test]
    fn order_is_length_then_lexicographic() {
        let mut v = vec![t("m:1"), t("tau,m:0"), t("m:0"), t(""), t("tau")];
        v.sort();
        assert_eq!(v, vec![t(""), t("tau"), t("m:0"), t("m:1"), t("tau,m:0")]);
    }

    #[test]
    fn tau_precedes_outputs_and_outputs_order_by_name_then_value() {
        assert!(Action::Tau < Action::out("a", "a"));
        assert!(Action::out("a", "9") < Action::out("b", "0"));
        assert!(Action::out("a", "0") < Action::out("a", "1"));
        assert_ne!(Action::Tau, Action::out("tau", "tau"));
    }

    #[test]
    fn compact_form_round_trips() {
        for s in ["-", "tau", "tau,m1:0", "m2:1,tau,tau"] {
            assert_eq!(t(s).to_compact(), s);
        }
        assert!(Trace::parse_compact("m1").is_err());
        assert!(Trace::parse_compact(":0").is_err());
    }

    #[test]
    fn display_uses_dotted_notation() {
        assert_eq!(t("tau,m:0").to_string(), "τ.m<0>");
        assert_eq!(Trace::empty().to_string(), "∅");
    }
}
