//! The JSON model document and its resolution into library values.
//!
//! Observers and scheduler kinds are resolved lazily against the channel
//! they are applied to, so one document can name `weak` once and use it on
//! several compositions.

use std::collections::BTreeMap;

use leakmix::channel::{product_prior, Channel, Prior, Secret};
use leakmix::observer::{
    det_observer, per_action_confusion_observer, tau_misplacement_observer, unit_observer,
    Confusion, Equivalence, Observer,
};
use leakmix::scheduler::{compose_tree, CompositionTree, Scheduler, SchedulerKind, SchedulerSpec};
use leakmix::trace::{Action, Trace};
use serde::{Deserialize, Serialize};

use crate::error::{within, CliError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawAction {
    Word(String),
    Out { out: OutDoc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutDoc {
    name: String,
    value: String,
}

/// `"tau"` or `{"out": {"name": .., "value": ..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAction", into = "RawAction")]
pub struct ActionDoc(pub Action);

impl TryFrom<RawAction> for ActionDoc {
    type Error = String;

    fn try_from(raw: RawAction) -> Result<Self, String> {
        match raw {
            RawAction::Word(w) if w == "tau" => Ok(ActionDoc(Action::Tau)),
            RawAction::Word(w) => Err(format!("unknown action `{w}`, expected \"tau\" or an out object")),
            RawAction::Out { out } => Ok(ActionDoc(Action::out(out.name, out.value))),
        }
    }
}

impl From<ActionDoc> for RawAction {
    fn from(a: ActionDoc) -> Self {
        match a.0 {
            Action::Tau => RawAction::Word("tau".into()),
            Action::Out { name, value } => RawAction::Out {
                out: OutDoc { name, value },
            },
        }
    }
}

/// A trace as an array of actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ActionDoc>", into = "Vec<ActionDoc>")]
pub struct TraceDoc(pub Trace);

impl From<Vec<ActionDoc>> for TraceDoc {
    fn from(v: Vec<ActionDoc>) -> Self {
        TraceDoc(v.into_iter().map(|a| a.0).collect())
    }
}

impl From<TraceDoc> for Vec<ActionDoc> {
    fn from(t: TraceDoc) -> Self {
        t.0.into_actions().into_iter().map(ActionDoc).collect()
    }
}

/// A secret: one name, or the components of a composite secret.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SecretDoc {
    One(String),
    Many(Vec<String>),
}

impl SecretDoc {
    pub fn to_secret(&self) -> Secret {
        match self {
            SecretDoc::One(s) => Secret::new(s.split(',').map(str::to_string).collect()),
            SecretDoc::Many(v) => Secret::new(v.clone()),
        }
    }

    pub fn from_secret(s: &Secret) -> Self {
        match s.components() {
            [one] => SecretDoc::One(one.clone()),
            many => SecretDoc::Many(many.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub secrets: Vec<SecretDoc>,
    pub traces: Vec<TraceDoc>,
    pub matrix: Vec<Vec<f64>>,
}

impl ChannelDoc {
    pub fn from_channel(c: &Channel) -> Self {
        ChannelDoc {
            secrets: c.secrets().iter().map(SecretDoc::from_secret).collect(),
            traces: c.outputs().iter().cloned().map(TraceDoc).collect(),
            matrix: c.matrix().to_dense(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PriorDoc {
    Explicit { secrets: Vec<SecretDoc>, mass: Vec<f64> },
    /// Product of named priors, in order.
    Product { product: Vec<String> },
    /// Uniform over the secrets of a named channel or tree.
    Uniform { uniform: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDoc {
    pub trace: TraceDoc,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SchedulerDoc {
    Ds,
    Fs,
    Fi,
    UniformInsertion,
    Explicit {
        domain: Vec<Vec<TraceDoc>>,
        rows: Vec<Vec<EntryDoc>>,
    },
    /// Left open for `min-scheduler`.
    Minimize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDoc {
    /// `null` drops the action.
    pub action: Option<ActionDoc>,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionDoc {
    pub action: ActionDoc,
    pub to: Vec<TargetDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObserverDoc {
    Perfect,
    Weak,
    NameBlind,
    Unit,
    TauMisplacement,
    /// Deterministic observer of the given classes; unlisted traces are
    /// seen exactly.
    Partition { classes: Vec<Vec<TraceDoc>> },
    PerAction { confusion: Vec<ConfusionDoc> },
    Explicit {
        outputs: Vec<TraceDoc>,
        views: Vec<TraceDoc>,
        matrix: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchedulerRef {
    Named(String),
    Inline(SchedulerDoc),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub scheduler: SchedulerRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Box<TreeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Box<TreeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<TreeDoc>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeDoc {
    Leaf { leaf: String },
    Node { node: NodeDoc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn items(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// A measurement to run when `measure` is given no channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestDoc {
    pub measure: OneOrMany,
    pub channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub channels: BTreeMap<String, ChannelDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub priors: BTreeMap<String, PriorDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedulers: BTreeMap<String, SchedulerDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observers: BTreeMap<String, ObserverDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trees: BTreeMap<String, TreeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requests: Vec<RequestDoc>,
}

pub fn parse_document(text: &str) -> Result<Document, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn traces(v: &[TraceDoc]) -> Vec<Trace> {
    v.iter().map(|t| t.0.clone()).collect()
}

impl Document {
    pub fn channel(&self, name: &str) -> Result<Channel, CliError> {
        if let Some(c) = self.channels.get(name) {
            let secrets = c.secrets.iter().map(SecretDoc::to_secret).collect();
            return Channel::from_dense(secrets, traces(&c.traces), &c.matrix)
                .map_err(within(format!("channel `{name}`")));
        }
        if self.trees.contains_key(name) {
            return Ok(compose_tree(&self.tree(name)?)?);
        }
        Err(CliError::Reference(format!("no channel or tree named `{name}`")))
    }

    pub fn tree(&self, name: &str) -> Result<CompositionTree, CliError> {
        match self.trees.get(name) {
            Some(t) => self.build_tree(t, &mut vec![name.to_string()]),
            None if self.channels.contains_key(name) => Ok(CompositionTree::Leaf(self.channel(name)?)),
            None => Err(CliError::Reference(format!("no tree named `{name}`"))),
        }
    }

    fn build_tree(&self, t: &TreeDoc, stack: &mut Vec<String>) -> Result<CompositionTree, CliError> {
        match t {
            TreeDoc::Leaf { leaf } => {
                if let Some(sub) = self.trees.get(leaf) {
                    if stack.contains(leaf) {
                        return Err(CliError::Reference(format!("tree `{leaf}` contains itself")));
                    }
                    stack.push(leaf.clone());
                    let out = self.build_tree(sub, stack);
                    stack.pop();
                    return out;
                }
                Ok(CompositionTree::Leaf(self.channel(leaf)?))
            }
            TreeDoc::Node { node } => {
                let kids: Vec<&TreeDoc> = match (&node.left, &node.right, &node.children) {
                    (Some(l), Some(r), None) => vec![l, r],
                    (None, None, Some(c)) if c.len() >= 2 => c.iter().collect(),
                    _ => {
                        return Err(CliError::Reference(
                            "a node needs `left` and `right`, or at least two `children`".into(),
                        ))
                    }
                };
                let children = kids
                    .into_iter()
                    .map(|k| self.build_tree(k, stack))
                    .collect::<Result<Vec<_>, _>>()?;
                let scheduler = match self.scheduler_doc(&node.scheduler)? {
                    SchedulerDoc::Minimize => SchedulerSpec::Minimize,
                    SchedulerDoc::Explicit { domain, rows } => {
                        SchedulerSpec::Explicit(explicit_scheduler(&domain, &rows)?)
                    }
                    doc => SchedulerSpec::Kind(kind_of(&doc).expect("kinds handled above")),
                };
                Ok(CompositionTree::Node { scheduler, children })
            }
        }
    }

    /// An inline scheduler, a named one, or a kind name.
    pub fn scheduler_doc(&self, r: &SchedulerRef) -> Result<SchedulerDoc, CliError> {
        match r {
            SchedulerRef::Inline(d) => Ok(d.clone()),
            SchedulerRef::Named(n) => match self.schedulers.get(n) {
                Some(d) => Ok(d.clone()),
                None => serde_json::from_value(serde_json::json!({ "kind": n }))
                    .map_err(|_| CliError::Reference(format!("no scheduler named `{n}`"))),
            },
        }
    }

    /// A named scheduler, or a kind (`ds`, `fs`, `fi`, `uniform-insertion`),
    /// built over `domain`.
    pub fn scheduler(&self, name: &str, domain: &[Vec<Trace>]) -> Result<Scheduler, CliError> {
        let doc = match self.schedulers.get(name) {
            Some(d) => d.clone(),
            None => {
                let kind: SchedulerKind = name
                    .parse()
                    .map_err(|_| CliError::Reference(format!("no scheduler named `{name}`")))?;
                return Ok(Scheduler::build(kind, domain)?);
            }
        };
        match doc {
            SchedulerDoc::Explicit { domain: d, rows } => {
                let s = explicit_scheduler(&d, &rows)?;
                if s.domain() != domain {
                    return Err(leakmix::Error::DomainMismatch(format!(
                        "scheduler `{name}` is defined on other trace sets"
                    ))
                    .into());
                }
                Ok(s)
            }
            SchedulerDoc::Minimize => Err(CliError::Reference(format!(
                "scheduler `{name}` is open; use min-scheduler"
            ))),
            other => Ok(Scheduler::build(kind_of(&other).expect("kind"), domain)?),
        }
    }

    pub fn prior(&self, name: &str) -> Result<Prior, CliError> {
        self.prior_nested(name, &mut Vec::new())
    }

    fn prior_nested(&self, name: &str, stack: &mut Vec<String>) -> Result<Prior, CliError> {
        if stack.iter().any(|s| s == name) {
            return Err(CliError::Reference(format!("prior `{name}` refers to itself")));
        }
        let doc = self
            .priors
            .get(name)
            .ok_or_else(|| CliError::Reference(format!("no prior named `{name}`")))?;
        stack.push(name.to_string());
        let out = match doc {
            PriorDoc::Explicit { secrets, mass } => Ok(Prior::new(
                secrets.iter().map(SecretDoc::to_secret).collect(),
                mass.clone(),
            )
            .map_err(within(format!("prior `{name}`")))?),
            PriorDoc::Product { product } => {
                let mut it = product.iter();
                let first = it
                    .next()
                    .ok_or_else(|| CliError::Reference(format!("prior `{name}` has an empty product")))?;
                let mut p = self.prior_nested(first, stack)?;
                for n in it {
                    p = product_prior(&p, &self.prior_nested(n, stack)?);
                }
                Ok(p)
            }
            PriorDoc::Uniform { uniform } => {
                let secrets = if self.trees.contains_key(uniform) {
                    self.tree(uniform)?.secrets()
                } else {
                    self.channel(uniform)?.secrets().to_vec()
                };
                Ok(Prior::uniform(secrets)?)
            }
        };
        stack.pop();
        out
    }

    /// A named observer, or an observer kind, over `outputs`.
    pub fn observer(&self, name: &str, outputs: &[Trace]) -> Result<Observer, CliError> {
        let doc = match self.observers.get(name) {
            Some(d) => d.clone(),
            None => serde_json::from_value(serde_json::json!({ "kind": name }))
                .map_err(|_| CliError::Reference(format!("no observer named `{name}`")))?,
        };
        build_observer(&doc, outputs).map_err(|e| match e {
            CliError::Core(e) => within(format!("observer `{name}`"))(e),
            other => other,
        })
    }
}

fn kind_of(doc: &SchedulerDoc) -> Option<SchedulerKind> {
    match doc {
        SchedulerDoc::Ds => Some(SchedulerKind::Ds),
        SchedulerDoc::Fs => Some(SchedulerKind::Fs),
        SchedulerDoc::Fi => Some(SchedulerKind::Fi),
        SchedulerDoc::UniformInsertion => Some(SchedulerKind::UniformInsertion),
        _ => None,
    }
}

fn explicit_scheduler(domain: &[Vec<TraceDoc>], rows: &[Vec<EntryDoc>]) -> Result<Scheduler, CliError> {
    let domain = domain.iter().map(|d| traces(d)).collect();
    let rows = rows
        .iter()
        .map(|r| r.iter().map(|e| (e.trace.0.clone(), e.p)).collect())
        .collect();
    Ok(Scheduler::explicit(domain, rows)?)
}

fn build_observer(doc: &ObserverDoc, outputs: &[Trace]) -> Result<Observer, CliError> {
    Ok(match doc {
        ObserverDoc::Perfect => det_observer(&Equivalence::Strong, outputs),
        ObserverDoc::Weak => det_observer(&Equivalence::Weak, outputs),
        ObserverDoc::NameBlind => det_observer(&Equivalence::NameBlind, outputs),
        ObserverDoc::Unit => unit_observer(outputs),
        ObserverDoc::TauMisplacement => tau_misplacement_observer(outputs),
        ObserverDoc::Partition { classes } => {
            let mut map = BTreeMap::new();
            for class in classes {
                if let Some(rep) = class.first() {
                    for t in class {
                        map.insert(t.0.clone(), rep.0.clone());
                    }
                }
            }
            det_observer(&Equivalence::Partition(map), outputs)
        }
        ObserverDoc::PerAction { confusion } => {
            let conf: Confusion = confusion
                .iter()
                .map(|c| {
                    let to = c.to.iter().map(|t| (t.action.clone().map(|a| a.0), t.p)).collect();
                    (c.action.0.clone(), to)
                })
                .collect();
            per_action_confusion_observer(outputs, &conf)?
        }
        ObserverDoc::Explicit {
            outputs: o,
            views,
            matrix,
        } => Observer::from_dense(traces(o), traces(views), matrix)?,
    })
}
