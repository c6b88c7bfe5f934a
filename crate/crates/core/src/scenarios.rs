//! Builders for the two case studies: a five-voter mix network and a
//! square-and-multiply style loop leaking key bits through its timing.

use std::collections::BTreeMap;

use crate::channel::{deterministic_channel, diagonal_prior, product_prior, Channel, Prior, Secret};
use crate::error::{Error, Result};
use crate::measures::{min_entropy_leakage, mutual_information};
use crate::minimize::{min_capacity_scheduler_n, minimize_tree_slot, MinLeakage, SlotMinimum};
use crate::observer::{det_observer, observe, per_action_confusion_observer, Confusion, Equivalence, Observer};
use crate::scheduler::{compose_tree, scheduled_compose, CompositionTree, Scheduler, SchedulerKind, SchedulerSpec};
use crate::trace::{Action, Trace};

/// Output name of a ballot.
pub const VOTE_NAME: &str = "m";
pub const VOTERS: usize = 5;

/// Min-entropy leakage and mutual information of one configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leakage {
    pub mel: f64,
    pub mi: f64,
}

/// Measures `c` as seen by `o` (or unobserved) under `prior`.
pub fn leakage(prior: &Prior, c: &Channel, o: Option<&Observer>) -> Result<Leakage> {
    let seen = match o {
        Some(o) => observe(c, o)?,
        None => c.clone(),
    };
    Ok(Leakage {
        mel: min_entropy_leakage(prior, &seen)?,
        mi: mutual_information(prior, &seen)?,
    })
}

/// Which equivalence the observer of a case study uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObserverKind {
    Perfect,
    Weak,
    /// Per-action confusion of the side-channel study.
    Noisy,
}

impl std::str::FromStr for ObserverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(ObserverKind::Perfect),
            "weak" => Ok(ObserverKind::Weak),
            "noisy" | "fig4" => Ok(ObserverKind::Noisy),
            _ => Err(Error::Syntax(format!("unknown observer `{s}`"))),
        }
    }
}

/// Five voters wired through four mixing servers: `A` mixes voters 1 and
/// 2, `S1` mixes `A` with voter 3, `B` mixes voters 4 and 5, and `S2`
/// mixes `S1` with `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct VotingModel {
    /// Voters whose ballot is preceded by a silent step.
    pub tau_prefix: [bool; VOTERS],
    /// Probability of a vote for `1`, per voter.
    pub p_one: [f64; VOTERS],
    pub a: SchedulerSpec,
    pub s1: SchedulerSpec,
    pub b: SchedulerSpec,
    pub s2: SchedulerSpec,
}

impl VotingModel {
    /// Every server runs `kind`; uniform votes, no silent steps.
    pub fn uniform(kind: SchedulerKind) -> Self {
        VotingModel {
            tau_prefix: [false; VOTERS],
            p_one: [0.5; VOTERS],
            a: SchedulerSpec::Kind(kind),
            s1: SchedulerSpec::Kind(kind),
            b: SchedulerSpec::Kind(kind),
            s2: SchedulerSpec::Kind(kind),
        }
    }

    /// Fair sequential mixing at `A` and `B`, fair interleaving at `S2`
    /// and voter 3 inserted at a uniform position of `A`'s output at `S1`.
    pub fn mixed() -> Self {
        VotingModel {
            a: SchedulerSpec::Kind(SchedulerKind::Fs),
            s1: SchedulerSpec::Kind(SchedulerKind::UniformInsertion),
            b: SchedulerSpec::Kind(SchedulerKind::Fs),
            ..VotingModel::uniform(SchedulerKind::Fi)
        }
    }

    /// As [`VotingModel::mixed`] with `S1` left open for minimization.
    pub fn mixed_open() -> Self {
        VotingModel {
            s1: SchedulerSpec::Minimize,
            ..VotingModel::mixed()
        }
    }

    /// Voters 1 and 2 take a silent step before voting.
    pub fn with_tau_prefix(mut self, voters: &[usize]) -> Self {
        for &v in voters {
            self.tau_prefix[v] = true;
        }
        self
    }
}

/// Voter `i`: deterministically outputs its vote, optionally after `tau`.
pub fn voter_channel(tau_prefix: bool) -> Channel {
    let secrets = vec![Secret::single("0"), Secret::single("1")];
    deterministic_channel(secrets, |k| {
        let vote = Action::out(VOTE_NAME, k.to_string());
        if tau_prefix {
            Trace::new(vec![Action::Tau, vote])
        } else {
            Trace::new(vec![vote])
        }
    })
    .expect("voter channel is deterministic")
}

fn voter_prior(p_one: f64) -> Result<Prior> {
    Prior::new(vec![Secret::single("0"), Secret::single("1")], vec![1.0 - p_one, p_one])
}

pub fn voting_tree(model: &VotingModel) -> CompositionTree {
    let v = |i: usize| CompositionTree::Leaf(voter_channel(model.tau_prefix[i]));
    let node = |spec: &SchedulerSpec, children| CompositionTree::Node {
        scheduler: spec.clone(),
        children,
    };
    let ka = node(&model.a, vec![v(0), v(1)]);
    let ks1 = node(&model.s1, vec![ka, v(2)]);
    let kb = node(&model.b, vec![v(3), v(4)]);
    node(&model.s2, vec![ks1, kb])
}

/// Joint prior of independent voters, over the tree's secret order.
pub fn voting_prior(model: &VotingModel) -> Result<Prior> {
    let mut p = voter_prior(model.p_one[0])?;
    for &q in &model.p_one[1..] {
        p = product_prior(&p, &voter_prior(q)?);
    }
    Ok(p)
}

/// The composed mix-network channel and its prior.
pub fn build_voting(model: &VotingModel) -> Result<(Channel, Prior)> {
    Ok((compose_tree(&voting_tree(model))?, voting_prior(model)?))
}

pub fn voting_observer(kind: ObserverKind, outputs: &[Trace]) -> Result<Observer> {
    match kind {
        ObserverKind::Perfect => Ok(det_observer(&Equivalence::Strong, outputs)),
        ObserverKind::Weak => Ok(det_observer(&Equivalence::Weak, outputs)),
        ObserverKind::Noisy => Err(Error::DomainMismatch(
            "the voting study has no noisy observer".into(),
        )),
    }
}

/// Minimizes leakage over the open `S1` node of `model`.
pub fn minimize_voting_slot(model: &VotingModel, kind: ObserverKind) -> Result<SlotMinimum> {
    let tree = voting_tree(model);
    let o = voting_observer(kind, &tree.output_set()?)?;
    minimize_tree_slot(&tree, &voting_prior(model)?, &o)
}

/// One scheduler receiving all five ballots, minimizing min-capacity.
pub fn voting_single_scheduler_min_capacity(kind: ObserverKind) -> Result<MinLeakage> {
    let voters: Vec<Channel> = (0..VOTERS).map(|_| voter_channel(false)).collect();
    let refs: Vec<&Channel> = voters.iter().collect();
    let sets: Vec<Vec<Trace>> = voters.iter().map(|c| c.outputs().to_vec()).collect();
    let outputs = crate::interleave::interleave_n(&sets)?;
    let o = voting_observer(kind, &outputs)?;
    min_capacity_scheduler_n(&refs, &o)
}

/// Whether both instances of the loop share one key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sharing {
    Independent,
    Shared,
}

/// How one key bit shows up in a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceModel {
    /// `m<1>` for a set bit, `tau` for a clear one.
    PerBit,
    /// `tau`, followed by `m<1>` when the bit is set.
    TauThenOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideChannelModel {
    pub bits: usize,
    pub sharing: Sharing,
    pub scheduler: SchedulerKind,
    pub trace_model: TraceModel,
}

impl SideChannelModel {
    pub fn new(sharing: Sharing) -> Self {
        SideChannelModel {
            bits: 3,
            sharing,
            scheduler: SchedulerKind::Fi,
            trace_model: TraceModel::PerBit,
        }
    }
}

fn key_name(key: &[bool]) -> String {
    key.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// All keys of `bits` bits; bit 0 is the most significant in the order.
fn keys(bits: usize) -> Vec<Vec<bool>> {
    (0..1usize << bits)
        .map(|k| (0..bits).map(|i| k >> (bits - 1 - i) & 1 == 1).collect())
        .collect()
}

/// A single run of the loop over a key.
pub fn loop_channel(bits: usize, model: TraceModel) -> Result<Channel> {
    if bits == 0 {
        return Err(Error::DomainMismatch("keys need at least one bit".into()));
    }
    let by_name: BTreeMap<String, Vec<bool>> = keys(bits).into_iter().map(|k| (key_name(&k), k)).collect();
    let secrets = keys(bits).iter().map(|k| Secret::single(key_name(k))).collect();
    let out = Action::out(VOTE_NAME, "1");
    deterministic_channel(secrets, |s| {
        let key = &by_name[&s.to_string()];
        key.iter()
            .flat_map(|&bit| match (model, bit) {
                (TraceModel::PerBit, true) => vec![out.clone()],
                (TraceModel::PerBit, false) => vec![Action::Tau],
                (TraceModel::TauThenOutput, true) => vec![Action::Tau, out.clone()],
                (TraceModel::TauThenOutput, false) => vec![Action::Tau],
            })
            .collect()
    })
}

/// Two scheduled runs of the loop and the prior over their key pair.
pub fn build_sidechannel(model: &SideChannelModel) -> Result<(Channel, Prior)> {
    let k = loop_channel(model.bits, model.trace_model)?;
    let s = Scheduler::build(model.scheduler, &[k.outputs().to_vec(), k.outputs().to_vec()])?;
    let c = scheduled_compose(&k, &k, &s)?;
    let single = Prior::uniform(k.secrets().to_vec())?;
    let prior = match model.sharing {
        Sharing::Independent => product_prior(&single, &single),
        Sharing::Shared => diagonal_prior(&single),
    };
    Ok((c, prior))
}

/// Confusion of the noisy timing observer: a silent step is seen as is
/// with 0.8, as an output with 0.1 and missed with 0.1; an output is seen
/// as is with 0.9, as silent with 0.05 and missed with 0.05.
pub fn noisy_confusion() -> Confusion {
    let m1 = Action::out(VOTE_NAME, "1");
    BTreeMap::from([
        (
            Action::Tau,
            vec![(Some(Action::Tau), 0.8), (Some(m1.clone()), 0.1), (None, 0.1)],
        ),
        (
            m1.clone(),
            vec![(Some(Action::Tau), 0.05), (Some(m1), 0.9), (None, 0.05)],
        ),
    ])
}

pub fn sidechannel_observer(kind: ObserverKind, outputs: &[Trace]) -> Result<Observer> {
    match kind {
        ObserverKind::Perfect => Ok(det_observer(&Equivalence::Strong, outputs)),
        ObserverKind::Weak => Ok(det_observer(&Equivalence::Weak, outputs)),
        ObserverKind::Noisy => per_action_confusion_observer(outputs, &noisy_confusion()),
    }
}
