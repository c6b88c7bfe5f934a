//! Schedulers and scheduled composition.
//!
//! A scheduler over trace sets `Y1 .. Yn` assigns to every tuple
//! `(y1, .., yn)` a distribution over the interleavings of that tuple.
//! Rows are stored in mixed-radix order of the tuple, first component most
//! significant, matching the lexicographic order of composite secrets.

use std::collections::{BTreeMap, HashMap};

use crate::channel::{Channel, Secret};
use crate::error::{Error, Result};
use crate::interleave::{binomial, default_ceiling, interleave_n_with_ceiling, merges};
use crate::matrix::{Matrix, ValidationReport, Violation, STOCHASTIC_TOL};
use crate::observer::Equivalence;
use crate::par::Execution;
use crate::trace::{canonical_set, Action, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    /// Concatenation in component order.
    Ds,
    /// Uniform over the orderings of whole traces.
    Fs,
    /// Uniform choice among the components that still have actions.
    Fi,
    /// The last trace inserted as a block at a uniform position of the first.
    UniformInsertion,
}

impl SchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Ds => "ds",
            SchedulerKind::Fs => "fs",
            SchedulerKind::Fi => "fi",
            SchedulerKind::UniformInsertion => "uniform-insertion",
        }
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ds" => Ok(SchedulerKind::Ds),
            "fs" => Ok(SchedulerKind::Fs),
            "fi" => Ok(SchedulerKind::Fi),
            "uniform-insertion" => Ok(SchedulerKind::UniformInsertion),
            _ => Err(Error::Syntax(format!("unknown scheduler kind `{s}`"))),
        }
    }
}

type Row = Vec<(Trace, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Scheduler {
    domain: Vec<Vec<Trace>>,
    rows: Vec<Row>,
}

/// Multinomial count of merges of traces with the given lengths, saturating.
fn multinomial(lens: &[usize]) -> u128 {
    let mut total = 0usize;
    let mut acc: u128 = 1;
    for &l in lens {
        total += l;
        acc = acc.saturating_mul(binomial(total, l));
    }
    acc
}

fn tuples(domain: &[Vec<Trace>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for set in domain {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..set.len()).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

fn check_size(domain: &[Vec<Trace>], ceiling: u64) -> Result<()> {
    let mut required: u128 = 0;
    for t in tuples(domain) {
        let lens: Vec<usize> = t.iter().enumerate().map(|(k, &i)| domain[k][i].len()).collect();
        required = required.saturating_add(multinomial(&lens));
    }
    if required > ceiling as u128 {
        Err(Error::SizeGuard { required, ceiling })
    } else {
        Ok(())
    }
}

fn accumulate(items: impl IntoIterator<Item = (Trace, f64)>) -> Row {
    let mut m: BTreeMap<Trace, f64> = BTreeMap::new();
    for (t, p) in items {
        *m.entry(t).or_insert(0.0) += p;
    }
    m.into_iter().filter(|&(_, p)| p != 0.0).collect()
}

fn concat_all(parts: &[&Trace]) -> Trace {
    parts.iter().flat_map(|t| t.actions().iter().cloned()).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn ds_row(ys: &[&Trace]) -> Row {
    vec![(concat_all(ys), 1.0)]
}

fn fs_row(ys: &[&Trace]) -> Row {
    let perms = permutations(ys.len());
    let w = 1.0 / perms.len() as f64;
    accumulate(perms.iter().map(|p| {
        let order: Vec<&Trace> = p.iter().map(|&i| ys[i]).collect();
        (concat_all(&order), w)
    }))
}

fn fi_row(ys: &[&Trace]) -> Row {
    let seqs: Vec<&[Action]> = ys.iter().map(|t| t.actions()).collect();
    let mut memo = HashMap::new();
    let dist = fi_suffix(&seqs, vec![0; seqs.len()], &mut memo);
    accumulate(dist.into_iter().map(|(mut v, p)| {
        v.reverse();
        (Trace::new(v), p)
    }))
}

// Distribution over the (reversed) merges of the remaining suffixes.
fn fi_suffix(
    seqs: &[&[Action]],
    pos: Vec<usize>,
    memo: &mut HashMap<Vec<usize>, Vec<(Vec<Action>, f64)>>,
) -> Vec<(Vec<Action>, f64)> {
    if let Some(v) = memo.get(&pos) {
        return v.clone();
    }
    let live: Vec<usize> = (0..seqs.len()).filter(|&k| pos[k] < seqs[k].len()).collect();
    let out = if live.len() <= 1 {
        let rest: Vec<Action> = live
            .first()
            .map(|&k| seqs[k][pos[k]..].iter().rev().cloned().collect())
            .unwrap_or_default();
        vec![(rest, 1.0)]
    } else {
        let w = 1.0 / live.len() as f64;
        let mut acc: BTreeMap<Vec<Action>, f64> = BTreeMap::new();
        for &k in &live {
            let mut next = pos.clone();
            next[k] += 1;
            for (mut v, p) in fi_suffix(seqs, next, memo) {
                v.push(seqs[k][pos[k]].clone());
                *acc.entry(v).or_insert(0.0) += w * p;
            }
        }
        acc.into_iter().collect()
    };
    memo.insert(pos, out.clone());
    out
}

fn insertion_row(ys: &[&Trace]) -> Row {
    let (host, block) = (ys[0].actions(), ys[1]);
    let w = 1.0 / (host.len() + 1) as f64;
    accumulate((0..=host.len()).map(|k| {
        let pre = Trace::new(host[..k].to_vec());
        let post = Trace::new(host[k..].to_vec());
        (pre.concat(block).concat(&post), w)
    }))
}

impl Scheduler {
    /// Builds a named scheduler over `domain`.
    pub fn build(kind: SchedulerKind, domain: &[Vec<Trace>]) -> Result<Self> {
        Self::build_with_ceiling(kind, domain, default_ceiling())
    }

    pub fn build_with_ceiling(kind: SchedulerKind, domain: &[Vec<Trace>], ceiling: u64) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::DomainMismatch("scheduler needs at least one trace set".into()));
        }
        if kind == SchedulerKind::UniformInsertion && domain.len() != 2 {
            return Err(Error::DomainMismatch(
                "uniform insertion schedules exactly two trace sets".into(),
            ));
        }
        check_size(domain, ceiling)?;
        let rows = tuples(domain)
            .iter()
            .map(|t| {
                let ys: Vec<&Trace> = t.iter().enumerate().map(|(k, &i)| &domain[k][i]).collect();
                match kind {
                    SchedulerKind::Ds => ds_row(&ys),
                    SchedulerKind::Fs => fs_row(&ys),
                    SchedulerKind::Fi => fi_row(&ys),
                    SchedulerKind::UniformInsertion => insertion_row(&ys),
                }
            })
            .collect();
        Ok(Scheduler {
            domain: domain.to_vec(),
            rows,
        })
    }

    pub fn ds(y1: &[Trace], y2: &[Trace]) -> Result<Self> {
        Self::build(SchedulerKind::Ds, &[y1.to_vec(), y2.to_vec()])
    }

    pub fn fs(y1: &[Trace], y2: &[Trace]) -> Result<Self> {
        Self::build(SchedulerKind::Fs, &[y1.to_vec(), y2.to_vec()])
    }

    pub fn fi(y1: &[Trace], y2: &[Trace]) -> Result<Self> {
        Self::build(SchedulerKind::Fi, &[y1.to_vec(), y2.to_vec()])
    }

    /// Validated scheduler from explicit rows, one per domain tuple.
    pub fn explicit(domain: Vec<Vec<Trace>>, rows: Vec<Row>) -> Result<Self> {
        Self::explicit_with_tolerance(domain, rows, STOCHASTIC_TOL)
    }

    /// As [`Scheduler::explicit`] with a custom row-sum tolerance.
    pub fn explicit_with_tolerance(domain: Vec<Vec<Trace>>, rows: Vec<Row>, tol: f64) -> Result<Self> {
        let tups = tuples(&domain);
        if tups.len() != rows.len() {
            return Err(Error::DomainMismatch(format!(
                "domain has {} tuples, {} rows given",
                tups.len(),
                rows.len()
            )));
        }
        let mut clean = Vec::with_capacity(rows.len());
        for (r, (t, row)) in tups.iter().zip(rows).enumerate() {
            let ys: Vec<&Trace> = t.iter().enumerate().map(|(k, &i)| &domain[k][i]).collect();
            let feasible = merge_set(&ys);
            for (y, p) in &row {
                if !p.is_finite() || *p < 0.0 {
                    let mut report = ValidationReport::default();
                    report.push(Violation::Entry {
                        row: r,
                        col: 0,
                        value: *p,
                    });
                    return Err(Error::Validation(report));
                }
                if *p > 0.0 && feasible.binary_search(y).is_err() {
                    return Err(Error::InfeasibleSupport {
                        row: r,
                        trace: y.to_string(),
                        mass: *p,
                    });
                }
            }
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::RowSum { row: r, sum });
            }
            clean.push(accumulate(row));
        }
        Ok(Scheduler {
            domain,
            rows: clean,
        })
    }

    pub fn domain(&self) -> &[Vec<Trace>] {
        &self.domain
    }

    pub fn arity(&self) -> usize {
        self.domain.len()
    }

    /// Rows in tuple order; each row is sorted canonically.
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Row of the tuple with component indices `idx`.
    pub fn row_for(&self, idx: &[usize]) -> &Row {
        &self.rows[self.row_index(idx)]
    }

    pub fn row_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.domain)
            .fold(0, |acc, (&i, set)| acc * set.len() + i)
    }

    /// Component traces of row `r`.
    pub fn tuple(&self, mut r: usize) -> Vec<&Trace> {
        let mut out = vec![&self.domain[0][0]; self.domain.len()];
        for k in (0..self.domain.len()).rev() {
            let n = self.domain[k].len();
            out[k] = &self.domain[k][r % n];
            r /= n;
        }
        out
    }

    /// Every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1 && r[0].1 == 1.0)
    }

    /// The scheduler treats equivalent tuples, and only those, alike: rows
    /// of two tuples assign equal mass to every class iff the tuples are
    /// componentwise equivalent.
    pub fn is_sim_blind(&self, eq: &Equivalence) -> bool {
        let class_rows: Vec<BTreeMap<Trace, f64>> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = BTreeMap::new();
                for (y, p) in r {
                    *m.entry(eq.canonical(y)).or_insert(0.0) += p;
                }
                m
            })
            .collect();
        let keys: Vec<Vec<Trace>> = (0..self.rows.len())
            .map(|r| self.tuple(r).into_iter().map(|y| eq.canonical(y)).collect())
            .collect();
        for a in 0..self.rows.len() {
            for b in a + 1..self.rows.len() {
                let same_inputs = keys[a] == keys[b];
                let same_rows = dist_close(&class_rows[a], &class_rows[b], 1e-9);
                if same_inputs != same_rows {
                    return false;
                }
            }
        }
        true
    }
}

fn dist_close(a: &BTreeMap<Trace, f64>, b: &BTreeMap<Trace, f64>, tol: f64) -> bool {
    a.iter().all(|(k, &p)| (p - b.get(k).copied().unwrap_or(0.0)).abs() <= tol)
        && b.iter().all(|(k, &p)| a.contains_key(k) || p.abs() <= tol)
}

/// Interleavings of a tuple of traces, canonical.
pub(crate) fn merge_set(ys: &[&Trace]) -> Vec<Trace> {
    match ys {
        [] => vec![Trace::empty()],
        [y] => vec![(*y).clone()],
        [first, rest @ ..] => {
            let mut out = Vec::new();
            for m in merge_set(rest) {
                out.extend(merges(first.actions(), m.actions()));
            }
            canonical_set(out)
        }
    }
}

/// `K1 (x)_S K2`.
pub fn scheduled_compose(c1: &Channel, c2: &Channel, s: &Scheduler) -> Result<Channel> {
    scheduled_compose_n(&[c1, c2], s, Execution::default())
}

/// Composition of `n` channels under an `n`-ary scheduler:
/// `C[(x1..xn), y] = sum C1[x1,y1] .. Cn[xn,yn] S(y1..yn)[y]`.
pub fn scheduled_compose_n(channels: &[&Channel], s: &Scheduler, exec: Execution) -> Result<Channel> {
    if channels.len() != s.arity() {
        return Err(Error::DomainMismatch(format!(
            "{} channels for a scheduler over {} trace sets",
            channels.len(),
            s.arity()
        )));
    }
    // Channel output index -> scheduler domain index, per component.
    let mut to_dom: Vec<Vec<usize>> = Vec::new();
    for (k, c) in channels.iter().enumerate() {
        let dom = &s.domain[k];
        if dom.len() != c.outputs().len() {
            return Err(Error::DomainMismatch(format!(
                "component {k}: channel has {} traces, scheduler domain has {}",
                c.outputs().len(),
                dom.len()
            )));
        }
        let idx: HashMap<&Trace, usize> = dom.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let map = c
            .outputs()
            .iter()
            .map(|y| {
                idx.get(y).copied().ok_or_else(|| {
                    Error::DomainMismatch(format!("trace {y} of component {k} is outside the scheduler domain"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        to_dom.push(map);
    }

    let outputs = interleave_n_with_ceiling(&s.domain, u64::MAX)?;
    let col: HashMap<&Trace, usize> = outputs.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let srows: Vec<Vec<(usize, f64)>> = s
        .rows
        .iter()
        .map(|r| r.iter().map(|(y, p)| (col[y], *p)).collect())
        .collect();

    let secret_tuples = tuples_of(channels.iter().map(|c| c.secrets().len()).collect());
    let secrets: Vec<Secret> = secret_tuples
        .iter()
        .map(|t| {
            t.iter().enumerate().fold(Secret::new(Vec::new()), |acc, (k, &i)| {
                Secret::pair(&acc, &channels[k].secrets()[i])
            })
        })
        .collect();

    let rows = exec.map(&secret_tuples, |t| {
        // Joint output distribution of the tuple, then schedule it.
        let mut joint: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (k, &x) in t.iter().enumerate() {
            let n = s.domain[k].len();
            let mut next = Vec::with_capacity(joint.len() * channels[k].matrix().row(x).len());
            for &(r, p) in &joint {
                for &(j, q) in channels[k].matrix().row(x) {
                    next.push((r * n + to_dom[k][j], p * q));
                }
            }
            joint = next;
        }
        let mut acc = Vec::new();
        for (r, p) in joint {
            for &(c, q) in &srows[r] {
                acc.push((c, p * q));
            }
        }
        acc
    });
    Channel::new(secrets, outputs.clone(), Matrix::from_sparse_rows(outputs.len(), rows))
}

fn tuples_of(sizes: Vec<usize>) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for n in sizes {
        out = out
            .into_iter()
            .flat_map(|t: Vec<usize>| {
                (0..n).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

/// Scheduler attached to an internal node of a composition tree.
#[derive(Clone, Debug, PartialEq)]
pub enum SchedulerSpec {
    Kind(SchedulerKind),
    Explicit(Scheduler),
    /// Left open for LP synthesis; composing such a tree directly is an error.
    Minimize,
}

/// Channels at the leaves, schedulers at the internal nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum CompositionTree {
    Leaf(Channel),
    Node {
        scheduler: SchedulerSpec,
        children: Vec<CompositionTree>,
    },
}

impl CompositionTree {
    pub fn leaf(c: Channel) -> Self {
        CompositionTree::Leaf(c)
    }

    pub fn node(kind: SchedulerKind, children: Vec<CompositionTree>) -> Self {
        CompositionTree::Node {
            scheduler: SchedulerSpec::Kind(kind),
            children,
        }
    }

    /// Output traces of the composed channel; independent of the schedulers.
    pub fn output_set(&self) -> Result<Vec<Trace>> {
        match self {
            CompositionTree::Leaf(c) => Ok(canonical_set(c.outputs().iter().cloned())),
            CompositionTree::Node { children, .. } => {
                let sets = children.iter().map(|c| c.output_set()).collect::<Result<Vec<_>>>()?;
                interleave_n_with_ceiling(&sets, default_ceiling())
            }
        }
    }

    /// Composite secrets of the composed channel, in order.
    pub fn secrets(&self) -> Vec<Secret> {
        self.leaves().iter().fold(vec![Secret::new(Vec::new())], |acc, c| {
            acc.iter()
                .flat_map(|a| c.secrets().iter().map(move |s| Secret::pair(a, s)))
                .collect()
        })
    }

    pub fn leaves(&self) -> Vec<&Channel> {
        match self {
            CompositionTree::Leaf(c) => vec![c],
            CompositionTree::Node { children, .. } => children.iter().flat_map(|c| c.leaves()).collect(),
        }
    }
}

/// Folds the tree bottom-up; sibling subtrees are composed concurrently
/// under [`Execution::Parallel`].
pub fn compose_tree(tree: &CompositionTree) -> Result<Channel> {
    compose_tree_with(tree, Execution::default())
}

pub fn compose_tree_with(tree: &CompositionTree, exec: Execution) -> Result<Channel> {
    match tree {
        CompositionTree::Leaf(c) => Ok(c.clone()),
        CompositionTree::Node {
            scheduler,
            children,
        } => {
            let parts: Vec<Channel> = match children.as_slice() {
                [a, b] => {
                    let (ra, rb) = exec.join(|| compose_tree_with(a, exec), || compose_tree_with(b, exec));
                    vec![ra?, rb?]
                }
                _ => children
                    .iter()
                    .map(|c| compose_tree_with(c, exec))
                    .collect::<Result<_>>()?,
            };
            let refs: Vec<&Channel> = parts.iter().collect();
            let s = match scheduler {
                SchedulerSpec::Kind(k) => {
                    let domain: Vec<Vec<Trace>> = parts.iter().map(|c| c.outputs().to_vec()).collect();
                    Scheduler::build(*k, &domain)?
                }
                SchedulerSpec::Explicit(s) => s.clone(),
                SchedulerSpec::Minimize => {
                    return Err(Error::DomainMismatch(
                        "tree has a node marked for minimization".into(),
                    ))
                }
            };
            scheduled_compose_n(&refs, &s, exec)
        }
    }
}
