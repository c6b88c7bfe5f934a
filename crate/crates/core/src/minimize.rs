//! Synthesis of schedulers that minimize observed min-entropy leakage.
//!
//! For a fixed prior and observer, the posterior vulnerability of a
//! scheduled composition is `sum_z max_x sum p(x, y..) S(y..)[y] Obs[y, z]`,
//! which is linear in the scheduler once each `max` is bounded by a fresh
//! variable `v_z`. Minimizing `sum v_z` subject to those bounds and to the
//! scheduler rows summing to one is a linear program.
//!
//! The same program handles a single open node inside a composition tree:
//! the rest of the tree is linear in the open node's output, so it folds
//! into the observer side of the bounds.

use std::collections::{BTreeMap, HashMap};

use crate::channel::{Channel, Prior, Secret};
use crate::error::{Error, Result};
use crate::interleave::{default_ceiling, interleave_n_with_ceiling};
use crate::lp::{self, LinearProgram, LpSolution, LpStatus, Relation, FEASIBILITY_TOL};
use crate::matrix::Matrix;
use crate::measures::{min_entropy_leakage, prior_vulnerability};
use crate::observer::{observe_with, Observer};
use crate::par::Execution;
use crate::scheduler::{
    compose_tree_with, merge_set, CompositionTree, Scheduler, SchedulerSpec,
};
use crate::trace::{canonical_set, Trace};

/// A scheduler variable `S(tuple)[trace]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulerVar {
    pub row: usize,
    pub trace: Trace,
}

/// The linear program together with the meaning of its variables.
#[derive(Clone, Debug)]
pub struct MinLeakageProgram {
    pub lp: LinearProgram,
    /// Scheduler domain, one trace set per scheduled component.
    pub domain: Vec<Vec<Trace>>,
    /// Variables `0..s_vars.len()` are scheduler entries.
    pub s_vars: Vec<SchedulerVar>,
    /// Views indexing the `v_z` variables that follow.
    pub views: Vec<Trace>,
    pub prior_vulnerability: f64,
}

impl MinLeakageProgram {
    pub fn num_inequalities(&self) -> usize {
        self.lp.count(Relation::Le)
    }

    pub fn num_equalities(&self) -> usize {
        self.lp.count(Relation::Eq)
    }
}

/// Result of a minimization.
#[derive(Clone, Debug)]
pub struct MinLeakage {
    pub scheduler: Scheduler,
    /// Minimal observed min-entropy leakage, in bits.
    pub mel: f64,
    /// Optimal `sum v_z`, the minimal posterior vulnerability.
    pub objective: f64,
    pub iterations: usize,
}

/// How the composed channel reaches the observer, viewed from the open
/// node: final secret `(pre, under, post)` sees `outer` row
/// `(pre * |Y'| + j) * n_post + post` when the open node emits `Y'[j]`.
struct Outer {
    n_pre: usize,
    n_post: usize,
    ys: Vec<Trace>,
    views: Vec<Trace>,
    matrix: Matrix,
}

fn product_secrets(channels: &[&Channel]) -> Vec<Secret> {
    channels.iter().fold(vec![Secret::new(Vec::new())], |acc, c| {
        acc.iter()
            .flat_map(|a| c.secrets().iter().map(move |s| Secret::pair(a, s)))
            .collect()
    })
}

fn plain_outer(channels: &[&Channel], o: &Observer) -> Result<Outer> {
    let sets: Vec<Vec<Trace>> = channels.iter().map(|c| c.outputs().to_vec()).collect();
    let ys = interleave_n_with_ceiling(&sets, default_ceiling())?;
    if canonical_set(o.outputs().iter().cloned()) != ys {
        return Err(Error::DomainMismatch(
            "observer outputs differ from the interleavings of the channel outputs".into(),
        ));
    }
    let idx: HashMap<&Trace, usize> = o.outputs().iter().enumerate().map(|(i, t)| (t, i)).collect();
    let rows = ys.iter().map(|y| o.matrix().row(idx[y]).to_vec()).collect();
    Ok(Outer {
        n_pre: 1,
        n_post: 1,
        matrix: Matrix::from_sparse_rows(o.views().len(), rows),
        views: o.views().to_vec(),
        ys,
    })
}

fn build(pi: &[f64], channels: &[&Channel], outer: &Outer, exec: Execution) -> Result<MinLeakageProgram> {
    let domain: Vec<Vec<Trace>> = channels.iter().map(|c| c.outputs().to_vec()).collect();
    let sizes: Vec<usize> = domain.iter().map(Vec::len).collect();
    let n_rows: usize = sizes.iter().product();
    let n_under: usize = channels.iter().map(|c| c.secrets().len()).product();
    let n_secrets = outer.n_pre * n_under * outer.n_post;
    if pi.len() != n_secrets {
        return Err(Error::Misalignment(format!(
            "prior has {} masses, composition has {n_secrets} secrets",
            pi.len()
        )));
    }

    let ycol: HashMap<&Trace, usize> = outer.ys.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut lp = LinearProgram::new();
    let mut s_vars = Vec::new();
    // Per row: (variable, position of its trace in Y').
    let mut row_vars: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let mut rem = r;
        let mut tuple = vec![&domain[0][0]; domain.len()];
        for k in (0..domain.len()).rev() {
            tuple[k] = &domain[k][rem % sizes[k]];
            rem /= sizes[k];
        }
        let mut vars = Vec::new();
        for y in merge_set(&tuple) {
            let v = lp.add_var(format!("s_{r}_{}", s_vars.len()), 0.0);
            vars.push((v, ycol[&y]));
            s_vars.push(SchedulerVar { row: r, trace: y });
        }
        row_vars.push(vars);
    }
    let v0 = lp.num_vars();
    for z in 0..outer.views.len() {
        lp.add_var(format!("v_{z}"), 1.0);
    }

    let ny = outer.ys.len();
    let constraints = exec.map_range(n_secrets, |x| {
        let post = x % outer.n_post;
        let under = (x / outer.n_post) % n_under;
        let pre = x / (outer.n_post * n_under);
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        if pi[x] > 0.0 {
            // Joint distribution of the scheduled components' outputs.
            let mut idx = vec![0; channels.len()];
            let mut u = under;
            for k in (0..channels.len()).rev() {
                let n = channels[k].secrets().len();
                idx[k] = u % n;
                u /= n;
            }
            let mut joint: Vec<(usize, f64)> = vec![(0, pi[x])];
            for (k, c) in channels.iter().enumerate() {
                let mut next = Vec::new();
                for &(r, p) in &joint {
                    for &(j, q) in c.matrix().row(idx[k]) {
                        next.push((r * sizes[k] + j, p * q));
                    }
                }
                joint = next;
            }
            for (r, p) in joint {
                for &(var, j) in &row_vars[r] {
                    for &(z, w) in outer.matrix.row((pre * ny + j) * outer.n_post + post) {
                        *acc.entry((z, var)).or_insert(0.0) += p * w;
                    }
                }
            }
        }
        let mut per_z: Vec<Vec<(usize, f64)>> = vec![Vec::new(); outer.views.len()];
        for ((z, var), c) in acc {
            per_z[z].push((var, c));
        }
        per_z
    });
    for (x, per_z) in constraints.into_iter().enumerate() {
        for (z, mut coeffs) in per_z.into_iter().enumerate() {
            coeffs.push((v0 + z, -1.0));
            lp.add_constraint(format!("bound_{x}_{z}"), coeffs, Relation::Le, 0.0);
        }
    }
    for (r, vars) in row_vars.iter().enumerate() {
        lp.add_constraint(
            format!("row_{r}"),
            vars.iter().map(|&(v, _)| (v, 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    }
    Ok(MinLeakageProgram {
        lp,
        domain,
        s_vars,
        views: outer.views.clone(),
        prior_vulnerability: prior_vulnerability(pi),
    })
}

/// Builds the program for two channels. `prior` ranges over `X1 x X2`.
pub fn build_min_leakage_lp(prior: &Prior, c1: &Channel, c2: &Channel, o: &Observer) -> Result<MinLeakageProgram> {
    build_min_leakage_lp_n(prior, &[c1, c2], o)
}

/// Builds the program for one scheduler over `n` channels.
pub fn build_min_leakage_lp_n(prior: &Prior, channels: &[&Channel], o: &Observer) -> Result<MinLeakageProgram> {
    let pi = prior.aligned_to(&product_secrets(channels))?;
    build(&pi, channels, &plain_outer(channels, o)?, Execution::default())
}

/// Solves the program, treating anything but an optimum as an error.
pub fn solve_lp(prog: &MinLeakageProgram) -> Result<LpSolution> {
    solve_lp_with(prog, Execution::default())
}

pub fn solve_lp_with(prog: &MinLeakageProgram, exec: Execution) -> Result<LpSolution> {
    let sol = lp::solve_with(&prog.lp, exec, lp::DEFAULT_MAX_ITERATIONS)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::Solver(lp::LpError::Infeasible)),
        LpStatus::Unbounded => Err(Error::Solver(lp::LpError::Unbounded)),
    }
}

/// Reads the scheduler and leakage off an optimal solution.
pub fn extract(prog: &MinLeakageProgram, sol: &LpSolution) -> Result<MinLeakage> {
    let violation = prog.lp.max_violation(&sol.values);
    if violation > FEASIBILITY_TOL {
        return Err(Error::Internal(format!("solution violates a constraint by {violation:e}")));
    }
    let n_rows: usize = prog.domain.iter().map(Vec::len).product();
    let mut rows: Vec<Vec<(Trace, f64)>> = vec![Vec::new(); n_rows];
    for (k, v) in prog.s_vars.iter().enumerate() {
        if sol.values[k] > 0.0 {
            rows[v.row].push((v.trace.clone(), sol.values[k]));
        }
    }
    let scheduler = Scheduler::explicit_with_tolerance(prog.domain.clone(), rows, FEASIBILITY_TOL)?;
    if sol.objective <= 0.0 {
        return Err(Error::Internal("optimal posterior vulnerability is not positive".into()));
    }
    let mel = (sol.objective.log2() - prog.prior_vulnerability.log2()).max(0.0);
    Ok(MinLeakage {
        scheduler,
        mel,
        objective: sol.objective,
        iterations: sol.iterations,
    })
}

/// Scheduler for `c1, c2` minimizing min-entropy leakage observed by `o`.
pub fn min_leakage_scheduler(prior: &Prior, c1: &Channel, c2: &Channel, o: &Observer) -> Result<MinLeakage> {
    min_leakage_scheduler_n(prior, &[c1, c2], o)
}

pub fn min_leakage_scheduler_n(prior: &Prior, channels: &[&Channel], o: &Observer) -> Result<MinLeakage> {
    let prog = build_min_leakage_lp_n(prior, channels, o)?;
    extract(&prog, &solve_lp(&prog)?)
}

/// Min-capacity is min-entropy leakage at the uniform prior, so this
/// minimizes the observed min-capacity.
pub fn min_capacity_scheduler(c1: &Channel, c2: &Channel, o: &Observer) -> Result<MinLeakage> {
    min_capacity_scheduler_n(&[c1, c2], o)
}

pub fn min_capacity_scheduler_n(channels: &[&Channel], o: &Observer) -> Result<MinLeakage> {
    let prior = Prior::uniform(product_secrets(channels))?;
    min_leakage_scheduler_n(&prior, channels, o)
}

fn count_open(tree: &CompositionTree) -> usize {
    match tree {
        CompositionTree::Leaf(_) => 0,
        CompositionTree::Node {
            scheduler,
            children,
        } => usize::from(*scheduler == SchedulerSpec::Minimize) + children.iter().map(count_open).sum::<usize>(),
    }
}

/// Leaves before the open node, the open node's children and the leaves
/// after it, in tree order.
fn split_at_open(tree: &CompositionTree) -> Option<(Vec<&Channel>, &[CompositionTree], Vec<&Channel>)> {
    match tree {
        CompositionTree::Leaf(_) => None,
        CompositionTree::Node {
            scheduler: SchedulerSpec::Minimize,
            children,
        } => Some((Vec::new(), children, Vec::new())),
        CompositionTree::Node { children, .. } => {
            for (i, c) in children.iter().enumerate() {
                if let Some((mut pre, open, mut post)) = split_at_open(c) {
                    let before: Vec<&Channel> = children[..i].iter().flat_map(|c| c.leaves()).collect();
                    let after: Vec<&Channel> = children[i + 1..].iter().flat_map(|c| c.leaves()).collect();
                    pre.splice(0..0, before);
                    post.extend(after);
                    return Some((pre, open, post));
                }
            }
            None
        }
    }
}

fn replace_open(tree: &CompositionTree, with: &CompositionTree) -> CompositionTree {
    match tree {
        CompositionTree::Node {
            scheduler: SchedulerSpec::Minimize,
            ..
        } => with.clone(),
        CompositionTree::Node {
            scheduler,
            children,
        } => CompositionTree::Node {
            scheduler: scheduler.clone(),
            children: children.iter().map(|c| replace_open(c, with)).collect(),
        },
        leaf => leaf.clone(),
    }
}

fn fill_open(tree: &CompositionTree, s: &Scheduler) -> CompositionTree {
    match tree {
        CompositionTree::Node {
            scheduler: SchedulerSpec::Minimize,
            children,
        } => CompositionTree::Node {
            scheduler: SchedulerSpec::Explicit(s.clone()),
            children: children.clone(),
        },
        CompositionTree::Node {
            scheduler,
            children,
        } => CompositionTree::Node {
            scheduler: scheduler.clone(),
            children: children.iter().map(|c| fill_open(c, s)).collect(),
        },
        leaf => leaf.clone(),
    }
}

/// Program for the single node of `tree` marked [`SchedulerSpec::Minimize`],
/// with every other scheduler fixed. `o` observes the composed outputs.
pub fn build_tree_slot_lp(tree: &CompositionTree, prior: &Prior, o: &Observer) -> Result<MinLeakageProgram> {
    build_tree_slot_lp_with(tree, prior, o, Execution::default())
}

pub fn build_tree_slot_lp_with(
    tree: &CompositionTree,
    prior: &Prior,
    o: &Observer,
    exec: Execution,
) -> Result<MinLeakageProgram> {
    if count_open(tree) != 1 {
        return Err(Error::DomainMismatch("tree must have exactly one node marked for minimization".into()));
    }
    let (pre, open, post) = split_at_open(tree).expect("one open node");
    let children: Vec<Channel> = open
        .iter()
        .map(|c| compose_tree_with(c, exec))
        .collect::<Result<_>>()?;
    let sets: Vec<Vec<Trace>> = children.iter().map(|c| c.outputs().to_vec()).collect();
    let ys = interleave_n_with_ceiling(&sets, default_ceiling())?;

    // The open node's output stands in as a secret of an identity leaf.
    let secrets = ys.iter().map(|y| Secret::single(y.to_compact())).collect();
    let placeholder = Channel::new(secrets, ys.clone(), Matrix::identity(ys.len()))?;
    let outer_tree = replace_open(tree, &CompositionTree::Leaf(placeholder));
    let w = compose_tree_with(&outer_tree, exec)?;
    let wo = observe_with(&w, o, exec)?;

    let refs: Vec<&Channel> = children.iter().collect();
    let outer = Outer {
        n_pre: pre.iter().map(|c| c.secrets().len()).product(),
        n_post: post.iter().map(|c| c.secrets().len()).product(),
        ys,
        views: wo.outputs().to_vec(),
        matrix: wo.matrix().clone(),
    };
    let pi = prior.aligned_to(&tree.secrets())?;
    build(&pi, &refs, &outer, exec)
}

/// Result of minimizing an open node, with the tree it completes.
#[derive(Clone, Debug)]
pub struct SlotMinimum {
    pub result: MinLeakage,
    pub tree: CompositionTree,
    pub channel: Channel,
}

/// Minimizes observed min-entropy leakage over the open node of `tree`.
pub fn minimize_tree_slot(tree: &CompositionTree, prior: &Prior, o: &Observer) -> Result<SlotMinimum> {
    let prog = build_tree_slot_lp(tree, prior, o)?;
    let result = extract(&prog, &solve_lp(&prog)?)?;
    let filled = fill_open(tree, &result.scheduler);
    let channel = compose_tree_with(&filled, Execution::default())?;
    let check = min_entropy_leakage(prior, &observe_with(&channel, o, Execution::default())?)?;
    if (check - result.mel).abs() > 1e-6 {
        return Err(Error::Internal(format!(
            "minimized leakage {} does not match recomposition {check}",
            result.mel
        )));
    }
    Ok(SlotMinimum {
        result,
        tree: filled,
        channel,
    })
}
