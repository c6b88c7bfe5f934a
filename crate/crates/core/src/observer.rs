//! Generalized observers: stochastic maps from output traces to views.
//!
//! Deterministic observers come from an equivalence on traces; each trace
//! is seen as its class. Probabilistic observers model imperfect
//! detection of individual actions.

use std::collections::{BTreeMap, HashMap};

use crate::channel::{cascade_matrix, Channel};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::matrix::{Matrix, ValidationReport, Violation};
use crate::par::Execution;
use crate::trace::{canonical_set, Action, Trace};

/// Output name that replaces every mechanism name under [`Equivalence::NameBlind`].
pub const BLIND_NAME: &str = "*";

/// An equivalence on traces, given by a canonical representative per class.
#[derive(Clone, Debug, PartialEq)]
pub enum Equivalence {
    /// Trace identity.
    Strong,
    /// Equality after deleting every `tau`.
    Weak,
    /// Equality after erasing mechanism names.
    NameBlind,
    /// A single class.
    Universal,
    /// Explicit classes: each listed trace maps to its representative;
    /// unlisted traces form singleton classes.
    Partition(BTreeMap<Trace, Trace>),
}

impl Equivalence {
    pub fn canonical(&self, y: &Trace) -> Trace {
        match self {
            Equivalence::Strong => y.clone(),
            Equivalence::Weak => y.actions().iter().filter(|a| !a.is_tau()).cloned().collect(),
            Equivalence::NameBlind => y
                .actions()
                .iter()
                .map(|a| match a {
                    Action::Tau => Action::Tau,
                    Action::Out { value, .. } => Action::out(BLIND_NAME, value.clone()),
                })
                .collect(),
            Equivalence::Universal => Trace::empty(),
            Equivalence::Partition(map) => map.get(y).cloned().unwrap_or_else(|| y.clone()),
        }
    }

    pub fn equivalent(&self, a: &Trace, b: &Trace) -> bool {
        self.canonical(a) == self.canonical(b)
    }

    /// Classes of `ys` keyed by representative, in canonical order.
    pub fn classes(&self, ys: &[Trace]) -> BTreeMap<Trace, Vec<Trace>> {
        let mut out: BTreeMap<Trace, Vec<Trace>> = BTreeMap::new();
        for y in ys {
            out.entry(self.canonical(y)).or_default().push(y.clone());
        }
        out
    }
}

/// Observer matrix `Obs[y, z]` over outputs `Y` and views `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observer {
    outputs: Vec<Trace>,
    views: Vec<Trace>,
    matrix: Matrix,
}

impl Observer {
    pub fn new(outputs: Vec<Trace>, views: Vec<Trace>, matrix: Matrix) -> Result<Self> {
        let mut report = ValidationReport::default();
        if matrix.nrows() != outputs.len() {
            report.push(Violation::Shape {
                expected: outputs.len(),
                found: matrix.nrows(),
                what: "observer rows".into(),
            });
        }
        if matrix.ncols() != views.len() {
            report.push(Violation::Shape {
                expected: views.len(),
                found: matrix.ncols(),
                what: "observer columns".into(),
            });
        }
        for (set, what) in [(&outputs, "trace"), (&views, "view")] {
            if canonical_set(set.iter().cloned()).len() != set.len() {
                report.push(Violation::Duplicate {
                    what: what.into(),
                    item: "in observer".into(),
                });
            }
        }
        report.extend(matrix.validate_stochastic());
        if report.is_valid() {
            Ok(Observer {
                outputs,
                views,
                matrix,
            })
        } else {
            Err(Error::Validation(report))
        }
    }

    pub fn from_dense(outputs: Vec<Trace>, views: Vec<Trace>, dense: &[Vec<f64>]) -> Result<Self> {
        let cols = views.len();
        if let Some((i, r)) = dense.iter().enumerate().find(|(_, r)| r.len() != cols) {
            let mut report = ValidationReport::default();
            report.push(Violation::Shape {
                expected: cols,
                found: r.len(),
                what: format!("length of observer row {i}"),
            });
            return Err(Error::Validation(report));
        }
        Observer::new(outputs, views, Matrix::from_dense(cols, dense))
    }

    /// Builds from one sparse distribution over views per output.
    fn from_rows(outputs: Vec<Trace>, rows: Vec<BTreeMap<Trace, f64>>) -> Result<Self> {
        let views = canonical_set(rows.iter().flat_map(|r| r.keys().cloned()));
        let col: HashMap<&Trace, usize> = views.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let sparse = rows
            .iter()
            .map(|r| r.iter().map(|(v, &p)| (col[v], p)).collect())
            .collect();
        let m = Matrix::from_sparse_rows(views.len(), sparse);
        Observer::new(outputs, views, m)
    }

    pub fn outputs(&self) -> &[Trace] {
        &self.outputs
    }

    pub fn views(&self) -> &[Trace] {
        &self.views
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Every entry is 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        self.matrix.rows().all(|r| r.iter().all(|&(_, v)| v == 1.0))
    }

    /// Rows reordered to follow `outputs`, which must be the same set.
    fn aligned(&self, outputs: &[Trace]) -> Result<Matrix> {
        if outputs == self.outputs.as_slice() {
            return Ok(self.matrix.clone());
        }
        if outputs.len() != self.outputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "observers cover {} and {} traces",
                self.outputs.len(),
                outputs.len()
            )));
        }
        let idx: HashMap<&Trace, usize> = self.outputs.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut rows = Vec::with_capacity(outputs.len());
        for y in outputs {
            let i = idx
                .get(y)
                .ok_or_else(|| Error::DimensionMismatch(format!("trace {y} is not observed")))?;
            rows.push(self.matrix.row(*i).to_vec());
        }
        Ok(Matrix::from_sparse_rows(self.matrix.ncols(), rows))
    }
}

/// The observer that sees the class of each trace.
pub fn det_observer(eq: &Equivalence, ys: &[Trace]) -> Observer {
    let rows = ys
        .iter()
        .map(|y| BTreeMap::from([(eq.canonical(y), 1.0)]))
        .collect();
    Observer::from_rows(ys.to_vec(), rows).expect("0/1 rows are stochastic")
}

pub fn perfect_observer(ys: &[Trace]) -> Observer {
    det_observer(&Equivalence::Strong, ys)
}

/// Same view, the empty trace, for every output.
pub fn unit_observer(ys: &[Trace]) -> Observer {
    det_observer(&Equivalence::Universal, ys)
}

/// Confusion of a single action: each outcome is an observed action, or
/// `None` when nothing is detected.
pub type Confusion = BTreeMap<Action, Vec<(Option<Action>, f64)>>;

/// Applies `conf` independently to every action of each trace; actions
/// without an entry are seen correctly.
pub fn per_action_confusion_observer(ys: &[Trace], conf: &Confusion) -> Result<Observer> {
    for (a, row) in conf {
        let sum: f64 = row.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > crate::matrix::STOCHASTIC_TOL || row.iter().any(|&(_, p)| p < 0.0) {
            let mut report = ValidationReport::default();
            report.push(Violation::Other(format!("confusion row for {a} sums to {sum}")));
            return Err(Error::Validation(report));
        }
    }
    let rows = ys
        .iter()
        .map(|y| {
            let mut dist: BTreeMap<Vec<Action>, f64> = BTreeMap::from([(Vec::new(), 1.0)]);
            for a in y.actions() {
                let identity = [(Some(a.clone()), 1.0)];
                let outcomes: &[(Option<Action>, f64)] = conf.get(a).map_or(&identity, Vec::as_slice);
                let mut next = BTreeMap::new();
                for (prefix, p) in &dist {
                    for (o, q) in outcomes {
                        if *q == 0.0 {
                            continue;
                        }
                        let mut v = prefix.clone();
                        if let Some(b) = o {
                            v.push(b.clone());
                        }
                        *next.entry(v).or_insert(0.0) += p * q;
                    }
                }
                dist = next;
            }
            dist.into_iter().map(|(v, p)| (Trace::new(v), p)).collect()
        })
        .collect();
    Observer::from_rows(ys.to_vec(), rows)
}

/// Probability that a lone `tau` is seen in its true position.
pub const TAU_CORRECT: f64 = 0.7;

/// A trace with exactly one `tau` is seen correctly with probability 0.7;
/// the rest is split evenly between moving that `tau` to each other slot
/// among the outputs and missing it. Other traces are seen correctly.
pub fn tau_misplacement_observer(ys: &[Trace]) -> Observer {
    let rows = ys
        .iter()
        .map(|y| {
            let mut row = BTreeMap::from([(y.clone(), 0.0)]);
            let taus = y.actions().iter().filter(|a| a.is_tau()).count();
            if taus != 1 {
                row.insert(y.clone(), 1.0);
                return row;
            }
            let outs: Vec<Action> = y.actions().iter().filter(|a| !a.is_tau()).cloned().collect();
            let n = outs.len();
            let share = (1.0 - TAU_CORRECT) / (n as f64 + 1.0);
            for slot in 0..=n {
                let mut v = outs.clone();
                v.insert(slot, Action::Tau);
                let z = Trace::new(v);
                let p = if z == *y { TAU_CORRECT } else { share };
                *row.entry(z).or_insert(0.0) += p;
            }
            *row.entry(Trace::new(outs)).or_insert(0.0) += share;
            row
        })
        .collect();
    Observer::from_rows(ys.to_vec(), rows).expect("misplacement rows are stochastic")
}

/// Groups traces whose observer rows agree entrywise within 1e-9.
pub fn induced_equivalence(o: &Observer) -> Equivalence {
    let mut reps: Vec<usize> = Vec::new();
    let mut map = BTreeMap::new();
    for (i, y) in o.outputs.iter().enumerate() {
        let rep = reps
            .iter()
            .copied()
            .find(|&r| rows_close(o.matrix.row(r), o.matrix.row(i), 1e-9));
        let r = rep.unwrap_or_else(|| {
            reps.push(i);
            i
        });
        map.insert(y.clone(), o.outputs[r].clone());
    }
    Equivalence::Partition(map)
}

fn rows_close(a: &[(usize, f64)], b: &[(usize, f64)], tol: f64) -> bool {
    let mut m: BTreeMap<usize, f64> = a.iter().copied().collect();
    for &(c, v) in b {
        *m.entry(c).or_insert(0.0) -= v;
    }
    m.values().all(|d| d.abs() <= tol)
}

/// Cascade `K . O`: what the observer sees of the channel's outputs.
pub fn observe(c: &Channel, o: &Observer) -> Result<Channel> {
    observe_with(c, o, Execution::default())
}

pub fn observe_with(c: &Channel, o: &Observer, exec: Execution) -> Result<Channel> {
    cascade_matrix(c, &o.outputs, &o.views, &o.matrix, exec)
}

/// A stochastic `K'` from the views of `o2` to those of `o1` with
/// `o1 = o2 . K'`, if one exists. The witness is returned as an observer
/// whose outputs are the views of `o2`.
pub fn refinement_witness(o1: &Observer, o2: &Observer) -> Result<Option<Observer>> {
    let a = o1.aligned(&o2.outputs)?;
    let (n2, n1) = (o2.views.len(), o1.views.len());
    let mut prog = LinearProgram::new();
    for i in 0..n2 {
        for j in 0..n1 {
            prog.add_var(format!("k_{i}_{j}"), 0.0);
        }
    }
    for i in 0..n2 {
        prog.add_constraint(
            format!("row_{i}"),
            (0..n1).map(|j| (i * n1 + j, 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    }
    for (y, r2) in o2.matrix.rows().enumerate() {
        for j in 0..n1 {
            let coeffs = r2.iter().map(|&(i, p)| (i * n1 + j, p)).collect();
            prog.add_constraint(format!("eq_{y}_{j}"), coeffs, Relation::Eq, a.get(y, j));
        }
    }
    let sol = lp::solve(&prog)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..n2)
        .map(|i| {
            let r: Vec<f64> = sol.values[i * n1..(i + 1) * n1].to_vec();
            let s: f64 = r.iter().sum();
            r.iter().enumerate().map(|(j, &v)| (j, v / s)).collect()
        })
        .collect();
    let k = Matrix::from_sparse_rows(n1, rows);
    let product = o2.matrix.mul(&k);
    for y in 0..o2.outputs.len() {
        if !rows_close(product.row(y), a.row(y), 1e-6) {
            return Ok(None);
        }
    }
    Ok(Some(Observer::new(o2.views.clone(), o1.views.clone(), k)?))
}
