//! Channels, priors and the scheduler-free compositions.
//!
//! A channel maps each secret to a probability distribution over output
//! traces. Composite secrets are flat tuples, so the secret set of a
//! composition of `n` channels is the lexicographically ordered product of
//! the leaf secret sets.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, ValidationReport, Violation, STOCHASTIC_TOL};
use crate::par::Execution;
use crate::trace::{canonical_set, Action, Trace};

/// A secret value; composite secrets concatenate their components.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Secret(Vec<String>);

impl Secret {
    pub fn new(components: Vec<String>) -> Self {
        Secret(components)
    }

    pub fn single(s: impl Into<String>) -> Self {
        Secret(vec![s.into()])
    }

    pub fn components(&self) -> &[String] {
        &self.0
    }

    pub fn pair(a: &Secret, b: &Secret) -> Secret {
        let mut c = a.0.clone();
        c.extend_from_slice(&b.0);
        Secret(c)
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(","))
    }
}

/// Probability distribution over an ordered support.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist<T> {
    support: Vec<T>,
    mass: Vec<f64>,
}

impl<T: fmt::Display> ProbDist<T> {
    pub fn new(support: Vec<T>, mass: Vec<f64>) -> Result<Self> {
        let mut report = ValidationReport::default();
        if support.len() != mass.len() {
            report.push(Violation::Shape {
                expected: support.len(),
                found: mass.len(),
                what: "number of masses".into(),
            });
        }
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || !(0.0..=1.0 + STOCHASTIC_TOL).contains(&m) {
                report.push(Violation::Entry {
                    row: 0,
                    col: i,
                    value: m,
                });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            report.push(Violation::RowSum { row: 0, sum });
        }
        if report.is_valid() {
            Ok(ProbDist { support, mass })
        } else {
            Err(Error::Validation(report))
        }
    }
}

impl<T> ProbDist<T> {
    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.support.iter().zip(self.mass.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Distribution over secrets.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior(ProbDist<Secret>);

impl Prior {
    pub fn new(secrets: Vec<Secret>, mass: Vec<f64>) -> Result<Self> {
        check_unique(&secrets, "secret")?;
        Ok(Prior(ProbDist::new(secrets, mass)?))
    }

    pub fn uniform(secrets: Vec<Secret>) -> Result<Self> {
        let n = secrets.len();
        Prior::new(secrets, vec![1.0 / n as f64; n])
    }

    pub fn secrets(&self) -> &[Secret] {
        self.0.support()
    }

    pub fn mass(&self) -> &[f64] {
        self.0.mass()
    }

    /// Masses reordered to follow `secrets`; errors unless both secret sets
    /// coincide.
    pub fn aligned_to(&self, secrets: &[Secret]) -> Result<Vec<f64>> {
        if self.secrets() == secrets {
            return Ok(self.mass().to_vec());
        }
        if self.secrets().len() != secrets.len() {
            return Err(Error::Misalignment(format!(
                "prior has {} secrets, channel has {}",
                self.secrets().len(),
                secrets.len()
            )));
        }
        let index: HashMap<&Secret, usize> =
            self.secrets().iter().enumerate().map(|(i, s)| (s, i)).collect();
        secrets
            .iter()
            .map(|s| {
                index
                    .get(s)
                    .map(|&i| self.mass()[i])
                    .ok_or_else(|| Error::Misalignment(format!("secret {s} has no prior mass")))
            })
            .collect()
    }
}

/// Product prior of independent secrets, over `X1 x X2` in lexicographic order.
pub fn product_prior(p1: &Prior, p2: &Prior) -> Prior {
    let mut secrets = Vec::with_capacity(p1.secrets().len() * p2.secrets().len());
    let mut mass = Vec::with_capacity(secrets.capacity());
    for (s1, m1) in p1.0.iter() {
        for (s2, m2) in p2.0.iter() {
            secrets.push(Secret::pair(s1, s2));
            mass.push(m1 * m2);
        }
    }
    Prior(ProbDist {
        support: secrets,
        mass,
    })
}

/// Prior over `X x X` where both components share one secret drawn from `p`.
pub fn diagonal_prior(p: &Prior) -> Prior {
    let n = p.secrets().len();
    let mut secrets = Vec::with_capacity(n * n);
    let mut mass = Vec::with_capacity(n * n);
    for (i, s1) in p.secrets().iter().enumerate() {
        for (j, s2) in p.secrets().iter().enumerate() {
            secrets.push(Secret::pair(s1, s2));
            mass.push(if i == j { p.mass()[i] } else { 0.0 });
        }
    }
    Prior(ProbDist {
        support: secrets,
        mass,
    })
}

/// An information-theoretic channel from secrets to output traces.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    secrets: Vec<Secret>,
    outputs: Vec<Trace>,
    matrix: Matrix,
}

impl Channel {
    pub fn new(secrets: Vec<Secret>, outputs: Vec<Trace>, matrix: Matrix) -> Result<Self> {
        let report = validate_channel(&secrets, &outputs, &matrix);
        if !report.is_valid() {
            return Err(Error::Validation(report));
        }
        Ok(Channel {
            secrets,
            outputs,
            matrix,
        })
    }

    pub fn from_dense(secrets: Vec<Secret>, outputs: Vec<Trace>, dense: &[Vec<f64>]) -> Result<Self> {
        let mut report = ValidationReport::default();
        for (i, r) in dense.iter().enumerate() {
            if r.len() != outputs.len() {
                report.push(Violation::Shape {
                    expected: outputs.len(),
                    found: r.len(),
                    what: format!("length of row {i}"),
                });
            }
        }
        if !report.is_valid() {
            return Err(Error::Validation(report));
        }
        let cols = outputs.len();
        Channel::new(secrets, outputs, Matrix::from_dense(cols, dense))
    }

    pub fn secrets(&self) -> &[Secret] {
        &self.secrets
    }

    pub fn outputs(&self) -> &[Trace] {
        &self.outputs
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `p(y|x)` by index.
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.matrix.get(x, y)
    }

    pub fn output_index(&self) -> HashMap<&Trace, usize> {
        self.outputs.iter().enumerate().map(|(i, t)| (t, i)).collect()
    }

    /// Every action occurring in some output trace.
    pub fn alphabet(&self) -> BTreeSet<Action> {
        self.outputs
            .iter()
            .flat_map(|t| t.actions().iter().cloned())
            .collect()
    }
}

fn check_unique<T: Ord + fmt::Display + Clone>(items: &[T], what: &str) -> Result<()> {
    let report = duplicates(items, what);
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::Validation(report))
    }
}

fn duplicates<T: Ord + fmt::Display + Clone>(items: &[T], what: &str) -> ValidationReport {
    let mut seen = BTreeSet::new();
    let mut report = ValidationReport::default();
    for it in items {
        if !seen.insert(it.clone()) {
            report.push(Violation::Duplicate {
                what: what.to_string(),
                item: it.to_string(),
            });
        }
    }
    report
}

/// Reports every violated channel invariant: shape, entry bounds, row sums
/// and duplicate secrets or traces.
pub fn validate_channel(secrets: &[Secret], outputs: &[Trace], matrix: &Matrix) -> ValidationReport {
    let mut report = ValidationReport::default();
    if matrix.nrows() != secrets.len() {
        report.push(Violation::Shape {
            expected: secrets.len(),
            found: matrix.nrows(),
            what: "number of rows".into(),
        });
    }
    if matrix.ncols() != outputs.len() {
        report.push(Violation::Shape {
            expected: outputs.len(),
            found: matrix.ncols(),
            what: "number of columns".into(),
        });
    }
    report.extend(duplicates(secrets, "secret"));
    report.extend(duplicates(outputs, "trace"));
    report.extend(matrix.validate_stochastic());
    report
}

/// Parallel composition `K1 x K2`, with the output pair `(y1, y2)` realized
/// as the trace `y1.sep.y2`.
pub fn parallel_compose(c1: &Channel, c2: &Channel) -> Result<Channel> {
    let sep = Action::separator();
    if let Some(t) = c1
        .outputs
        .iter()
        .chain(c2.outputs.iter())
        .find(|t| t.contains(&sep))
    {
        return Err(Error::SeparatorClash(t.to_string()));
    }
    let sep_trace = Trace::new(vec![sep]);
    let pairs: Vec<Trace> = c1
        .outputs
        .iter()
        .flat_map(|y1| c2.outputs.iter().map(|y2| y1.concat(&sep_trace).concat(y2)))
        .collect();
    let outputs = canonical_set(pairs.iter().cloned());
    let col: HashMap<&Trace, usize> = outputs.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let pair_col: Vec<usize> = pairs.iter().map(|t| col[t]).collect();
    let n2 = c2.outputs.len();

    let mut secrets = Vec::new();
    let mut rows = Vec::new();
    for (i1, s1) in c1.secrets.iter().enumerate() {
        for (i2, s2) in c2.secrets.iter().enumerate() {
            secrets.push(Secret::pair(s1, s2));
            let mut row = Vec::new();
            for &(j1, p1) in c1.matrix.row(i1) {
                for &(j2, p2) in c2.matrix.row(i2) {
                    row.push((pair_col[j1 * n2 + j2], p1 * p2));
                }
            }
            rows.push(row);
        }
    }
    Channel::new(secrets, outputs.clone(), Matrix::from_sparse_rows(outputs.len(), rows))
}

/// Cascade `K . O`: feeds the outputs of `c` into `o`, whose input set must
/// equal the output set of `c` (order may differ).
pub fn cascade_compose(c: &Channel, o: &Channel) -> Result<Channel> {
    cascade_compose_with(c, o, Execution::default())
}

pub fn cascade_compose_with(c: &Channel, o: &Channel, exec: Execution) -> Result<Channel> {
    let inputs: Vec<Trace> = o
        .secrets
        .iter()
        .map(|s| Trace::parse_compact(&s.to_string()))
        .collect::<Result<_>>()
        .map_err(|_| Error::DimensionMismatch("observer inputs are not traces".into()))?;
    cascade_matrix(c, &inputs, &o.outputs, &o.matrix, exec)
}

/// Cascade of `c` with a matrix indexed by `inputs` (rows) and `views` (columns).
pub(crate) fn cascade_matrix(
    c: &Channel,
    inputs: &[Trace],
    views: &[Trace],
    matrix: &Matrix,
    exec: Execution,
) -> Result<Channel> {
    if inputs.len() != c.outputs.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} outputs, second stage has {} inputs",
            c.outputs.len(),
            inputs.len()
        )));
    }
    let aligned = if inputs == c.outputs.as_slice() {
        matrix.clone()
    } else {
        let index: HashMap<&Trace, usize> = inputs.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut rows = Vec::with_capacity(c.outputs.len());
        for y in &c.outputs {
            let k = index.get(y).ok_or_else(|| {
                Error::DimensionMismatch(format!("trace {y} is not an input of the second stage"))
            })?;
            rows.push(matrix.row(*k).to_vec());
        }
        Matrix::from_sparse_rows(matrix.ncols(), rows)
    };
    Channel::new(c.secrets.clone(), views.to_vec(), c.matrix.mul_with(&aligned, exec))
}

/// Channel that outputs `f(x)` with certainty.
pub fn deterministic_channel<F>(secrets: Vec<Secret>, f: F) -> Result<Channel>
where
    F: Fn(&Secret) -> Trace,
{
    let images: Vec<Trace> = secrets.iter().map(&f).collect();
    let outputs = canonical_set(images.iter().cloned());
    let col: HashMap<&Trace, usize> = outputs.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let rows = images.iter().map(|t| vec![(col[t], 1.0)]).collect();
    let m = Matrix::from_sparse_rows(outputs.len(), rows);
    Channel::new(secrets, outputs, m)
}
