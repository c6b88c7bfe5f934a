//! Linear programs and a two-phase dense simplex solver.
//!
//! Pricing is Dantzig's with a Harris ratio test; after a run of
//! degenerate pivots the solver falls back to Bland's rule until the
//! objective moves again, so it never cycles. Solves are deterministic for
//! a fixed variable order. Row updates of each pivot run on the
//! [`Execution`] pool.

use std::fmt::Write as _;

use thiserror::Error;

use crate::par::Execution;

/// Entries below this magnitude are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-10;
/// Slack allowed on constraints and on the phase-one objective.
pub const FEASIBILITY_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERATIONS: usize = 500_000;
const REFRESH_EVERY: usize = 64;
/// Degenerate pivots in a row before falling back to Bland's rule.
const STALL_LIMIT: usize = 50;
const HARRIS_TOL: f64 = 1e-9;
/// Tableau entries below this magnitude are flushed to zero.
const ZERO_TOL: f64 = 1e-13;

/// Sparse row, relation, right-hand side.
type Row = (Vec<(usize, f64)>, Relation, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize c.x` subject to the constraints and `x >= 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex stopped after {0} iterations")]
    IterationLimit(usize),
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with objective coefficient `cost`; returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.var_names.push(name.into());
        self.objective.push(cost);
        self.var_names.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn count(&self, relation: Relation) -> usize {
        self.constraints.iter().filter(|c| c.relation == relation).count()
    }

    /// Largest violation of any constraint or bound by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Renders the program in the CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self.var_names.iter().map(|n| sanitize(n)).collect();
        let mut out = String::from("Minimize\n obj:");
        write_terms(
            &mut out,
            self.objective.iter().copied().enumerate().filter(|&(_, c)| c != 0.0),
            &names,
        );
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let label = if c.name.is_empty() {
                format!("c{i}")
            } else {
                sanitize(&c.name)
            };
            let _ = write!(out, " {label}:");
            write_terms(&mut out, c.coeffs.iter().copied(), &names);
            let op = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for n in &names {
            let _ = writeln!(out, " {n} >= 0");
        }
        out.push_str("End\n");
        out
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (usize, f64)>, names: &[String]) {
    let mut any = false;
    for (j, a) in terms {
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", fmt_num(a.abs()), names[j]);
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn sanitize(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.chars().next().is_none_or(|c| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    s
}

/// Solves with the default execution mode.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, Execution::default(), DEFAULT_MAX_ITERATIONS)
}

pub fn solve_with(
    lp: &LinearProgram,
    exec: Execution,
    max_iterations: usize,
) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    if lp.objective.len() != n {
        return Err(LpError::Malformed("objective length differs from variable count".into()));
    }
    for c in &lp.constraints {
        if let Some(&(j, _)) = c.coeffs.iter().find(|&&(j, _)| j >= n) {
            return Err(LpError::Malformed(format!(
                "constraint {} refers to variable {j}",
                c.name
            )));
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|(_, a)| !a.is_finite()) {
            return Err(LpError::Malformed(format!("constraint {} is not finite", c.name)));
        }
    }

    // Normalize to rhs >= 0 and drop rows that x >= 0 satisfies trivially.
    let mut rows: Vec<Row> = Vec::new();
    for c in &lp.constraints {
        let (mut coeffs, mut rel, mut rhs) = (c.coeffs.clone(), c.relation, c.rhs);
        if rhs < 0.0 {
            coeffs.iter_mut().for_each(|(_, a)| *a = -*a);
            rhs = -rhs;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        if rel == Relation::Le && coeffs.iter().all(|&(_, a)| a <= 0.0) {
            continue;
        }
        rows.push((coeffs, rel, rhs));
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let art_start = n + n_slack;
    let total = art_start + n_art;
    let width = total + 1;

    let mut t = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (n, art_start);
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let row = &mut t[i * width..(i + 1) * width];
        for &(j, v) in coeffs {
            row[j] += v;
        }
        row[total] = *rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Relation::Eq => {
                row[a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }

    let mut tab = Tableau {
        t,
        width,
        basis,
        exec,
        iterations: 0,
        max_iterations,
    };

    // Phase one: minimize the sum of artificials.
    if n_art > 0 {
        let mut cost = vec![0.0; total];
        cost[art_start..].iter_mut().for_each(|c| *c = 1.0);
        let obj = match tab.run(&cost, total)? {
            (Outcome::Optimal, obj) => obj,
            (Outcome::Unbounded, _) => return Err(LpError::Malformed("phase one unbounded".into())),
        };
        if -obj[total] > FEASIBILITY_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                values: vec![],
                iterations: tab.iterations,
            });
        }
        tab.drive_out_artificials(art_start);
    }

    // Phase two on the original objective, artificials barred from entering.
    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    let status = match tab.run(&cost, art_start)?.0 {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
    };
    let mut values = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            values[b] = tab.t[i * width + total].max(0.0);
        }
    }
    let objective = if status == LpStatus::Optimal {
        lp.evaluate(&values)
    } else {
        f64::NEG_INFINITY
    };
    Ok(LpSolution {
        status,
        objective,
        values,
        iterations: tab.iterations,
    })
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    t: Vec<f64>,
    width: usize,
    basis: Vec<usize>,
    exec: Execution,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    /// Objective row `c - c_B B^-1 A`, with `-z` in the last slot.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut obj = vec![0.0; self.width];
        obj[..cost.len()].copy_from_slice(cost);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (o, &v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        obj
    }

    /// Primal simplex over columns `< allowed`: Dantzig pricing with a
    /// Harris ratio test, switching to Bland's rule while the objective
    /// stalls so degenerate vertices cannot cycle. The objective row is
    /// rebuilt from `cost` periodically and before any verdict.
    fn run(&mut self, cost: &[f64], allowed: usize) -> Result<(Outcome, Vec<f64>), LpError> {
        let rhs = self.rhs_col();
        let mut obj = self.reduced_costs(cost);
        let mut fresh = true;
        let mut stall = 0usize;
        loop {
            let bland = stall >= STALL_LIMIT;
            let entering = if bland {
                (0..allowed).find(|&j| obj[j] < -PIVOT_TOL)
            } else {
                (0..allowed)
                    .filter(|&j| obj[j] < -PIVOT_TOL)
                    .min_by(|&i, &j| obj[i].total_cmp(&obj[j]))
            };
            let Some(col) = entering else {
                if fresh {
                    return Ok((Outcome::Optimal, obj));
                }
                obj = self.reduced_costs(cost);
                fresh = true;
                continue;
            };
            let Some(row) = self.leaving(col, bland) else {
                if fresh {
                    return Ok((Outcome::Unbounded, obj));
                }
                obj = self.reduced_costs(cost);
                fresh = true;
                continue;
            };
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.iterations));
            }
            let before = obj[rhs];
            self.pivot(row, col, &mut obj);
            if (obj[rhs] - before).abs() > 1e-12 {
                stall = 0;
            } else {
                stall += 1;
            }
            fresh = false;
            if self.iterations.is_multiple_of(REFRESH_EVERY) {
                obj = self.reduced_costs(cost);
                fresh = true;
            }
        }
    }

    /// Leaving row for `col`. Harris: among rows within `HARRIS_TOL` of
    /// the minimum ratio take the largest pivot. Bland: exact minimum
    /// ratio, ties to the smallest basic index.
    fn leaving(&self, col: usize, bland: bool) -> Option<usize> {
        let w = self.width;
        let rhs = self.rhs_col();
        let scale = (0..self.rows())
            .map(|i| self.t[i * w + col].abs())
            .fold(1.0, f64::max);
        let floor = PIVOT_TOL * scale;
        let candidates = || {
            (0..self.rows()).filter_map(move |i| {
                let a = self.t[i * w + col];
                (a > floor).then(|| (i, a, self.t[i * w + rhs].max(0.0)))
            })
        };
        if bland {
            let min = candidates().map(|(_, a, b)| b / a).fold(f64::INFINITY, f64::min);
            return candidates()
                .filter(|&(_, a, b)| b / a <= min + 1e-12)
                .min_by_key(|&(i, _, _)| self.basis[i])
                .map(|(i, _, _)| i);
        }
        let bound = candidates()
            .map(|(_, a, b)| (b + HARRIS_TOL) / a)
            .fold(f64::INFINITY, f64::min);
        candidates()
            .filter(|&(_, a, b)| b / a <= bound)
            .max_by(|x, y| x.1.total_cmp(&y.1).then(self.basis[y.0].cmp(&self.basis[x.0])))
            .map(|(i, _, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize, obj: &mut [f64]) {
        let w = self.width;
        self.iterations += 1;
        let p = self.t[row * w + col];
        let mut prow: Vec<f64> = self.t[row * w..(row + 1) * w].to_vec();
        prow.iter_mut().for_each(|v| *v /= p);
        prow[col] = 1.0;
        // Nonzero pattern of the pivot row keeps the updates sparse.
        let nz: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        let prow_ref = &prow;
        let nz_ref = &nz;
        self.exec.for_each_chunk_mut(&mut self.t, w, |i, r| {
            if i == row {
                r.copy_from_slice(prow_ref);
                return;
            }
            let f = r[col];
            if f != 0.0 {
                for &j in nz_ref {
                    r[j] -= f * prow_ref[j];
                    if r[j].abs() < ZERO_TOL {
                        r[j] = 0.0;
                    }
                }
                r[col] = 0.0;
            }
        });
        let f = obj[col];
        if f != 0.0 {
            for &j in &nz {
                obj[j] -= f * prow[j];
            }
            obj[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Pivots basic artificials out after phase one; rows where that is
    /// impossible are linearly dependent and are removed.
    fn drive_out_artificials(&mut self, art_start: usize) {
        let w = self.width;
        let mut i = 0;
        while i < self.rows() {
            if self.basis[i] < art_start {
                i += 1;
                continue;
            }
            let entering = (0..art_start).find(|&j| self.t[i * w + j].abs() > PIVOT_TOL);
            match entering {
                Some(j) => {
                    let mut dummy = vec![0.0; w];
                    self.pivot(i, j, &mut dummy);
                    i += 1;
                }
                None => {
                    self.t.drain(i * w..(i + 1) * w);
                    self.basis.remove(i);
                }
            }
        }
    }
}
