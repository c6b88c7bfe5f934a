//! Leakage measures, all in bits.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use crate::channel::{Channel, Prior};
use crate::error::{Error, Result};
use crate::observer::{observe, Observer};

pub const BA_TOLERANCE: f64 = 1e-9;
pub const BA_MAX_ITERATIONS: usize = 100_000;
const MAX_RELAXATION: f64 = 1e6;

/// Anything that yields prior masses aligned with a channel's secrets.
pub trait PriorSource {
    fn masses_for<'a>(&'a self, c: &Channel) -> Result<Cow<'a, [f64]>>;
}

impl PriorSource for [f64] {
    fn masses_for<'a>(&'a self, c: &Channel) -> Result<Cow<'a, [f64]>> {
        if self.len() != c.secrets().len() {
            return Err(Error::Misalignment(format!(
                "prior has {} masses, channel has {} secrets",
                self.len(),
                c.secrets().len()
            )));
        }
        Ok(Cow::Borrowed(self))
    }
}

impl PriorSource for Vec<f64> {
    fn masses_for<'a>(&'a self, c: &Channel) -> Result<Cow<'a, [f64]>> {
        self.as_slice().masses_for(c)
    }
}

impl PriorSource for Prior {
    fn masses_for<'a>(&'a self, c: &Channel) -> Result<Cow<'a, [f64]>> {
        self.aligned_to(c.secrets()).map(Cow::Owned)
    }
}

/// `p(y) = sum_x pi[x] C[x, y]`.
fn output_marginal(pi: &[f64], c: &Channel) -> Vec<f64> {
    let mut q = vec![0.0; c.outputs().len()];
    for (x, row) in c.matrix().rows().enumerate() {
        if pi[x] == 0.0 {
            continue;
        }
        for &(y, p) in row {
            q[y] += pi[x] * p;
        }
    }
    q
}

/// `I(pi, K) = sum pi[x] C[x,y] log2(C[x,y] / p(y))`.
pub fn mutual_information<P: PriorSource + ?Sized>(p: &P, c: &Channel) -> Result<f64> {
    let pi = p.masses_for(c)?;
    Ok(mi_raw(&pi, c))
}

fn mi_raw(pi: &[f64], c: &Channel) -> f64 {
    let q = output_marginal(pi, c);
    let mut total = 0.0;
    for (x, row) in c.matrix().rows().enumerate() {
        if pi[x] == 0.0 {
            continue;
        }
        for &(y, p) in row {
            if p > 0.0 && q[y] > 0.0 {
                total += pi[x] * p * (p / q[y]).log2();
            }
        }
    }
    total.max(0.0)
}

pub fn shannon_entropy(pi: &[f64]) -> f64 {
    -pi.iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// `D(C[x,.] || q)` in bits for every row, with `q` the output marginal.
fn divergences(r: &[f64], c: &Channel) -> Vec<f64> {
    let q = output_marginal(r, c);
    c.matrix()
        .rows()
        .map(|row| {
            row.iter()
                .filter(|&&(y, p)| p > 0.0 && q[y] > 0.0)
                .map(|&(y, p)| p * (p / q[y]).log2())
                .sum()
        })
        .collect()
}

/// `r[x] 2^(mu d[x])`, normalized; computed relative to `max d` to stay finite.
fn reweight(r: &[f64], d: &[f64], mu: f64) -> Vec<f64> {
    let top = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = r.iter().zip(d).map(|(ri, di)| ri * (mu * (di - top)).exp2()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Shannon capacity by Blahut-Arimoto; stops once the gap between the
/// upper bound `max_x D_x` and the lower bound `log2 sum_x r_x 2^D_x`
/// drops below `tol`, and returns the lower bound. Steps are
/// over-relaxed (`2^(mu D)`) while the mutual information keeps rising.
pub fn shannon_capacity(c: &Channel) -> Result<f64> {
    shannon_capacity_with(c, BA_TOLERANCE, BA_MAX_ITERATIONS)
}

pub fn shannon_capacity_with(c: &Channel, tol: f64, max_iter: usize) -> Result<f64> {
    let n = c.secrets().len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut r = vec![1.0 / n as f64; n];
    let mut d = divergences(&r, c);
    let mut mu = 1.0;
    let mut gap = f64::INFINITY;
    for _ in 0..max_iter {
        let info: f64 = r.iter().zip(&d).map(|(ri, di)| ri * di).sum();
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lower = upper + r.iter().zip(&d).map(|(ri, di)| ri * (di - upper).exp2()).sum::<f64>().log2();
        gap = upper - lower;
        if gap < tol {
            return Ok(lower.max(0.0));
        }
        let plain = reweight(&r, &d, 1.0);
        let mut next = (plain.clone(), divergences(&plain, c));
        if mu > 1.0 {
            let fast = reweight(&r, &d, mu);
            let fd = divergences(&fast, c);
            let fast_info: f64 = fast.iter().zip(&fd).map(|(ri, di)| ri * di).sum();
            let plain_info: f64 = next.0.iter().zip(&next.1).map(|(ri, di)| ri * di).sum();
            if fast_info >= plain_info {
                next = (fast, fd);
                mu = (mu * 2.0).min(MAX_RELAXATION);
            } else {
                mu = 1.0;
            }
        } else {
            let plain_info: f64 = next.0.iter().zip(&next.1).map(|(ri, di)| ri * di).sum();
            if plain_info >= info {
                mu = 2.0;
            }
        }
        (r, d) = next;
    }
    Err(Error::NonConvergence {
        gap,
        iterations: max_iter,
    })
}

/// `V(pi) = max_x pi[x]`.
pub fn prior_vulnerability(pi: &[f64]) -> f64 {
    pi.iter().copied().fold(0.0, f64::max)
}

/// `V(pi, K) = sum_y max_x pi[x] C[x, y]`.
pub fn posterior_vulnerability<P: PriorSource + ?Sized>(p: &P, c: &Channel) -> Result<f64> {
    let pi = p.masses_for(c)?;
    let mut best = vec![0.0f64; c.outputs().len()];
    for (x, row) in c.matrix().rows().enumerate() {
        for &(y, v) in row {
            best[y] = best[y].max(pi[x] * v);
        }
    }
    Ok(best.iter().sum())
}

/// `L(pi, K) = -log2 V(pi) + log2 V(pi, K)`.
pub fn min_entropy_leakage<P: PriorSource + ?Sized>(p: &P, c: &Channel) -> Result<f64> {
    let pi = p.masses_for(c)?;
    let prior = prior_vulnerability(&pi);
    let post = posterior_vulnerability(pi.as_ref(), c)?;
    Ok((post.log2() - prior.log2()).max(0.0))
}

/// `MC(K) = log2 sum_y max_x C[x, y]`.
pub fn min_capacity(c: &Channel) -> f64 {
    c.matrix().column_max().iter().sum::<f64>().log2().max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Measure {
    MutualInformation,
    ShannonCapacity,
    MinEntropyLeakage,
    MinCapacity,
    PriorVulnerability,
    PosteriorVulnerability,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::MutualInformation,
        Measure::ShannonCapacity,
        Measure::MinEntropyLeakage,
        Measure::MinCapacity,
        Measure::PriorVulnerability,
        Measure::PosteriorVulnerability,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Measure::MutualInformation => "mi",
            Measure::ShannonCapacity => "sc",
            Measure::MinEntropyLeakage => "mel",
            Measure::MinCapacity => "mc",
            Measure::PriorVulnerability => "vprior",
            Measure::PosteriorVulnerability => "vpost",
        }
    }

    pub fn needs_prior(self) -> bool {
        !matches!(self, Measure::ShannonCapacity | Measure::MinCapacity)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.id() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Syntax(format!("unknown measure `{s}`")))
    }
}

/// Evaluates `m`; measures without a prior ignore `p`.
pub fn evaluate<P: PriorSource + ?Sized>(m: Measure, p: &P, c: &Channel) -> Result<f64> {
    match m {
        Measure::MutualInformation => mutual_information(p, c),
        Measure::ShannonCapacity => shannon_capacity(c),
        Measure::MinEntropyLeakage => min_entropy_leakage(p, c),
        Measure::MinCapacity => Ok(min_capacity(c)),
        Measure::PriorVulnerability => Ok(prior_vulnerability(&p.masses_for(c)?)),
        Measure::PosteriorVulnerability => posterior_vulnerability(p, c),
    }
}

/// `L_O(pi, K) = L(pi, K . O)` for any measure.
pub fn observed<P: PriorSource + ?Sized>(m: Measure, p: &P, c: &Channel, o: &Observer) -> Result<f64> {
    evaluate(m, p, &observe(c, o)?)
}

/// A measured value with the names of what was measured.
#[derive(Clone, Debug, PartialEq)]
pub struct LeakageReport {
    pub measure: Measure,
    pub value: f64,
    pub channel: String,
    pub prior: Option<String>,
    pub observer: Option<String>,
}
