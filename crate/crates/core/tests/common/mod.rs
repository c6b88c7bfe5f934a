//! Fixtures and random generators shared by the integration tests.
#![allow(dead_code)]

use leakmix::channel::{Channel, Prior, Secret};
use leakmix::interleave::interleave_pair;
use leakmix::matrix::Matrix;
use leakmix::observer::Observer;
use leakmix::scheduler::Scheduler;
use leakmix::trace::{canonical_set, Action, Trace};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn t(s: &str) -> Trace {
    Trace::parse_compact(s).unwrap()
}

pub fn ts(v: &[&str]) -> Vec<Trace> {
    v.iter().map(|s| t(s)).collect()
}

pub fn secrets(n: usize) -> Vec<Secret> {
    (0..n).map(|i| Secret::single(i.to_string())).collect()
}

pub fn table1() -> Channel {
    Channel::from_dense(
        secrets(2),
        ts(&["m1:0", "tau,m1:0", "m1:1", "tau,m1:1"]),
        &[vec![0.5, 0.0, 0.0, 0.5], vec![0.0, 0.5, 0.5, 0.0]],
    )
    .unwrap()
}

pub fn table2() -> Channel {
    Channel::from_dense(
        secrets(2),
        ts(&["m2:0", "tau,m2:0", "m2:1", "tau,m2:1"]),
        &[vec![0.0, 0.5, 0.5, 0.0], vec![0.5, 0.0, 0.0, 0.5]],
    )
    .unwrap()
}

/// Prior (0.15, 0.20, 0.30, 0.35) over pairs of the two tables' secrets.
pub fn example_prior() -> Prior {
    let pairs = ["0", "1"]
        .iter()
        .flat_map(|a| ["0", "1"].iter().map(move |b| Secret::new(vec![a.to_string(), b.to_string()])))
        .collect();
    Prior::new(pairs, vec![0.15, 0.20, 0.30, 0.35]).unwrap()
}

/// A random probability vector of length `n` with some exact zeros.
pub fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen::<f64>() })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 1e-3 {
            let mut d: Vec<f64> = w.iter().map(|v| v / s).collect();
            // Pin the row sum to exactly what the validator accepts.
            let err: f64 = d.iter().sum::<f64>() - 1.0;
            if let Some(k) = d.iter().position(|&v| v > err.abs() * 2.0) {
                d[k] -= err;
            }
            return d;
        }
    }
}

pub fn random_prior(rng: &mut ChaCha8Rng, secrets: Vec<Secret>) -> Prior {
    let d = random_dist(rng, secrets.len());
    Prior::new(secrets, d).unwrap()
}

pub fn random_channel(rng: &mut ChaCha8Rng, secrets: Vec<Secret>, outputs: Vec<Trace>) -> Channel {
    let dense: Vec<Vec<f64>> = (0..secrets.len()).map(|_| random_dist(rng, outputs.len())).collect();
    Channel::from_dense(secrets, outputs, &dense).unwrap()
}

/// Distinct random traces over `alphabet`, of length at most `max_len`.
pub fn random_traces(rng: &mut ChaCha8Rng, alphabet: &[Action], count: usize, max_len: usize) -> Vec<Trace> {
    let mut out = Vec::new();
    for _ in 0..count * 20 {
        if out.len() == count {
            break;
        }
        let len = rng.gen_range(0..=max_len);
        let tr: Trace = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone()).collect();
        if !out.contains(&tr) {
            out.push(tr);
        }
    }
    canonical_set(out)
}

pub fn random_observer(rng: &mut ChaCha8Rng, outputs: &[Trace], views: usize) -> Observer {
    let vs: Vec<Trace> = (0..views).map(|i| t(&format!("view:{i}"))).collect();
    let dense: Vec<Vec<f64>> = outputs.iter().map(|_| random_dist(rng, views)).collect();
    Observer::from_dense(outputs.to_vec(), vs, &dense).unwrap()
}

/// Random scheduler with full support drawn over each row's merges.
pub fn random_scheduler(rng: &mut ChaCha8Rng, y1: &[Trace], y2: &[Trace]) -> Scheduler {
    let mut rows = Vec::new();
    for a in y1 {
        for b in y2 {
            let ms = interleave_pair(a, b).unwrap();
            let d = random_dist(rng, ms.len());
            rows.push(ms.into_iter().zip(d).collect());
        }
    }
    Scheduler::explicit(vec![y1.to_vec(), y2.to_vec()], rows).unwrap()
}

/// Every deterministic scheduler over the domain.
pub fn all_deterministic(y1: &[Trace], y2: &[Trace]) -> Vec<Scheduler> {
    let options: Vec<Vec<Trace>> = y1
        .iter()
        .flat_map(|a| y2.iter().map(move |b| interleave_pair(a, b).unwrap()))
        .collect();
    let mut choices = vec![Vec::new()];
    for opts in &options {
        choices = choices
            .into_iter()
            .flat_map(|c: Vec<Trace>| {
                opts.iter().map(move |o| {
                    let mut c = c.clone();
                    c.push(o.clone());
                    c
                })
            })
            .collect();
    }
    choices
        .into_iter()
        .map(|c| {
            let rows = c.into_iter().map(|y| vec![(y, 1.0)]).collect();
            Scheduler::explicit(vec![y1.to_vec(), y2.to_vec()], rows).unwrap()
        })
        .collect()
}

/// Same matrix with columns relabeled and shuffled.
pub fn relabeled(rng: &mut ChaCha8Rng, o: &Observer) -> Observer {
    let n = o.views().len();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let views: Vec<Trace> = (0..n).map(|j| t(&format!("alias:{}", perm[j]))).collect();
    let m: Matrix = o.matrix().clone();
    let dense: Vec<Vec<f64>> = m.to_dense();
    let mut shuffled = vec![vec![0.0; n]; dense.len()];
    for (i, r) in dense.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            shuffled[i][perm[j]] = v;
        }
    }
    let views_sorted = canonical_set(views.iter().cloned());
    let dense_sorted: Vec<Vec<f64>> = shuffled
        .iter()
        .map(|r| {
            views_sorted
                .iter()
                .map(|v| {
                    let k: usize = v.to_compact()["alias:".len()..].parse().unwrap();
                    r[k]
                })
                .collect()
        })
        .collect();
    Observer::from_dense(o.outputs().to_vec(), views_sorted, &dense_sorted).unwrap()
}
