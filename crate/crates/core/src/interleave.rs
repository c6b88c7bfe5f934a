//! Interleavings of traces and the structural tests built on them.
//!
//! `Int(y1, y2)` is the set of order-preserving merges of two traces. The
//! enumeration is exponential in the trace lengths, so every entry point
//! checks the unguarded merge count against a ceiling first.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trace::{canonical_set, Action, Trace};

/// Default ceiling on the number of merges an enumeration may visit.
pub const DEFAULT_SIZE_CEILING: u64 = 1_000_000;

/// Ceiling from `QIF_SIZE_GUARD` if set, else [`DEFAULT_SIZE_CEILING`].
pub fn default_ceiling() -> u64 {
    static CEILING: OnceLock<u64> = OnceLock::new();
    *CEILING.get_or_init(|| {
        std::env::var("QIF_SIZE_GUARD")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_SIZE_CEILING)
    })
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn guard(required: u128, ceiling: u64) -> Result<()> {
    if required > ceiling as u128 {
        Err(Error::SizeGuard { required, ceiling })
    } else {
        Ok(())
    }
}

fn merge_count(y1: &[Trace], y2: &[Trace]) -> u128 {
    let mut total: u128 = 0;
    for a in y1 {
        for b in y2 {
            total = total.saturating_add(binomial(a.len() + b.len(), a.len()));
        }
    }
    total
}

/// All merges of `y1` and `y2`, deduplicated and canonically ordered.
pub fn interleave_pair(y1: &Trace, y2: &Trace) -> Result<Vec<Trace>> {
    interleave_pair_with_ceiling(y1, y2, default_ceiling())
}

pub fn interleave_pair_with_ceiling(y1: &Trace, y2: &Trace, ceiling: u64) -> Result<Vec<Trace>> {
    guard(binomial(y1.len() + y2.len(), y1.len()), ceiling)?;
    Ok(merges(y1.actions(), y2.actions()))
}

/// Unguarded enumeration; callers check the size first.
pub(crate) fn merges(a: &[Action], b: &[Action]) -> Vec<Trace> {
    let mut memo: HashMap<(usize, usize), Vec<Vec<Action>>> = HashMap::new();
    let suffixes = merge_suffixes(a, b, 0, 0, &mut memo);
    canonical_set(suffixes.into_iter().map(|mut v| {
        v.reverse();
        Trace::new(v)
    }))
}

// Merges of a[i..] and b[j..], each stored reversed so prepending is a push.
fn merge_suffixes(
    a: &[Action],
    b: &[Action],
    i: usize,
    j: usize,
    memo: &mut HashMap<(usize, usize), Vec<Vec<Action>>>,
) -> Vec<Vec<Action>> {
    if let Some(v) = memo.get(&(i, j)) {
        return v.clone();
    }
    let out = if i == a.len() {
        vec![b[j..].iter().rev().cloned().collect()]
    } else if j == b.len() {
        vec![a[i..].iter().rev().cloned().collect()]
    } else {
        let mut set: BTreeSet<Vec<Action>> = BTreeSet::new();
        for mut s in merge_suffixes(a, b, i + 1, j, memo) {
            s.push(a[i].clone());
            set.insert(s);
        }
        for mut s in merge_suffixes(a, b, i, j + 1, memo) {
            s.push(b[j].clone());
            set.insert(s);
        }
        set.into_iter().collect()
    };
    memo.insert((i, j), out.clone());
    out
}

/// `Int(Y1, Y2)`: union of the pairwise interleavings.
pub fn interleave_sets(y1: &[Trace], y2: &[Trace]) -> Result<Vec<Trace>> {
    interleave_sets_with_ceiling(y1, y2, default_ceiling())
}

pub fn interleave_sets_with_ceiling(y1: &[Trace], y2: &[Trace], ceiling: u64) -> Result<Vec<Trace>> {
    guard(merge_count(y1, y2), ceiling)?;
    let mut all = BTreeSet::new();
    for a in y1 {
        for b in y2 {
            all.extend(merges(a.actions(), b.actions()));
        }
    }
    Ok(all.into_iter().collect())
}

/// n-ary interleaving, folded from the right: `Int(Y1, Int(Y2, ...))`.
pub fn interleave_n(sets: &[Vec<Trace>]) -> Result<Vec<Trace>> {
    interleave_n_with_ceiling(sets, default_ceiling())
}

pub fn interleave_n_with_ceiling(sets: &[Vec<Trace>], ceiling: u64) -> Result<Vec<Trace>> {
    let Some((last, rest)) = sets.split_last() else {
        return Ok(vec![Trace::empty()]);
    };
    let mut acc = canonical_set(last.iter().cloned());
    for s in rest.iter().rev() {
        acc = interleave_sets_with_ceiling(s, &acc, ceiling)?;
    }
    Ok(acc)
}

/// 0/1 matrix with rows `Y1 x Y2` (row-major) and columns `Int(Y1, Y2)`.
pub fn pos_matrix(y1: &[Trace], y2: &[Trace]) -> Result<(Vec<Trace>, Matrix)> {
    let int = interleave_sets(y1, y2)?;
    let col: HashMap<&Trace, usize> = int.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut rows = Vec::with_capacity(y1.len() * y2.len());
    for a in y1 {
        for b in y2 {
            rows.push(
                merges(a.actions(), b.actions())
                    .iter()
                    .map(|y| (col[y], 1.0))
                    .collect(),
            );
        }
    }
    let m = Matrix::from_sparse_rows(int.len(), rows);
    Ok((int, m))
}

/// Two distinct source pairs sharing an interleaving.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collision {
    pub first: (Trace, Trace),
    pub second: (Trace, Trace),
    pub shared: Trace,
}

/// `Ok(None)` when every interleaving determines its source pair, so no
/// scheduler or observer can change the leakage of the composition;
/// otherwise a colliding witness.
pub fn independence_certificate(y1: &[Trace], y2: &[Trace]) -> Result<Option<Collision>> {
    guard(merge_count(y1, y2), default_ceiling())?;
    let mut origin: HashMap<Trace, (usize, usize)> = HashMap::new();
    let mut best: Option<Collision> = None;
    for (i, a) in y1.iter().enumerate() {
        for (j, b) in y2.iter().enumerate() {
            for y in merges(a.actions(), b.actions()) {
                match origin.get(&y) {
                    Some(&(pi, pj)) if (pi, pj) != (i, j) => {
                        let c = Collision {
                            first: (y1[pi].clone(), y2[pj].clone()),
                            second: (a.clone(), b.clone()),
                            shared: y,
                        };
                        // Keep the canonically smallest shared trace.
                        if best.as_ref().is_none_or(|w| c.shared < w.shared) {
                            best = Some(c);
                        }
                    }
                    Some(_) => {}
                    None => {
                        origin.insert(y, (i, j));
                    }
                }
            }
        }
    }
    Ok(best)
}

/// True iff no action occurs in both trace sets.
pub fn disjoint_actions(y1: &[Trace], y2: &[Trace]) -> bool {
    let a: BTreeSet<&Action> = y1.iter().flat_map(|t| t.actions()).collect();
    y2.iter().flat_map(|t| t.actions()).all(|x| !a.contains(x))
}

/// True iff some scheduler could make the composition leak differently
/// from the parallel composition.
pub fn can_alter_leakage(y1: &[Trace], y2: &[Trace]) -> Result<bool> {
    Ok(independence_certificate(y1, y2)?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Trace {
        Trace::parse_compact(s).unwrap()
    }

    fn ts(v: &[&str]) -> Vec<Trace> {
        v.iter().map(|s| t(s)).collect()
    }

    #[test]
    fn two_distinct_actions() {
        assert_eq!(interleave_pair(&t("a:0"), &t("b:0")).unwrap(), ts(&["a:0,b:0", "b:0,a:0"]));
    }

    #[test]
    fn duplicate_merges_collapse() {
        let got = interleave_pair(&t("tau,m:s"), &t("tau")).unwrap();
        assert_eq!(got, ts(&["tau,tau,m:s", "tau,m:s,tau"]));
    }

    #[test]
    fn empty_source() {
        assert_eq!(interleave_pair(&t("a:0,b:0"), &Trace::empty()).unwrap(), ts(&["a:0,b:0"]));
        assert_eq!(interleave_pair(&Trace::empty(), &Trace::empty()).unwrap(), ts(&["-"]));
    }

    #[test]
    fn three_singletons_give_permutations() {
        let got = interleave_n(&[ts(&["a:0"]), ts(&["b:0"]), ts(&["c:0"])]).unwrap();
        assert_eq!(got.len(), 6);
    }

    #[test]
    fn table_trace_sets() {
        let y1 = ts(&["m1:0", "tau,m1:0", "m1:1", "tau,m1:1"]);
        let y2 = ts(&["m2:0", "tau,m2:0", "m2:1", "tau,m2:1"]);
        // Brute force: 4 pairs of length 2, 8 of length 3, 4 of length 4.
        assert_eq!(interleave_sets(&y1, &y2).unwrap().len(), 40);
    }

    #[test]
    fn five_votes() {
        let v = ts(&["m:0", "m:1"]);
        let got = interleave_n(&vec![v; 5]).unwrap();
        assert_eq!(got.len(), 32);
        assert!(got.iter().all(|y| y.len() == 5));
    }

    #[test]
    fn pos_rows() {
        let y1 = ts(&["tau,m:s"]);
        let y2 = ts(&["tau"]);
        let (int, pos) = pos_matrix(&y1, &y2).unwrap();
        let k = int.iter().position(|y| *y == t("tau,tau,m:s")).unwrap();
        assert_eq!(pos.get(0, k), 1.0);

        let (int, pos) = pos_matrix(&ts(&["a:0", "c:0"]), &ts(&["b:0", "d:0"])).unwrap();
        let cd = int.iter().position(|y| *y == t("c:0,d:0")).unwrap();
        assert_eq!(pos.get(0, cd), 0.0);
        for r in pos.rows() {
            assert!(!r.is_empty());
        }
    }

    #[test]
    fn certificates() {
        assert_eq!(independence_certificate(&ts(&["a:0"]), &ts(&["b:0"])).unwrap(), None);
        assert_eq!(independence_certificate(&ts(&["tau"]), &ts(&["tau"])).unwrap(), None);

        let w = independence_certificate(&ts(&["tau", "tau,tau"]), &ts(&["m:0", "tau,m:0"]))
            .unwrap()
            .unwrap();
        assert_eq!(w.shared, t("tau,tau,m:0"));
        assert_ne!(w.first, w.second);

        let y1 = ts(&["m1:0", "tau,m1:0", "m1:1", "tau,m1:1"]);
        let y2 = ts(&["m2:0", "tau,m2:0", "m2:1", "tau,m2:1"]);
        assert!(can_alter_leakage(&y1, &y2).unwrap());
        let w = independence_certificate(&y1, &y2).unwrap().unwrap();
        let shared = interleave_pair(&t("tau,m1:0"), &t("m2:0")).unwrap();
        assert!(shared.contains(&t("tau,m1:0,m2:0")));
        assert!(w.shared.len() >= 3);
    }

    #[test]
    fn disjointness() {
        let y1 = ts(&["m1:0", "tau,m1:0"]);
        let y2 = ts(&["m2:0", "tau,m2:0"]);
        assert!(!disjoint_actions(&y1, &y2));
        assert!(disjoint_actions(&ts(&["m1:0", "m1:1"]), &ts(&["m2:0", "m2:1"])));
        assert!(disjoint_actions(&y1, &ts(&["-"])));
        assert!(!can_alter_leakage(&ts(&["m1:0", "m1:1"]), &ts(&["m2:0", "m2:1"])).unwrap());
    }

    #[test]
    fn size_guard_trips() {
        let long: Trace = (0..20).map(|i| Action::out("a", i.to_string())).collect();
        let other: Trace = (0..20).map(|i| Action::out("b", i.to_string())).collect();
        let err = interleave_pair_with_ceiling(&long, &other, 1_000_000).unwrap_err();
        match err {
            Error::SizeGuard { required, .. } => assert_eq!(required, binomial(40, 20)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(40, 20), 137_846_528_820);
    }
}
