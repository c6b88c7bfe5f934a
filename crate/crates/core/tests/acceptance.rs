//! Acceptance suite: one line per criterion.
//!
//! Runs without the libtest harness so the report is always printed.
//! Gated targets that miss are reported as `GATED` and do not fail the run.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use leakmix::channel::{parallel_compose, Channel, Prior};
use leakmix::interleave::{disjoint_actions, independence_certificate, interleave_pair, interleave_sets};
use leakmix::matrix::Matrix;
use leakmix::measures::{
    min_capacity, min_entropy_leakage, mutual_information, observed, shannon_capacity, Measure,
};
use leakmix::minimize::{min_capacity_scheduler, min_leakage_scheduler, MinLeakage};
use leakmix::observer::{
    det_observer, observe, perfect_observer, refinement_witness, tau_misplacement_observer,
    unit_observer, Equivalence, Observer,
};
use leakmix::scenarios::{
    build_sidechannel, build_voting, leakage, minimize_voting_slot, sidechannel_observer,
    voting_observer, voting_prior, voting_single_scheduler_min_capacity, ObserverKind, Sharing,
    SideChannelModel, VotingModel,
};
use leakmix::scheduler::{scheduled_compose, Scheduler, SchedulerKind};
use leakmix::trace::{canonical_set, Action, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-3;
const CASES: usize = 200;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Gated,
}

/// Findings of one criterion: hard checks fail it, gated checks only annotate.
#[derive(Default)]
struct Check {
    failures: Vec<String>,
    gated: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn near(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        if (got - want).abs() > tol {
            self.failures.push(format!("{what} = {got:.6}, expected {want} +/- {tol:e}"));
        }
    }

    fn near_gated(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        if (got - want).abs() > tol {
            self.gated.push(format!("{what} = {got:.6}, target {want} +/- {tol:e}"));
        }
    }

    fn holds(&mut self, what: &str, ok: bool) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn run(id: u32, title: &str, f: impl FnOnce(&mut Check)) -> Status {
    let start = Instant::now();
    let mut check = Check::default();
    let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut check)));
    if let Err(e) = outcome {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        check.failures.push(format!("panicked: {msg}"));
    }
    let status = if !check.failures.is_empty() {
        Status::Fail
    } else if !check.gated.is_empty() {
        Status::Gated
    } else {
        Status::Pass
    };
    let tag = match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Gated => "GATED",
    };
    println!("[{tag}] #{id} {title} ({:.2}s)", start.elapsed().as_secs_f64());
    for f in &check.failures {
        println!("       fail: {f}");
    }
    for g in &check.gated {
        println!("       gated discrepancy: {g}");
    }
    for n in &check.notes {
        println!("       note: {n}");
    }
    status
}

fn composed(kind: SchedulerKind) -> Channel {
    let (c1, c2) = (table1(), table2());
    let s = Scheduler::build(kind, &[c1.outputs().to_vec(), c2.outputs().to_vec()]).unwrap();
    scheduled_compose(&c1, &c2, &s).unwrap()
}

fn weak(c: &Channel) -> Observer {
    det_observer(&Equivalence::Weak, c.outputs())
}

fn observed_mel(p: &Prior, c: &Channel, o: &Observer) -> f64 {
    min_entropy_leakage(p, &observe(c, o).unwrap()).unwrap()
}

fn observed_mi(p: &Prior, c: &Channel, o: &Observer) -> f64 {
    mutual_information(p, &observe(c, o).unwrap()).unwrap()
}

fn table_outputs() -> Vec<Trace> {
    interleave_sets(table1().outputs(), table2().outputs()).unwrap()
}

/// Re-evaluates a minimized binary scheduler against its reported value.
fn reevaluate(p: &Prior, c1: &Channel, c2: &Channel, o: &Observer, r: &MinLeakage) -> f64 {
    let k = scheduled_compose(c1, c2, &r.scheduler).unwrap();
    observed_mel(p, &k, o)
}

fn criterion_1(c: &mut Check) {
    let p = example_prior();
    let ds = composed(SchedulerKind::Ds);
    let par = parallel_compose(&table1(), &table2()).unwrap();
    for (name, k) in [("scheduled", &ds), ("parallel", &par)] {
        c.near(&format!("{name} MI"), mutual_information(&p, k).unwrap(), 1.926, TOL);
        c.near(&format!("{name} MEL"), min_entropy_leakage(&p, k).unwrap(), 1.515, TOL);
    }
}

fn criterion_2(c: &mut Check) {
    let p = example_prior();
    let fs = composed(SchedulerKind::Fs);
    let par = parallel_compose(&table1(), &table2()).unwrap();
    c.near(
        "MI difference",
        mutual_information(&p, &fs).unwrap() - mutual_information(&p, &par).unwrap(),
        0.0,
        1e-9,
    );
    c.near(
        "MEL difference",
        min_entropy_leakage(&p, &fs).unwrap() - min_entropy_leakage(&p, &par).unwrap(),
        0.0,
        1e-9,
    );
}

fn criterion_3(c: &mut Check) {
    let p = example_prior();
    c.near("MI", mutual_information(&p, &composed(SchedulerKind::Fi)).unwrap(), 1.695, TOL);
}

fn criterion_4(c: &mut Check) {
    let p = example_prior();
    let fi = composed(SchedulerKind::Fi);
    c.near("interleaved MEL under ~w", observed_mel(&p, &fi, &weak(&fi)), 0.215, TOL);
    let par = parallel_compose(&table1(), &table2()).unwrap();
    c.near("parallel MEL under ~w", observed_mel(&p, &par, &weak(&par)), 0.0, 1e-9);
    let k1 = table1();
    let p1 = Prior::new(k1.secrets().to_vec(), vec![0.35, 0.65]).unwrap();
    c.near("first table MEL under ~w", observed_mel(&p1, &k1, &weak(&k1)), 0.0, 1e-9);
}

fn criterion_5(c: &mut Check) {
    let p = example_prior();
    let fi = composed(SchedulerKind::Fi);
    let low = observed_mi(&p, &fi, &weak(&fi));
    let high = observed_mi(&p, &fi, &perfect_observer(fi.outputs()));
    c.near("MI under ~w", low, 0.090, TOL);
    c.near("MI under perfect observer", high, 1.695, TOL);
    let mid = observed_mi(&p, &fi, &tau_misplacement_observer(fi.outputs()));
    c.holds(
        &format!("tau-misplacement MI {mid:.6} outside [{low:.6}, {high:.6}]"),
        low - 1e-9 <= mid && mid <= high + 1e-9,
    );
    c.near_gated("MI under tau-misplacement observer", mid, 0.783, TOL);
    c.note(format!("tau-misplacement MI = {mid:.6}"));
}

fn criterion_6(c: &mut Check) {
    let p = example_prior();
    let (c1, c2) = (table1(), table2());
    let ys = table_outputs();
    let perfect = perfect_observer(&ys);
    let noisy = tau_misplacement_observer(&ys);

    let r = min_leakage_scheduler(&p, &c1, &c2, &perfect).unwrap();
    c.near("min MEL, perfect observer", r.mel, 1.237, TOL);
    let r = min_leakage_scheduler(&p, &c1, &c2, &noisy).unwrap();
    c.near_gated("min MEL, tau-misplacement observer", r.mel, 0.801, TOL);
    c.note(format!("min MEL, tau-misplacement observer = {:.6}", r.mel));

    let r = min_capacity_scheduler(&c1, &c2, &perfect).unwrap();
    c.near("min MC, perfect observer", r.mel, 1.585, TOL);
    let r = min_capacity_scheduler(&c1, &c2, &noisy).unwrap();
    c.near_gated("min MC, tau-misplacement observer", r.mel, 1.138, TOL);
    c.note(format!("min MC, tau-misplacement observer = {:.6}", r.mel));
}

fn criterion_7(c: &mut Check) {
    let p = example_prior();
    let (c1, c2) = (table1(), table2());
    let ys = table_outputs();
    let uniform = Prior::uniform(p.secrets().to_vec()).unwrap();
    for o in [perfect_observer(&ys), tau_misplacement_observer(&ys), weak(&composed(SchedulerKind::Ds))] {
        let r = min_leakage_scheduler(&p, &c1, &c2, &o).unwrap();
        c.near("table LP re-evaluation", reevaluate(&p, &c1, &c2, &o, &r), r.mel, 1e-6);
        let r = min_capacity_scheduler(&c1, &c2, &o).unwrap();
        let k = observe(&scheduled_compose(&c1, &c2, &r.scheduler).unwrap(), &o).unwrap();
        c.near("table MC re-evaluation", min_capacity(&k), r.mel, 1e-6);
        c.near("table MC as uniform-prior MEL", min_entropy_leakage(&uniform, &k).unwrap(), r.mel, 1e-6);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let alphabet = [Action::Tau, Action::out("a", "0"), Action::out("b", "0")];
    let (mut instances, mut candidates) = (0, 0usize);
    while instances < 40 {
        let y1 = random_traces(&mut rng, &alphabet, 2, 2);
        let y2 = random_traces(&mut rng, &alphabet, 2, 2);
        if y1.len() < 2 || y2.len() < 2 {
            continue;
        }
        instances += 1;
        let k1 = random_channel(&mut rng, secrets(2), y1.clone());
        let k2 = random_channel(&mut rng, secrets(2), y2.clone());
        let outs = interleave_sets(&y1, &y2).unwrap();
        let o = match instances % 3 {
            0 => perfect_observer(&outs),
            1 => det_observer(&Equivalence::Weak, &outs),
            _ => random_observer(&mut rng, &outs, 3),
        };
        let ds = scheduled_compose(&k1, &k2, &Scheduler::ds(&y1, &y2).unwrap()).unwrap();
        let prior = random_prior(&mut rng, ds.secrets().to_vec());
        let r = min_leakage_scheduler(&prior, &k1, &k2, &o).unwrap();
        c.near("random LP re-evaluation", reevaluate(&prior, &k1, &k2, &o, &r), r.mel, 1e-6);
        let mut best = f64::INFINITY;
        for s in all_deterministic(&y1, &y2) {
            candidates += 1;
            best = best.min(observed_mel(&prior, &scheduled_compose(&k1, &k2, &s).unwrap(), &o));
        }
        for _ in 0..50 {
            candidates += 1;
            let s = random_scheduler(&mut rng, &y1, &y2);
            best = best.min(observed_mel(&prior, &scheduled_compose(&k1, &k2, &s).unwrap(), &o));
        }
        c.holds(
            &format!("brute force {best:.9} beats LP {:.9}", r.mel),
            best >= r.mel - 1e-6,
        );
    }
    c.note(format!("{instances} random instances, {candidates} brute-force schedulers"));
}

fn voting(model: &VotingModel, kind: ObserverKind) -> leakmix::scenarios::Leakage {
    let (ch, p) = build_voting(model).unwrap();
    let o = voting_observer(kind, ch.outputs()).unwrap();
    leakage(&p, &ch, Some(&o)).unwrap()
}

fn criterion_8(c: &mut Check) {
    let ds = voting(&VotingModel::uniform(SchedulerKind::Ds), ObserverKind::Perfect);
    c.near("all-DS MEL", ds.mel, 5.0, TOL);
    let fs = voting(&VotingModel::uniform(SchedulerKind::Fs), ObserverKind::Perfect);
    c.near("all-FS MEL", fs.mel, 3.426, TOL);
    c.near("all-FS MI", fs.mi, 2.836, TOL);
    let fi = voting(&VotingModel::uniform(SchedulerKind::Fi), ObserverKind::Perfect);
    c.near("all-FI MEL", fi.mel, 2.901, TOL);
    c.near("all-FI MI", fi.mi, 2.251, TOL);

    let mixed = voting(&VotingModel::mixed(), ObserverKind::Perfect);
    c.near_gated("mixed MEL (uniform insertion at S1)", mixed.mel, 2.824, TOL);
    c.near_gated("mixed MI (uniform insertion at S1)", mixed.mi, 2.234, TOL);
    let model = VotingModel::mixed_open();
    let slot = minimize_voting_slot(&model, ObserverKind::Perfect).unwrap();
    let p = voting_prior(&model).unwrap();
    let again = min_entropy_leakage(&p, &slot.channel).unwrap();
    c.near("LP-minimized S1 re-evaluation", again, slot.result.mel, 1e-6);
    c.holds("LP-minimized S1 is no worse than uniform insertion", slot.result.mel <= mixed.mel + 1e-6);
    c.note(format!(
        "mixed with uniform insertion at S1: MEL {:.6}, MI {:.6}; LP-minimized S1: MEL {:.6}",
        mixed.mel, mixed.mi, slot.result.mel
    ));

    let single = voting_single_scheduler_min_capacity(ObserverKind::Perfect).unwrap();
    c.near("single scheduler min MC", single.mel, 2.585, TOL);
    c.near("single scheduler min MC vs log2 6", single.mel, 6f64.log2(), 1e-6);
}

fn criterion_9(c: &mut Check) {
    let model = VotingModel::uniform(SchedulerKind::Fi).with_tau_prefix(&[0, 1]);
    let perfect = voting(&model, ObserverKind::Perfect);
    c.near("perfect MEL", perfect.mel, 3.441, TOL);
    c.near("perfect MI", perfect.mi, 2.785, TOL);
    let w = voting(&model, ObserverKind::Weak);
    c.near("~w MEL", w.mel, 3.381, TOL);
    c.near("~w MI", w.mi, 2.597, TOL);
}

fn criterion_10(c: &mut Check) {
    let cases = [
        (Sharing::Independent, ObserverKind::Perfect, 4.257, 3.547),
        (Sharing::Independent, ObserverKind::Weak, 2.807, 2.333),
        (Sharing::Shared, ObserverKind::Perfect, 3.000, 3.000),
        (Sharing::Shared, ObserverKind::Weak, 2.000, 1.811),
        (Sharing::Independent, ObserverKind::Noisy, 3.306, 1.454),
        (Sharing::Shared, ObserverKind::Noisy, 2.556, 1.924),
    ];
    for (sharing, kind, mel, mi) in cases {
        let (ch, p) = build_sidechannel(&SideChannelModel::new(sharing)).unwrap();
        let o = sidechannel_observer(kind, ch.outputs()).unwrap();
        let l = leakage(&p, &ch, Some(&o)).unwrap();
        c.near(&format!("{sharing:?}/{kind:?} MEL"), l.mel, mel, TOL);
        c.near(&format!("{sharing:?}/{kind:?} MI"), l.mi, mi, TOL);
    }
}

// Property suites.

const MEASURES: [Measure; 4] = [
    Measure::MutualInformation,
    Measure::MinEntropyLeakage,
    Measure::ShannonCapacity,
    Measure::MinCapacity,
];

/// Blahut-Arimoto stops at a 1e-9 gap, so capacities compare looser.
fn measure_tol(m: Measure) -> f64 {
    if m == Measure::ShannonCapacity {
        1e-8
    } else {
        1e-9
    }
}

fn small_instance(rng: &mut ChaCha8Rng) -> (Channel, Prior) {
    let alphabet = [Action::Tau, Action::out("a", "0"), Action::out("a", "1"), Action::out("b", "0")];
    loop {
        let count = rng.gen_range(2..=6);
        let ys = random_traces(rng, &alphabet, count, 3);
        if ys.len() >= 2 {
            let n = rng.gen_range(2..=4);
            let k = random_channel(rng, secrets(n), ys);
            let p = random_prior(rng, k.secrets().to_vec());
            return (k, p);
        }
    }
}

fn random_equivalence(rng: &mut ChaCha8Rng, ys: &[Trace]) -> Equivalence {
    match rng.gen_range(0..4) {
        0 => Equivalence::Weak,
        1 => Equivalence::NameBlind,
        2 => Equivalence::Universal,
        _ => {
            let k = rng.gen_range(1..=ys.len());
            let mut reps: BTreeMap<usize, Trace> = BTreeMap::new();
            let mut map = BTreeMap::new();
            for y in ys {
                let class = rng.gen_range(0..k);
                let rep = reps.entry(class).or_insert_with(|| y.clone()).clone();
                map.insert(y.clone(), rep);
            }
            Equivalence::Partition(map)
        }
    }
}

/// A probabilistic observer whose rows agree on `eq`-equivalent traces.
fn random_sim_observer(rng: &mut ChaCha8Rng, eq: &Equivalence, ys: &[Trace]) -> Observer {
    let views = rng.gen_range(1..=4);
    let mut per_class: BTreeMap<Trace, Vec<f64>> = BTreeMap::new();
    let dense: Vec<Vec<f64>> = ys
        .iter()
        .map(|y| per_class.entry(eq.canonical(y)).or_insert_with(|| random_dist(rng, views)).clone())
        .collect();
    let vs = canonical_set((0..views).map(|i| t(&format!("view:{i}"))));
    Observer::from_dense(ys.to_vec(), vs, &dense).unwrap()
}

fn all_measures(p: &Prior, k: &Channel, o: &Observer) -> Vec<f64> {
    MEASURES.iter().map(|&m| observed(m, p, k, o).unwrap()).collect()
}

/// `O1 = O2 . K'` for a random channel `K'` on the views of `O2`.
fn refine(rng: &mut ChaCha8Rng, o2: &Observer) -> Observer {
    let views = rng.gen_range(1..=4);
    let k: Vec<Vec<f64>> = o2.views().iter().map(|_| random_dist(rng, views)).collect();
    let kp = Matrix::from_dense(views, &k);
    let m = o2.matrix().mul(&kp);
    let vs = canonical_set((0..views).map(|i| t(&format!("view:{i}"))));
    Observer::new(o2.outputs().to_vec(), vs, m).unwrap()
}

fn criterion_11(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Any two deterministic observers for one equivalence agree.
    for _ in 0..CASES {
        let (k, p) = small_instance(&mut rng);
        let eq = random_equivalence(&mut rng, k.outputs());
        let o1 = det_observer(&eq, k.outputs());
        let o2 = relabeled(&mut rng, &o1);
        for ((m, a), b) in MEASURES.iter().zip(all_measures(&p, &k, &o1)).zip(all_measures(&p, &k, &o2)) {
            c.near(&format!("relabeled deterministic observer {m}"), a, b, measure_tol(*m));
        }
    }

    // 0 <= observed <= unobserved, with the unit and perfect endpoints.
    for _ in 0..CASES {
        let (k, p) = small_instance(&mut rng);
        let views = rng.gen_range(1..=5);
        let o = random_observer(&mut rng, k.outputs(), views);
        let unit = unit_observer(k.outputs());
        let perfect = perfect_observer(k.outputs());
        for &m in &MEASURES {
            let raw = leakmix::measures::evaluate(m, &p, &k).unwrap();
            let seen = observed(m, &p, &k, &o).unwrap();
            let tol = measure_tol(m);
            c.holds(&format!("{m}: 0 <= {seen} <= {raw}"), -tol <= seen && seen <= raw + tol);
            c.near(&format!("{m} under unit observer"), observed(m, &p, &k, &unit).unwrap(), 0.0, tol);
            c.near(&format!("{m} under perfect observer"), observed(m, &p, &k, &perfect).unwrap(), raw, tol);
        }
    }

    // A probabilistic ~-observer factors through the deterministic one.
    for _ in 0..CASES {
        let (k, _) = small_instance(&mut rng);
        let eq = random_equivalence(&mut rng, k.outputs());
        let o1 = random_sim_observer(&mut rng, &eq, k.outputs());
        let o2 = det_observer(&eq, k.outputs());
        c.holds("refinement witness exists", refinement_witness(&o1, &o2).unwrap().is_some());
    }

    // Refined observers never see more.
    for _ in 0..CASES {
        let (k, p) = small_instance(&mut rng);
        let views = rng.gen_range(1..=5);
        let o2 = random_observer(&mut rng, k.outputs(), views);
        let o1 = refine(&mut rng, &o2);
        for ((m, a), b) in MEASURES.iter().zip(all_measures(&p, &k, &o1)).zip(all_measures(&p, &k, &o2)) {
            c.holds(&format!("refined {m} {a} > {b}"), a <= b + measure_tol(*m));
        }
    }

    independence_cases(c, &mut rng);
    blind_cases(c, &mut rng);

    // Min-capacity is the supremum of min-entropy leakage.
    for _ in 0..CASES {
        let (k, _) = small_instance(&mut rng);
        let mc = min_capacity(&k);
        let mut sup: f64 = 0.0;
        for _ in 0..1000 {
            let p = random_dist(&mut rng, k.secrets().len());
            sup = sup.max(min_entropy_leakage(&p, &k).unwrap());
        }
        c.holds(&format!("random prior MEL {sup} above MC {mc}"), sup <= mc + 1e-9);
        let n = k.secrets().len();
        c.near("MC attained by the uniform prior", min_entropy_leakage(&vec![1.0 / n as f64; n], &k).unwrap(), mc, 1e-6);
        // Uniform over the rows holding some column maximum.
        let maxima = k.matrix().column_max();
        let rows: Vec<bool> = k
            .matrix()
            .rows()
            .map(|r| r.iter().any(|&(y, v)| v > 0.0 && v >= maxima[y]))
            .collect();
        let m = rows.iter().filter(|&&b| b).count() as f64;
        let pi: Vec<f64> = rows.iter().map(|&b| if b { 1.0 / m } else { 0.0 }).collect();
        c.near("MC attained over the argmax rows", min_entropy_leakage(&pi, &k).unwrap(), mc, 1e-6);
    }

    for _ in 0..CASES {
        let (k, _) = small_instance(&mut rng);
        let sc = shannon_capacity(&k).unwrap();
        c.holds(&format!("SC {sc} above MC"), sc <= min_capacity(&k) + 1e-9);
    }
}

/// The parallel output each interleaved trace decodes to.
fn decoding(y1: &[Trace], y2: &[Trace]) -> BTreeMap<Trace, Trace> {
    let sep = Trace::new(vec![Action::separator()]);
    let mut map = BTreeMap::new();
    for a in y1 {
        for b in y2 {
            for y in interleave_pair(a, b).unwrap() {
                map.insert(y, a.concat(&sep).concat(b));
            }
        }
    }
    map
}

fn independence_cases(c: &mut Check, rng: &mut ChaCha8Rng) {
    let left = [Action::Tau, Action::out("m1", "0"), Action::out("m1", "1")];
    let right = [Action::out("m2", "0"), Action::out("m2", "1")];
    let shared = [Action::Tau, Action::out("a", "0"), Action::out("b", "0")];
    let mut done = 0;
    while done < CASES {
        let (y1, y2) = if done % 2 == 0 {
            (random_traces(rng, &left, 3, 2), random_traces(rng, &right, 2, 2))
        } else {
            (random_traces(rng, &shared, 3, 2), random_traces(rng, &shared, 2, 2))
        };
        if disjoint_actions(&y1, &y2) {
            c.holds("disjoint actions imply the certificate", independence_certificate(&y1, &y2).unwrap().is_none());
        }
        if independence_certificate(&y1, &y2).unwrap().is_some() {
            continue;
        }
        done += 1;
        let n1 = rng.gen_range(1..=3);
        let k1 = random_channel(rng, secrets(n1), y1.clone());
        let n2 = rng.gen_range(1..=3);
        let k2 = random_channel(rng, secrets(n2), y2.clone());
        let s = random_scheduler(rng, &y1, &y2);
        let k = scheduled_compose(&k1, &k2, &s).unwrap();
        let par = parallel_compose(&k1, &k2).unwrap();
        let p = random_prior(rng, par.secrets().to_vec());

        let views = rng.gen_range(1..=4);
        let o_par = random_observer(rng, par.outputs(), views);
        let dec = decoding(&y1, &y2);
        let row_of: BTreeMap<&Trace, usize> = o_par.outputs().iter().enumerate().map(|(i, y)| (y, i)).collect();
        let dense = o_par.matrix().to_dense();
        let rows: Vec<Vec<f64>> = k.outputs().iter().map(|y| dense[row_of[&dec[y]]].clone()).collect();
        let o_k = Observer::from_dense(k.outputs().to_vec(), o_par.views().to_vec(), &rows).unwrap();

        for &m in &MEASURES {
            let tol = measure_tol(m);
            let a = leakmix::measures::evaluate(m, &p, &k).unwrap();
            let b = leakmix::measures::evaluate(m, &p, &par).unwrap();
            c.near(&format!("certified {m}"), a, b, tol);
            let a = observed(m, &p, &k, &o_k).unwrap();
            let b = observed(m, &p, &par, &o_par).unwrap();
            c.near(&format!("certified observed {m}"), a, b, tol);
        }
    }
}

fn blind_cases(c: &mut Check, rng: &mut ChaCha8Rng) {
    let left = [Action::Tau, Action::out("m1", "0"), Action::out("m1", "1")];
    let right = [Action::Tau, Action::out("m2", "0"), Action::out("m2", "1")];
    let (mut done, mut deterministic, mut attempts) = (0, 0, 0);
    while done < CASES && attempts < 50 * CASES {
        attempts += 1;
        let count1 = rng.gen_range(1..=3);
        let y1 = random_traces(rng, &left, count1, 2);
        let count2 = rng.gen_range(1..=3);
        let y2 = random_traces(rng, &right, count2, 2);
        let s = match attempts % 3 {
            0 => Scheduler::ds(&y1, &y2).unwrap(),
            1 => Scheduler::fs(&y1, &y2).unwrap(),
            _ => random_scheduler(rng, &y1, &y2),
        };
        if !s.is_sim_blind(&Equivalence::Weak) {
            continue;
        }
        done += 1;
        let n1 = rng.gen_range(1..=3);
        let k1 = random_channel(rng, secrets(n1), y1.clone());
        let n2 = rng.gen_range(1..=3);
        let k2 = random_channel(rng, secrets(n2), y2.clone());
        let k = scheduled_compose(&k1, &k2, &s).unwrap();
        let par = parallel_compose(&k1, &k2).unwrap();
        let p = random_prior(rng, par.secrets().to_vec());
        let a = all_measures(&p, &k, &weak(&k));
        let b = all_measures(&p, &par, &weak(&par));
        for ((m, a), b) in MEASURES.iter().zip(a).zip(b) {
            let tol = measure_tol(*m);
            if s.is_deterministic() {
                c.near(&format!("blind deterministic {m}"), a, b, tol);
            } else {
                c.holds(&format!("blind scheduler {m}: {a} > {b}"), a <= b + tol);
            }
        }
        if s.is_deterministic() {
            deterministic += 1;
        }
    }
    c.holds(&format!("only {done} blind cases found"), done == CASES);
    c.note(format!("{done} blind schedulers, {deterministic} deterministic"));
}

fn main() {
    // Keep per-criterion panics on their report line.
    std::panic::set_hook(Box::new(|_| {}));
    let start = Instant::now();
    let statuses = [
        run(1, "sequential scheduling of the two tables", criterion_1),
        run(2, "fair sequential scheduling equals parallel composition", criterion_2),
        run(3, "fair interleaving mutual information", criterion_3),
        run(4, "weak observer on interleaved and parallel compositions", criterion_4),
        run(5, "observer ordering and tau-misplacement observer", criterion_5),
        run(6, "LP-minimized leakage and capacity", criterion_6),
        run(7, "LP self-consistency and brute-force search", criterion_7),
        run(8, "voting mix network", criterion_8),
        run(9, "voting with silent steps", criterion_9),
        run(10, "timing side channel", criterion_10),
        run(11, "randomized property suites", criterion_11),
    ];
    let count = |s: Status| statuses.iter().filter(|&&x| x == s).count();
    println!(
        "acceptance: {} passed, {} gated, {} failed in {:.1}s",
        count(Status::Pass),
        count(Status::Gated),
        count(Status::Fail),
        start.elapsed().as_secs_f64()
    );
    if count(Status::Fail) > 0 {
        std::process::exit(1);
    }
}
