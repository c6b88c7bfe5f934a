use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leakmix::lp::solve_with;
use leakmix::lp::DEFAULT_MAX_ITERATIONS;
use leakmix::minimize::build_tree_slot_lp_with;
use leakmix::observer::{det_observer, observe_with, Equivalence};
use leakmix::par::Execution;
use leakmix::scenarios::{voting_observer, voting_prior, voting_tree, ObserverKind, VotingModel};
use leakmix::scheduler::{compose_tree_with, SchedulerKind};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn composition(c: &mut Criterion) {
    let tree = voting_tree(&VotingModel::uniform(SchedulerKind::Fi).with_tau_prefix(&[0, 1, 2, 3, 4]));
    let mut g = c.benchmark_group("compose_tree");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| compose_tree_with(&tree, mode).unwrap())
        });
    }
    g.finish();
}

fn observation(c: &mut Criterion) {
    let tree = voting_tree(&VotingModel::uniform(SchedulerKind::Fi).with_tau_prefix(&[0, 1, 2, 3, 4]));
    let k = compose_tree_with(&tree, Execution::Parallel).unwrap();
    let o = det_observer(&Equivalence::Weak, k.outputs());
    let mut g = c.benchmark_group("observe");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| observe_with(&k, &o, mode).unwrap())
        });
    }
    g.finish();
}

fn simplex(c: &mut Criterion) {
    let model = VotingModel::mixed_open();
    let tree = voting_tree(&model);
    let o = voting_observer(ObserverKind::Perfect, &tree.output_set().unwrap()).unwrap();
    let prior = voting_prior(&model).unwrap();
    let prog = build_tree_slot_lp_with(&tree, &prior, &o, Execution::Parallel).unwrap();
    let mut g = c.benchmark_group("simplex");
    g.sample_size(20);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_with(&prog.lp, mode, DEFAULT_MAX_ITERATIONS).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, composition, observation, simplex);
criterion_main!(benches);
