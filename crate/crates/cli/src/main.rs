//! `leakmix`: leakage of scheduler-composed trace channels from JSON models.

mod error;
mod model;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leakmix::channel::{Channel, Prior};
use leakmix::interleave::{
    can_alter_leakage, default_ceiling, disjoint_actions, independence_certificate,
    interleave_n_with_ceiling,
};
use leakmix::measures::{evaluate, Measure};
use leakmix::minimize::{
    build_min_leakage_lp_n, build_tree_slot_lp, extract, minimize_tree_slot, solve_lp, MinLeakage, MinLeakageProgram,
};
use leakmix::observer::{observe, Equivalence};
use leakmix::scenarios::{
    build_sidechannel, build_voting, leakage, minimize_voting_slot, sidechannel_observer,
    voting_observer, voting_prior, voting_single_scheduler_min_capacity, ObserverKind, Sharing,
    SideChannelModel, TraceModel, VotingModel,
};
use leakmix::scheduler::{compose_tree, scheduled_compose_n, CompositionTree, Scheduler, SchedulerKind};
use leakmix::trace::Trace;
use serde_json::{json, Map, Value};

use error::CliError;
use model::{parse_document, ChannelDoc, Document};

#[derive(Parser)]
#[command(name = "leakmix", version, about = "Information leakage of scheduler-composed trace channels")]
struct Cli {
    /// Print numbers in full precision instead of 4 decimals.
    #[arg(long, global = true)]
    full_precision: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every definition in a model resolves and validates.
    Validate { model: PathBuf },
    /// Enumerate the interleavings of two trace sets.
    Interleave {
        /// First trace set; traces in compact form (`tau,m1:0`), separated by `;`.
        #[arg(long, value_delimiter = ';', required = true)]
        y1: Vec<String>,
        #[arg(long, value_delimiter = ';', required = true)]
        y2: Vec<String>,
        /// Override the enumeration ceiling.
        #[arg(long)]
        ceiling: Option<u64>,
    },
    /// Compose channels under a scheduler, or fold a tree.
    Compose {
        model: PathBuf,
        #[command(flatten)]
        target: Target,
        /// Scheduler name or kind for `--channels`.
        #[arg(long, default_value = "ds")]
        scheduler: String,
    },
    /// Evaluate leakage measures.
    Measure {
        model: PathBuf,
        /// Measures: mi, sc, mel, mc, vprior, vpost, or all. Without
        /// `--channel`, runs the model's requests.
        #[arg(long, value_delimiter = ',', default_value = "mel,mi")]
        measure: Vec<String>,
        /// Channel or tree name.
        #[arg(long)]
        channel: Option<String>,
        #[arg(long)]
        prior: Option<String>,
        /// Observer name or kind; the channel is measured unobserved if absent.
        #[arg(long)]
        observer: Option<String>,
    },
    /// Synthesize a scheduler minimizing observed leakage.
    MinScheduler(MinArgs),
    /// Check whether scheduling can change the leakage of two channels.
    Certificate {
        model: PathBuf,
        /// Exactly two channel names.
        #[arg(long, value_delimiter = ',', required = true)]
        channels: Vec<String>,
        /// Also test this scheduler for blindness under `--equivalence`.
        #[arg(long)]
        scheduler: Option<String>,
        #[arg(long, value_enum, default_value = "weak")]
        equivalence: EquivalenceArg,
    },
    /// Run one of the built-in case studies.
    CaseStudy {
        #[command(subcommand)]
        study: Study,
    },
    /// Write the minimization program in CPLEX LP format.
    LpExport {
        #[command(flatten)]
        args: MinArgs,
        /// Output file; standard output if absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Target {
    /// Tree name.
    #[arg(long, conflicts_with = "channels")]
    tree: Option<String>,
    /// Channel names, composed in order.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
}

#[derive(Args)]
struct MinArgs {
    model: PathBuf,
    #[command(flatten)]
    target: Target,
    /// Prior name; ignored for min-capacity.
    #[arg(long)]
    prior: Option<String>,
    /// Observer name or kind.
    #[arg(long, default_value = "perfect")]
    observer: String,
    #[arg(long, value_enum, default_value = "mel")]
    objective: Objective,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Objective {
    /// Min-entropy leakage under the prior.
    Mel,
    /// Min-capacity.
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum EquivalenceArg {
    Strong,
    Weak,
    NameBlind,
    Universal,
}

#[derive(Subcommand)]
enum Study {
    /// Five voters through a mix network of four servers.
    Voting {
        #[arg(long, value_enum, default_value = "fi")]
        schedulers: VotingSchedulers,
        /// Voters (1-5) whose ballot follows a silent step, e.g. `1,2`.
        #[arg(long, value_delimiter = ',')]
        tau_prefix: Vec<usize>,
        #[arg(long, value_enum, default_value = "perfect")]
        observer: StudyObserver,
        /// Minimum min-capacity over one scheduler receiving all ballots.
        #[arg(long)]
        single_scheduler: bool,
    },
    /// Two scheduled runs of a key-dependent loop.
    SideChannel {
        #[arg(long, value_enum, default_value = "independent")]
        sharing: SharingArg,
        #[arg(long, value_enum, default_value = "perfect")]
        observer: StudyObserver,
        #[arg(long, default_value_t = 3)]
        bits: usize,
        #[arg(long, default_value = "fi")]
        scheduler: String,
        #[arg(long, value_enum, default_value = "per-bit")]
        trace_model: TraceModelArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VotingSchedulers {
    Ds,
    Fs,
    Fi,
    /// FS at A and B, FI at S2, uniform insertion at S1.
    Mixed,
    /// As `mixed`, with S1 minimized by LP.
    MixedLp,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyObserver {
    Perfect,
    Weak,
    Noisy,
}

#[derive(Clone, Copy, ValueEnum)]
enum SharingArg {
    Independent,
    Shared,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceModelArg {
    PerBit,
    TauThenOutput,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Reply::Json(v)) => {
            print!("{}", output::render(&v, cli.full_precision));
            ExitCode::SUCCESS
        }
        Ok(Reply::Text(s)) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Ok(Reply::Invalid(v)) => {
            print!("{}", output::render(&v, cli.full_precision));
            ExitCode::from(3)
        }
        Err(e) => {
            let v = json!({ "error": e.kind(), "message": e.to_string() });
            eprint!("{}", output::render(&v, true));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

enum Reply {
    Json(Value),
    Text(String),
    /// A report that is printed but fails the run.
    Invalid(Value),
}

fn run(cmd: Command) -> Result<Reply, CliError> {
    match cmd {
        Command::Validate { model } => validate(&load(&model)?),
        Command::Interleave { y1, y2, ceiling } => interleave(&y1, &y2, ceiling),
        Command::Compose {
            model,
            target,
            scheduler,
        } => {
            let doc = load(&model)?;
            let c = match target_of(&doc, &target)? {
                Composite::Tree(t) => compose_tree(&t)?,
                Composite::Channels(cs) => compose_channels(&doc, &cs, &scheduler)?,
            };
            Ok(Reply::Json(serde_json::to_value(ChannelDoc::from_channel(&c)).expect("plain data")))
        }
        Command::Measure {
            model,
            measure,
            channel,
            prior,
            observer,
        } => {
            let doc = load(&model)?;
            match channel {
                Some(c) => Ok(Reply::Json(measure_one(&doc, &measure, &c, prior.as_deref(), observer.as_deref())?)),
                None if doc.requests.is_empty() => Err(CliError::Usage(
                    "give --channel or add requests to the model".into(),
                )),
                None => {
                    let results = doc
                        .requests
                        .iter()
                        .map(|r| {
                            measure_one(&doc, &r.measure.items(), &r.channel, r.prior.as_deref(), r.observer.as_deref())
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Reply::Json(Value::Array(results)))
                }
            }
        }
        Command::MinScheduler(args) => min_scheduler(&args),
        Command::Certificate {
            model,
            channels,
            scheduler,
            equivalence,
        } => certificate(&load(&model)?, &channels, scheduler.as_deref(), equivalence),
        Command::CaseStudy { study } => case_study(study),
        Command::LpExport { args, output } => {
            let doc = load(&args.model)?;
            let (prog, _) = program(&doc, &args)?;
            let text = prog.lp.to_lp_format();
            match output {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|source| CliError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    Ok(Reply::Json(json!({
                        "written": path.display().to_string(),
                        "variables": prog.lp.num_vars(),
                        "inequalities": prog.num_inequalities(),
                        "equalities": prog.num_equalities(),
                    })))
                }
                None => Ok(Reply::Text(text)),
            }
        }
    }
}

fn load(path: &Path) -> Result<Document, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_document(&text)
}

fn compact(ts: &[Trace]) -> Vec<String> {
    ts.iter().map(Trace::to_compact).collect()
}

fn validate(doc: &Document) -> Result<Reply, CliError> {
    let mut errors = Vec::new();
    let mut note = |what: String, r: Result<(), CliError>| {
        if let Err(e) = r {
            errors.push(json!({ "item": what, "error": e.kind(), "message": e.to_string() }));
        }
    };
    for name in doc.channels.keys() {
        note(format!("channel {name}"), doc.channel(name).map(drop));
    }
    for name in doc.trees.keys() {
        note(format!("tree {name}"), doc.tree(name).map(drop));
    }
    for name in doc.priors.keys() {
        note(format!("prior {name}"), doc.prior(name).map(drop));
    }
    for (name, s) in &doc.schedulers {
        if let model::SchedulerDoc::Explicit { domain, .. } = s {
            let d: Vec<Vec<Trace>> = domain.iter().map(|v| v.iter().map(|t| t.0.clone()).collect()).collect();
            note(format!("scheduler {name}"), doc.scheduler(name, &d).map(drop));
        }
    }
    for (name, o) in &doc.observers {
        if let model::ObserverDoc::Explicit { outputs, .. } = o {
            let ys: Vec<Trace> = outputs.iter().map(|t| t.0.clone()).collect();
            note(format!("observer {name}"), doc.observer(name, &ys).map(drop));
        }
    }
    for (i, r) in doc.requests.iter().enumerate() {
        let check = || -> Result<(), CliError> {
            doc.channel(&r.channel)?;
            if let Some(p) = &r.prior {
                doc.prior(p)?;
            }
            for m in r.measure.items() {
                parse_measures(&[m])?;
            }
            Ok(())
        };
        note(format!("request {i}"), check());
    }
    let summary = json!({
        "valid": errors.is_empty(),
        "channels": doc.channels.len(),
        "priors": doc.priors.len(),
        "schedulers": doc.schedulers.len(),
        "observers": doc.observers.len(),
        "trees": doc.trees.len(),
        "requests": doc.requests.len(),
        "errors": errors,
    });
    Ok(if errors.is_empty() {
        Reply::Json(summary)
    } else {
        Reply::Invalid(summary)
    })
}

fn parse_traces(v: &[String]) -> Result<Vec<Trace>, CliError> {
    Ok(v.iter().map(|s| Trace::parse_compact(s)).collect::<Result<Vec<_>, _>>()?)
}

fn interleave(y1: &[String], y2: &[String], ceiling: Option<u64>) -> Result<Reply, CliError> {
    let sets = vec![parse_traces(y1)?, parse_traces(y2)?];
    let ys = interleave_n_with_ceiling(&sets, ceiling.unwrap_or_else(default_ceiling))?;
    Ok(Reply::Json(json!({ "count": ys.len(), "traces": compact(&ys) })))
}

enum Composite {
    Tree(CompositionTree),
    Channels(Vec<Channel>),
}

fn target_of(doc: &Document, t: &Target) -> Result<Composite, CliError> {
    match (&t.tree, t.channels.as_slice()) {
        (Some(name), _) => Ok(Composite::Tree(doc.tree(name)?)),
        (None, []) => Err(CliError::Usage("give --tree or --channels".into())),
        (None, names) => Ok(Composite::Channels(
            names.iter().map(|n| doc.channel(n)).collect::<Result<_, _>>()?,
        )),
    }
}

fn compose_channels(doc: &Document, cs: &[Channel], scheduler: &str) -> Result<Channel, CliError> {
    if cs.len() == 1 {
        return Ok(cs[0].clone());
    }
    let domain: Vec<Vec<Trace>> = cs.iter().map(|c| c.outputs().to_vec()).collect();
    let s = doc.scheduler(scheduler, &domain)?;
    let refs: Vec<&Channel> = cs.iter().collect();
    Ok(scheduled_compose_n(&refs, &s, Default::default())?)
}

fn parse_measures(names: &[String]) -> Result<Vec<Measure>, CliError> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(Measure::ALL);
        } else {
            out.push(n.parse::<Measure>()?);
        }
    }
    Ok(out)
}

fn measure_one(
    doc: &Document,
    measures: &[String],
    channel: &str,
    prior: Option<&str>,
    observer: Option<&str>,
) -> Result<Value, CliError> {
    let measures = parse_measures(measures)?;
    let c = doc.channel(channel)?;
    let seen = match observer {
        Some(o) => observe(&c, &doc.observer(o, c.outputs())?)?,
        None => c,
    };
    let prior_name = prior;
    let prior = prior.map(|p| doc.prior(p)).transpose()?;
    let mut results = Map::new();
    for m in measures {
        let v = match (&prior, m.needs_prior()) {
            (Some(p), _) => evaluate(m, p, &seen)?,
            (None, false) => evaluate(m, &Prior::uniform(seen.secrets().to_vec())?, &seen)?,
            (None, true) => {
                return Err(CliError::Usage(format!("measure `{m}` needs --prior")));
            }
        };
        results.insert(m.id().to_string(), json!(v));
    }
    Ok(json!({
        "channel": channel,
        "prior": prior_name,
        "observer": observer,
        "results": results,
    }))
}

/// The minimization program and the channels or tree it ranges over.
fn program(doc: &Document, args: &MinArgs) -> Result<(MinLeakageProgram, Composite), CliError> {
    let target = target_of(doc, &args.target)?;
    match &target {
        Composite::Tree(t) => {
            let o = doc.observer(&args.observer, &t.output_set()?)?;
            let prior = objective_prior(doc, args, t.secrets())?;
            Ok((build_tree_slot_lp(t, &prior, &o)?, target))
        }
        Composite::Channels(cs) => {
            let refs: Vec<&Channel> = cs.iter().collect();
            let sets: Vec<Vec<Trace>> = cs.iter().map(|c| c.outputs().to_vec()).collect();
            let o = doc.observer(&args.observer, &interleave_n_with_ceiling(&sets, default_ceiling())?)?;
            let secrets = scheduled_compose_n(&refs, &Scheduler::build(SchedulerKind::Ds, &sets)?, Default::default())?
                .secrets()
                .to_vec();
            let prior = objective_prior(doc, args, secrets)?;
            Ok((build_min_leakage_lp_n(&prior, &refs, &o)?, target))
        }
    }
}

fn objective_prior(doc: &Document, args: &MinArgs, secrets: Vec<leakmix::channel::Secret>) -> Result<Prior, CliError> {
    match (args.objective, &args.prior) {
        (Objective::Mc, _) => Ok(Prior::uniform(secrets)?),
        (Objective::Mel, Some(p)) => doc.prior(p),
        (Objective::Mel, None) => Err(CliError::Usage("min-entropy leakage needs --prior".into())),
    }
}

fn min_scheduler(args: &MinArgs) -> Result<Reply, CliError> {
    let doc = load(&args.model)?;
    let target = target_of(&doc, &args.target)?;
    let result: MinLeakage = match &target {
        Composite::Tree(t) => {
            let o = doc.observer(&args.observer, &t.output_set()?)?;
            let prior = objective_prior(&doc, args, t.secrets())?;
            minimize_tree_slot(t, &prior, &o)?.result
        }
        Composite::Channels(_) => {
            let (prog, _) = program(&doc, args)?;
            extract(&prog, &solve_lp(&prog)?)?
        }
    };
    let objective = match args.objective {
        Objective::Mel => "mel",
        Objective::Mc => "mc",
    };
    Ok(Reply::Json(json!({
        "objective": objective,
        "value": result.mel,
        "posterior_vulnerability": result.objective,
        "iterations": result.iterations,
        "scheduler": scheduler_json(&result.scheduler),
    })))
}

fn scheduler_json(s: &Scheduler) -> Value {
    let rows: Vec<Value> = s
        .rows()
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let dist: Map<String, Value> = row
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(y, p)| (y.to_compact(), json!(p)))
                .collect();
            let inputs: Vec<String> = s.tuple(r).iter().map(|t| t.to_compact()).collect();
            json!({ "inputs": inputs, "dist": dist })
        })
        .collect();
    let domain: Vec<Vec<String>> = s.domain().iter().map(|d| compact(d)).collect();
    json!({ "domain": domain, "rows": rows, "deterministic": s.is_deterministic() })
}

fn certificate(
    doc: &Document,
    names: &[String],
    scheduler: Option<&str>,
    eq: EquivalenceArg,
) -> Result<Reply, CliError> {
    let [a, b] = names else {
        return Err(CliError::Usage("certificate takes exactly two channels".into()));
    };
    let (c1, c2) = (doc.channel(a)?, doc.channel(b)?);
    let (y1, y2) = (c1.outputs(), c2.outputs());
    let collision = independence_certificate(y1, y2)?.map(|c| {
        json!({
            "first": [c.first.0.to_compact(), c.first.1.to_compact()],
            "second": [c.second.0.to_compact(), c.second.1.to_compact()],
            "shared": c.shared.to_compact(),
        })
    });
    let mut v = json!({
        "independent": collision.is_none(),
        "collision": collision,
        "disjoint_actions": disjoint_actions(y1, y2),
        "can_alter_leakage": can_alter_leakage(y1, y2)?,
    });
    if let Some(s) = scheduler {
        let s = doc.scheduler(s, &[y1.to_vec(), y2.to_vec()])?;
        let eq = match eq {
            EquivalenceArg::Strong => Equivalence::Strong,
            EquivalenceArg::Weak => Equivalence::Weak,
            EquivalenceArg::NameBlind => Equivalence::NameBlind,
            EquivalenceArg::Universal => Equivalence::Universal,
        };
        v["sim_blind"] = json!(s.is_sim_blind(&eq));
        v["deterministic"] = json!(s.is_deterministic());
    }
    Ok(Reply::Json(v))
}

fn study_observer(o: StudyObserver) -> ObserverKind {
    match o {
        StudyObserver::Perfect => ObserverKind::Perfect,
        StudyObserver::Weak => ObserverKind::Weak,
        StudyObserver::Noisy => ObserverKind::Noisy,
    }
}

fn case_study(study: Study) -> Result<Reply, CliError> {
    match study {
        Study::Voting {
            schedulers,
            tau_prefix,
            observer,
            single_scheduler,
        } => {
            let kind = study_observer(observer);
            if single_scheduler {
                let r = voting_single_scheduler_min_capacity(kind)?;
                return Ok(Reply::Json(json!({ "min_capacity": r.mel, "iterations": r.iterations })));
            }
            if let Some(v) = tau_prefix.iter().find(|&&v| v == 0 || v > 5) {
                return Err(CliError::Usage(format!("voter {v} is not in 1..=5")));
            }
            let voters: Vec<usize> = tau_prefix.iter().map(|v| v - 1).collect();
            let base = match schedulers {
                VotingSchedulers::Ds => VotingModel::uniform(SchedulerKind::Ds),
                VotingSchedulers::Fs => VotingModel::uniform(SchedulerKind::Fs),
                VotingSchedulers::Fi => VotingModel::uniform(SchedulerKind::Fi),
                VotingSchedulers::Mixed => VotingModel::mixed(),
                VotingSchedulers::MixedLp => VotingModel::mixed_open(),
            };
            let model = base.with_tau_prefix(&voters);
            let (c, p) = match schedulers {
                VotingSchedulers::MixedLp => {
                    let slot = minimize_voting_slot(&model, kind)?;
                    (slot.channel, voting_prior(&model)?)
                }
                _ => build_voting(&model)?,
            };
            let o = voting_observer(kind, c.outputs())?;
            let l = leakage(&p, &c, Some(&o))?;
            Ok(Reply::Json(json!({ "mel": l.mel, "mi": l.mi, "outputs": c.outputs().len() })))
        }
        Study::SideChannel {
            sharing,
            observer,
            bits,
            scheduler,
            trace_model,
        } => {
            let model = SideChannelModel {
                bits,
                sharing: match sharing {
                    SharingArg::Independent => Sharing::Independent,
                    SharingArg::Shared => Sharing::Shared,
                },
                scheduler: scheduler.parse()?,
                trace_model: match trace_model {
                    TraceModelArg::PerBit => TraceModel::PerBit,
                    TraceModelArg::TauThenOutput => TraceModel::TauThenOutput,
                },
            };
            let (c, p) = build_sidechannel(&model)?;
            let o = sidechannel_observer(study_observer(observer), c.outputs())?;
            let l = leakage(&p, &c, Some(&o))?;
            Ok(Reply::Json(json!({ "mel": l.mel, "mi": l.mi, "outputs": c.outputs().len() })))
        }
    }
}
