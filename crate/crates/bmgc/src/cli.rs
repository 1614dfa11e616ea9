//! Batch command-line front end.
//!
//! Results go to stdout as JSON; logs go to stderr. Exit codes: 0 success,
//! 1 usage error, 2 data error, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
use crate::dataset::{load_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::MultiRelationalGraph;
use crate::metrics::{linear_probe, ViewQualityReport};
use crate::propagate::{aggregate_views, sgc_aggregate};
use crate::seed::SeedStream;
use crate::sparse::normalize_adjacency;
use crate::theory::{lemma1_check, theorem1_check, TwoBlockModel};
use crate::trainer::{save_checkpoint, train, write_history, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "bmgc",
    about = "Balanced multi-relational graph clustering: synthetic benchmarks, view-quality metrics, training, evaluation, and theory checks",
    version
)]
struct Cli {
    /// Cap internal parallelism (defaults to the available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a multi-view contextual-SBM benchmark dataset.
    Generate(GenerateArgs),
    /// Train the clustering model on a dataset directory.
    Train(TrainArgs),
    /// Score saved assignments against dataset labels.
    Eval(EvalArgs),
    /// Supervised view-quality report (aggregation class distance).
    Acd(AcdArgs),
    /// Unsupervised dominant-view mining report.
    Mine(MineArgs),
    /// Linear-probe accuracy per view.
    Probe(ProbeArgs),
    /// Numeric verification of the two-block aggregation theory.
    VerifyTheory(VerifyTheoryArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Homophily control in [-1, 1].
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    /// Perturbation ratio for the non-dominant views.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 3)]
    views: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    df: usize,
    /// Average degree.
    #[arg(long, default_value_t = 5.0)]
    deg: f64,
    #[arg(long, default_value_t = 3.25)]
    eps: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    clusters: usize,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 50)]
    t_recalc: usize,
    #[arg(long, default_value_t = 10)]
    dr: usize,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epoch at which the self-training loss activates.
    #[arg(long, default_value_t = 50)]
    clu_warmup: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// assignments.txt produced by train (one cluster id per line).
    #[arg(long)]
    assignments: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AcdArgs {
    #[arg(long)]
    data: PathBuf,
    /// Aggregation depth.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Also run the linear probe per view.
    #[arg(long)]
    probe: bool,
    #[arg(long, default_value_t = 0.3)]
    train_fraction: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Teleport probability for the training-style aggregation.
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.3)]
    train_fraction: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyTheoryArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Number of random strictly-monotone lambda2 triples for the ordering
    /// check.
    #[arg(long, default_value_t = 10)]
    triples: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("BMGC_SEED").ok().and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_run_json<T: Serialize>(dir: &Path, resolved: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text =
        serde_json::to_string_pretty(resolved).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join("run.json"), text)?;
    Ok(())
}

fn maybe_write_report<T: Serialize>(out: &Option<PathBuf>, config: &impl Serialize, report: &T) -> Result<()> {
    if let Some(dir) = out {
        write_run_json(dir, config)?;
        let mut text =
            serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(dir.join("report.json"), text)?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<MultiRelationalGraph> {
    log::info!("loading dataset from {}", path.display());
    load_dataset(path)
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let params = MultiCsbmParams {
        base: CsbmParams {
            n: args.n,
            d_f: args.df,
            avg_degree: args.deg,
            epsilon: args.eps,
            phi: args.phi,
            seed,
        },
        views: args.views,
        rho: args.rho,
    };
    let g = multi_csbm_generate(&params)?;
    write_dataset(&g, &args.out)?;
    write_run_json(&args.out, &json!({ "command": "generate", "params": params }))?;
    let edges: Vec<usize> = g.views().iter().map(|v| v.num_edges()).collect();
    print_json(&json!({
        "out": args.out,
        "n": g.n(),
        "views": g.num_views(),
        "edges_per_view": edges,
        "seed": seed,
    }))
}

fn run_train(args: TrainArgs) -> Result<()> {
    let g = load(&args.data)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        weight_decay: args.weight_decay,
        t_recalc: args.t_recalc,
        d_r: args.dr,
        tau: args.tau,
        hops: args.k,
        alpha: args.alpha,
        clusters: args.clusters,
        seed: resolve_seed(args.seed),
        batch_size: args.batch_size,
        clu_warmup_epochs: args.clu_warmup,
    };
    fs::create_dir_all(&args.out)?;
    write_run_json(
        &args.out,
        &json!({ "command": "train", "data": args.data, "config": cfg }),
    )?;

    let started = std::time::Instant::now();
    let out = train(&g, &cfg)?;
    let elapsed = started.elapsed().as_secs_f64();

    let assignments_path = args.out.join("assignments.txt");
    let mut text = String::new();
    for &a in &out.clusters.assignments {
        text.push_str(&a.to_string());
        text.push('\n');
    }
    fs::write(&assignments_path, text)?;
    write_history(&args.out.join("history.csv"), &out.history)?;
    save_checkpoint(&args.out.join("checkpoint.bin"), &out.state)?;

    let mut summary = json!({
        "out": args.out,
        "seconds": elapsed,
        "init_dominant_view": out.init_dominant_view,
        "final_dominant_view": out.state.dominant_view,
        "inertia": out.clusters.inertia,
        "final_loss": out.history.last().map(|r| r.total),
    });
    if let Some(labels) = g.labels() {
        let report = evaluate(&out.clusters.assignments, labels)?;
        summary["eval"] = serde_json::to_value(report).unwrap();
    }
    print_json(&summary)
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let g = load(&args.data)?;
    let labels = g
        .labels()
        .ok_or_else(|| Error::LabelRange("dataset has no labels to evaluate against".into()))?;
    let text = fs::read_to_string(&args.assignments)?;
    let pred: Vec<usize> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("invalid cluster id line: {l}")))
        })
        .collect::<Result<_>>()?;
    let report = evaluate(&pred, labels)?;
    maybe_write_report(
        &args.out,
        &json!({ "command": "eval", "data": args.data, "assignments": args.assignments }),
        &report,
    )?;
    print_json(&report)
}

fn run_acd(args: AcdArgs) -> Result<()> {
    let g = load(&args.data)?;
    let labels = g.labels().ok_or_else(|| {
        Error::LabelRange(
            "the aggregation class distance needs labels; use `mine` for unlabeled data".into(),
        )
    })?;
    let seed = resolve_seed(args.seed);
    let x_gram_sq = crate::metrics::gram_self_sq(g.features());
    // Definition-style aggregation: K-hop powers of the no-self-loop
    // normalization. Isolated nodes are dropped per view for the supervised
    // numbers and contribute zero rows to the gram comparison (the zero-row
    // adjacency maps them to zero).
    let mut per_view = Vec::with_capacity(g.num_views());
    for (v, adj) in g.views().iter().enumerate() {
        let (sub, sub_x, sub_y, keep) = crate::csbm::drop_isolated(adj, g.features(), labels)?;
        let norm = normalize_adjacency(&sub, false)?;
        let agg = sgc_aggregate(&norm, sub_x.view(), args.k)?;
        let (agg, _) = crate::linalg::row_l2_normalize(agg.view(), 1e-12);
        let acd_v = crate::metrics::acd(agg.view(), &sub_y)?;
        let hr_v = crate::metrics::edge_homophily(adj, labels)?;
        let probe_v = if args.probe {
            Some(linear_probe(agg.view(), &sub_y, args.train_fraction, seed ^ v as u64)?)
        } else {
            None
        };
        let mut full = Array2::<f64>::zeros(g.features().dim());
        for (new, &old) in keep.iter().enumerate() {
            full.row_mut(old).assign(&agg.row(new));
        }
        let gram_v =
            crate::metrics::gram_discrepancy_pre(x_gram_sq, g.features(), full.view())?;
        per_view.push(crate::metrics::ViewQuality {
            acd: Some(acd_v),
            homophily: Some(hr_v),
            gram_discrepancy: gram_v,
            probe_accuracy: probe_v,
        });
    }
    let dominant_view = per_view
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.gram_discrepancy.partial_cmp(&b.gram_discrepancy).unwrap())
        .map(|(v, _)| v)
        .unwrap_or(0);
    let report = ViewQualityReport { per_view, dominant_view };
    maybe_write_report(
        &args.out,
        &json!({ "command": "acd", "data": args.data, "k": args.k, "seed": seed }),
        &report,
    )?;
    print_json(&report)
}

fn run_mine(args: MineArgs) -> Result<()> {
    let g = load(&args.data)?;
    // training-style aggregation: teleport recurrence on the self-loop
    // normalization (works on any degree distribution)
    let aggregates = aggregate_views(&g, args.k, args.alpha)?;
    let report = ViewQualityReport::build(
        g.features(),
        &aggregates.per_view,
        g.views(),
        g.labels(),
        None,
    )?;
    maybe_write_report(
        &args.out,
        &json!({ "command": "mine", "data": args.data, "k": args.k, "alpha": args.alpha }),
        &report,
    )?;
    print_json(&report)
}

fn run_probe(args: ProbeArgs) -> Result<()> {
    let g = load(&args.data)?;
    let labels = g
        .labels()
        .ok_or_else(|| Error::LabelRange("the probe needs labels".into()))?;
    let seed = resolve_seed(args.seed);
    let mut accuracies = Vec::with_capacity(g.num_views());
    for (v, adj) in g.views().iter().enumerate() {
        let (sub, sub_x, sub_y, _) = crate::csbm::drop_isolated(adj, g.features(), labels)?;
        let norm = normalize_adjacency(&sub, false)?;
        let agg = sgc_aggregate(&norm, sub_x.view(), args.k)?;
        let (agg, _) = crate::linalg::row_l2_normalize(agg.view(), 1e-12);
        accuracies.push(linear_probe(
            agg.view(),
            &sub_y,
            args.train_fraction,
            seed ^ v as u64,
        )?);
    }
    let report = json!({ "per_view_accuracy": accuracies });
    maybe_write_report(
        &args.out,
        &json!({
            "command": "probe",
            "data": args.data,
            "k": args.k,
            "train_fraction": args.train_fraction,
            "seed": seed,
        }),
        &report,
    )?;
    print_json(&report)
}

fn run_verify_theory(args: VerifyTheoryArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let stream = SeedStream::new(seed);
    // equal-norm community means, well separated relative to the noise
    let d = 6;
    let mut mu1 = Array1::<f64>::zeros(d);
    let mut mu2 = Array1::<f64>::zeros(d);
    mu1[0] = 6.0;
    mu1[2] = 1.0;
    mu2[1] = 6.0;
    mu2[3] = 1.0;
    let model = TwoBlockModel::new(args.n, args.p, args.q, mu1, mu2, args.sigma, args.k)?;

    let noiseless = TwoBlockModel { sigma: 0.0, ..model.clone() };
    let exact = lemma1_check(&noiseless, args.trials.max(100), stream.derive("exact", 0))?;
    let lemma = lemma1_check(&model, args.trials, stream.derive("lemma", 0))?;
    let theorem = theorem1_check(&model, &[0.9, 0.5, 0.1], args.trials, stream.derive("theorem", 0))?;

    // ordering stability over random strictly-monotone lambda2 triples
    let mut triple_results = Vec::new();
    let mut all_triples_pass = true;
    for t in 0..args.triples {
        let mut rng = stream.rng("triples", t as u64);
        let mut vals: Vec<f64> = (0..3)
            .map(|_| rand::Rng::gen_range(&mut rng, 0.05..0.95))
            .collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // enforce strict separation of lambda2^2
        if (vals[0] - vals[1]).abs() < 0.05 || (vals[1] - vals[2]).abs() < 0.05 {
            vals = vec![0.85, 0.5, 0.15];
        }
        let report = theorem1_check(&model, &vals, args.trials.min(300), stream.derive("triple", t as u64))?;
        all_triples_pass &= report.ordering.pass;
        triple_results.push(json!({
            "lambda2": vals,
            "mean_metric": report.ordering.mean_metric,
            "pass": report.ordering.pass,
        }));
    }

    let pass = exact.noiseless_exact && lemma.pass && theorem.pass && all_triples_pass;
    let report = json!({
        "pass": pass,
        "noiseless_exact": exact.noiseless_exact,
        "lemma1": lemma,
        "theorem1": theorem,
        "ordering_triples": triple_results,
    });
    maybe_write_report(
        &args.out,
        &json!({
            "command": "verify-theory",
            "n": args.n, "p": args.p, "q": args.q, "k": args.k,
            "sigma": args.sigma, "trials": args.trials, "seed": seed,
        }),
        &report,
    )?;
    print_json(&report)?;
    if !pass {
        return Err(Error::Domain("theory checks failed".into()));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Acd(args) => run_acd(args),
        Command::Mine(args) => run_mine(args),
        Command::Probe(args) => run_probe(args),
        Command::VerifyTheory(args) => run_verify_theory(args),
    }
}

/// Entry point for the `bmgc` binary.
pub fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            log::error!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
