//! `blnn` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure during training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use blnn::ablation::{rows_to_csv, run_variant};
use blnn::checkpoint;
use blnn::config::TrainConfig;
use blnn::eval::{evaluate, read_embeddings, report_csv, summarize, write_embeddings, EvalOptions};
use blnn::graph::{edge_homophily, load_graph, save_graph, Dataset, Labels};
use blnn::objective::Variant;
use blnn::synth::{generate_sbm, SbmConfig};
use blnn::trainer::{embed_graph, train_with};
use blnn::Error;

#[derive(Parser)]
#[command(name = "blnn", version, args_override_self = true)]
#[command(about = "Self-supervised node embeddings with bootstrapped graph latents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model graph directory.
    Synth(SynthArgs),
    /// Print node, edge and homophily statistics of a labeled graph.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train an encoder; writes a checkpoint, the training log and embeddings.
    Train(TrainArgs),
    /// Embed a graph with a trained checkpoint.
    Embed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate embeddings over random splits.
    Eval(EvalArgs),
    /// Train every loss variant under shared seeds and tabulate the results.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0.05)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.005)]
    p_inter: f64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Training flags shared by `train` and `ablate`. Precedence: built-in
/// defaults, then `--config`, then these flags.
#[derive(Args)]
struct TrainOverrides {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl TrainOverrides {
    fn resolve(&self) -> Result<TrainConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_file(p)?,
            None => TrainConfig::default(),
        };
        if let Some(t) = self.tau {
            cfg.loss.tau = t;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    splits: usize,
    /// Seed of the first split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Divide compactness by class size instead of the pair count.
    #[arg(long)]
    compactness_by_class_size: bool,
    /// Per-split report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// A count `N` (seeds 0..N) or a comma-separated list of seeds.
    #[arg(long, default_value = "1")]
    seeds: String,
    #[arg(long, default_value_t = 20)]
    splits: usize,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Result CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) => 1,
        Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Stats { data } => stats(&data),
        Command::Train(a) => train_cmd(a),
        Command::Embed { data, checkpoint, out } => {
            let ds = load_graph(&data)?;
            let state = checkpoint::load(&checkpoint)?;
            write_embeddings(&out, &embed_graph(&state, &ds.graph)?)
        }
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), Error> {
    let cfg = SbmConfig {
        n_nodes: a.nodes,
        n_classes: a.classes,
        p_intra: a.p_intra,
        p_inter: a.p_inter,
        feature_dim: a.dim,
        class_mean_separation: a.sep,
        noise_std: a.noise,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let (g, labels) = generate_sbm(&cfg)?;
    create_dir(&a.out)?;
    save_graph(&a.out, &g, Some(&labels))?;
    println!(
        "wrote {} nodes, {} edges to {}",
        g.n_nodes(),
        g.n_undirected_edges(),
        a.out.display()
    );
    Ok(())
}

fn require_labels(ds: &Dataset, what: &str) -> Result<Labels, Error> {
    ds.labels
        .clone()
        .ok_or_else(|| Error::Validation(format!("{what} needs a labeled dataset")))
}

fn stats(data: &Path) -> Result<(), Error> {
    let ds = load_graph(data)?;
    let labels = require_labels(&ds, "stats")?;
    let h = edge_homophily(&ds.graph, &labels)?;
    println!("nodes {}", ds.graph.n_nodes());
    println!("edges {} ({} directed)", ds.graph.n_undirected_edges(), ds.graph.n_edges());
    println!("features {}", ds.graph.n_features());
    println!("classes {}", labels.n_classes());
    println!("homophily {h:.4} ({:.2}%)", 100.0 * h);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn train_cmd(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = a.overrides.resolve()?;
    if let Some(v) = a.variant {
        cfg.loss.variant = v;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ds = load_graph(&a.data)?;
    if cfg.loss.variant == Variant::BgrlClean && ds.labels.is_none() {
        return Err(Error::Config("variant bgrl_clean needs a labeled dataset".into()));
    }
    create_dir(&a.out)?;
    let opts = EvalOptions::default();
    let labels = ds.labels.as_ref();
    let g = &ds.graph;
    let outcome = train_with(g, labels, &cfg, |epoch, state| {
        let Some(labels) = labels else {
            return Ok(Vec::new());
        };
        let h = embed_graph(state, g)?;
        let summary = summarize(&evaluate(&h, labels, &opts)?);
        let acc = summary[0].1;
        info!("epoch {}: accuracy {acc:.4}", epoch + 1);
        Ok(summary.into_iter().map(|(n, m, _)| (n, m)).collect())
    })?;
    checkpoint::save(a.out.join("model.ckpt"), &outcome.state)?;
    outcome.log.write_csv(a.out.join("train_log.csv"))?;
    write_text(&a.out.join("config.txt"), &cfg.to_text())?;
    write_embeddings(a.out.join("embeddings.csv"), &embed_graph(&outcome.state, g)?)?;
    let last = outcome.log.rows.last().expect("at least one epoch");
    println!(
        "trained {} for {} epochs: final loss {:.6}, outputs in {}",
        cfg.loss.variant,
        cfg.epochs,
        last.loss,
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), Error> {
    let ds = load_graph(&a.data)?;
    let labels = require_labels(&ds, "eval")?;
    let h = read_embeddings(&a.embeddings)?;
    let opts = EvalOptions {
        ks: a.k,
        n_splits: a.splits,
        first_seed: a.seed,
        compactness_by_class_size: a.compactness_by_class_size,
    };
    let reports = evaluate(&h, &labels, &opts)?;
    for (name, mean, std) in summarize(&reports) {
        println!("{name:<12} {mean:.4} ± {std:.4}");
    }
    if let Some(out) = a.out {
        write_text(&out, &report_csv(&reports))?;
    }
    Ok(())
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Usage(format!("--seeds expects a count or a list, got {s:?}"));
    if s.contains(',') {
        return s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect();
    }
    let n: u64 = s.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((0..n).collect())
}

fn ablate(a: AblateArgs) -> Result<(), Error> {
    let cfg = a.overrides.resolve()?;
    cfg.validate()?;
    let seeds = parse_seeds(&a.seeds)?;
    let ds = load_graph(&a.data)?;
    let labels = require_labels(&ds, "ablate")?;
    let opts = EvalOptions {
        n_splits: a.splits,
        ..EvalOptions::default()
    };
    let mut rows = Vec::new();
    for v in Variant::ALL {
        for &seed in &seeds {
            let (row, _) = run_variant(&ds.graph, &labels, &cfg, v, seed, &opts)?;
            info!("{v} seed {seed}: accuracy {:.4}", row.accuracy);
            rows.push(row);
        }
    }
    let csv = rows_to_csv(&rows);
    match a.out {
        Some(out) => write_text(&out, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
