use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpm_embed::experiments::{recorded_config, replay, run_experiment, write_run, ExperimentConfig};
use lpm_embed::inference::{fit_gmm, fit_one_vs_rest, misclassification_rate, permutation_test_ari, FitOptions, Loss};
use lpm_embed::io::{read_matrix_csv, to_json_bytes, write_atomic, write_matrix_csv};
use lpm_embed::kernels::KernelSpec;
use lpm_embed::lpgraph::{
    sample_graph, sample_latent_labeled, Adjacency, LatentDistribution, LatentSample, DENSE_MAX_VERTICES,
};
use lpm_embed::oos::{oos_embed_lists, write_oos_batch};
use lpm_embed::seeds::derive_seed;
use lpm_embed::spectral::{ase, ase_elbow, EigenOptions, Embedding, EmbeddingSource};
use lpm_embed::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "lpm-embed",
    version,
    about = "Latent position graphs, spectral embedding and out-of-sample extension"
)]
struct Cli {
    /// Log verbosity: -v for info, -vv for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample latent positions and a graph from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Adjacency spectral embedding of an edge list.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        /// Embedding dimension.
        #[arg(long, conflicts_with = "elbow")]
        d: Option<usize>,
        /// Pick the dimension at the scree elbow of this many leading eigenvalues.
        #[arg(long)]
        elbow: Option<usize>,
        /// Output CSV; a JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Out-of-sample embedding of new vertices from their connection lists.
    Oos {
        /// In-sample embedding CSV.
        #[arg(long)]
        embedding: PathBuf,
        /// One line per new vertex: whitespace-separated in-sample vertex indices.
        #[arg(long)]
        connections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a one-vs-rest linear classifier and predict.
    Classify {
        #[arg(long)]
        train: PathBuf,
        /// One integer label per line.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        test_labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LossArg::Hinge)]
        loss: LossArg,
        /// Bound on the weight norm.
        #[arg(long)]
        radius: Option<f64>,
        /// Predicted labels, one per line; a JSON summary is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Gaussian mixture clustering with BIC model selection.
    Cluster {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 9)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference labels to test the clustering against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding error curves (an experiment of kind `rates`).
    Rates(RunArgs),
    /// Concentration bound checks (an experiment of kind `bounds`).
    Bounds(RunArgs),
    /// Run an experiment: mixture, abalone, bipartite, rates or bounds.
    Experiment {
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-run a recorded experiment and compare its artifacts byte for byte.
    Replay { run_dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for run output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies the problem sizes.
    #[arg(long)]
    scale: Option<f64>,
    /// Write directly into the output directory instead of a fresh timestamped one.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Squared,
    Hinge,
    Logistic,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Squared => Loss::Squared,
            LossArg::Hinge => Loss::Hinge,
            LossArg::Logistic => Loss::Logistic,
        }
    }
}

fn rho_default() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    kernel: KernelSpec,
    distribution: LatentDistribution,
    n: usize,
    #[serde(default = "rho_default")]
    rho: f64,
    #[serde(default)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::Embed { graph, d, elbow, out } => embed(&graph, d, elbow, &out),
        Command::Oos { embedding, connections, out } => oos(&embedding, &connections, &out),
        Command::Classify { train, labels, test, test_labels, loss, radius, out } => {
            classify(&train, &labels, &test, test_labels.as_deref(), loss.into(), radius, &out)
        }
        Command::Cluster { embedding, k_min, k_max, seed, truth, trials, out } => {
            cluster(&embedding, k_min, k_max, seed, truth.as_deref(), trials, &out)
        }
        Command::Rates(run) => experiment("rates", &run),
        Command::Bounds(run) => experiment("bounds", &run),
        Command::Experiment { name, run } => experiment(&name, &run),
        Command::Replay { run_dir } => replay_run(&run_dir),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_csv(File::open(path)?)
}

fn read_labels(path: &Path) -> Result<Vec<i64>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse().map_err(|_| Error::Ingestion { line: k + 1, message: format!("bad label {l:?}") })
        })
        .collect()
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    out.with_file_name(name)
}

fn write_csv_atomic(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, m, None)?;
    write_atomic(path, &buf)
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg: SimulateConfig = toml::from_str(&read_text(config)?).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (x, comp) = sample_latent_labeled(&cfg.distribution, cfg.n, derive_seed(cfg.seed, &[0]))?;
    let labels = matches!(cfg.distribution, LatentDistribution::GaussianMixture { .. })
        .then(|| comp.iter().map(|&c| c as i64).collect());
    let graph_seed = derive_seed(cfg.seed, &[1]);
    let a = sample_graph(&cfg.kernel, &x, cfg.rho, graph_seed)?;
    let sample = LatentSample::new(x, cfg.rho, labels, cfg.seed)?;
    let mut positions = Vec::new();
    sample.write_csv(&mut positions)?;
    let mut edges = Vec::new();
    a.write_edge_list(&mut edges)?;
    write_atomic(&out.join("positions.csv"), &positions)?;
    write_atomic(&out.join("graph.edges"), &edges)?;
    let summary = serde_json::json!({
        "config": cfg,
        "graph_seed": graph_seed,
        "edges": a.edge_count(),
        "density": a.density(),
    });
    write_atomic(&out.join("summary.json"), &to_json_bytes(&summary)?)?;
    println!("{} vertices, {} edges -> {}", a.n(), a.edge_count(), out.display());
    Ok(())
}

fn embed(graph: &Path, d: Option<usize>, elbow: Option<usize>, out: &Path) -> Result<()> {
    let a = Adjacency::read_edge_list(BufReader::new(File::open(graph)?), DENSE_MAX_VERTICES)?;
    let emb = match (d, elbow) {
        (Some(d), _) => ase(&a, d)?,
        (None, Some(head)) => ase_elbow(&a, head, &EigenOptions::default())?.0,
        (None, None) => return Err(Error::Argument("give either --d or --elbow".into())),
    };
    write_csv_atomic(out, &emb.z)?;
    write_atomic(&sidecar_path(out), &to_json_bytes(&emb.sidecar(a.seed().into_iter().collect()))?)?;
    println!("embedded {} vertices into R^{}", emb.n(), emb.d);
    Ok(())
}

/// Rebuilds an embedding from its coordinates; `Z^T Z` is diagonal with the eigenvalues.
fn embedding_from_csv(path: &Path) -> Result<Embedding> {
    let z = read_matrix(path)?;
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::Ingestion { line: 1, message: format!("{} holds no embedding", path.display()) });
    }
    let eigenvalues = z.column_iter().map(|c| c.norm_squared()).collect();
    Ok(Embedding { d: z.ncols(), z, eigenvalues, source: EmbeddingSource::Adjacency })
}

fn read_connection_lists(path: &Path, n: usize) -> Result<Vec<Vec<u32>>> {
    let mut lists = Vec::new();
    for (k, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let bad = |m: String| Error::Ingestion { line: k + 1, message: m };
        let mut list = line
            .split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|_| bad(format!("bad vertex index {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        list.sort_unstable();
        list.dedup();
        if list.last().is_some_and(|&v| v as usize >= n) {
            return Err(bad(format!("vertex index out of range for {n} in-sample vertices")));
        }
        lists.push(list);
    }
    Ok(lists)
}

fn oos(embedding: &Path, connections: &Path, out: &Path) -> Result<()> {
    let emb = embedding_from_csv(embedding)?;
    let lists = read_connection_lists(connections, emb.n())?;
    let t = oos_embed_lists(&emb, &lists)?;
    let mut buf = Vec::new();
    let sidecar = write_oos_batch(&mut buf, &emb, &t, None)?;
    write_atomic(out, &buf)?;
    write_atomic(&sidecar_path(out), &to_json_bytes(&sidecar)?)?;
    println!("embedded {} new vertices into R^{}", t.nrows(), t.ncols());
    Ok(())
}

fn classify(
    train: &Path,
    labels: &Path,
    test: &Path,
    test_labels: Option<&Path>,
    loss: Loss,
    radius: Option<f64>,
    out: &Path,
) -> Result<()> {
    let z = read_matrix(train)?;
    let y = read_labels(labels)?;
    let zt = read_matrix(test)?;
    if zt.ncols() != z.ncols() {
        return Err(Error::Argument(format!("train has {} columns but test has {}", z.ncols(), zt.ncols())));
    }
    let model = fit_one_vs_rest(&z, &y, loss, radius, &FitOptions::default())?;
    let pred = model.predict(&zt)?;
    let error = match test_labels {
        Some(p) => Some(misclassification_rate(&pred, &read_labels(p)?)?),
        None => None,
    };
    let mut text = String::new();
    for p in &pred {
        text.push_str(&format!("{p}\n"));
    }
    write_atomic(out, text.as_bytes())?;
    let summary = serde_json::json!({ "loss": loss, "radius": radius, "error": error, "model": model });
    write_atomic(&sidecar_path(out), &to_json_bytes(&summary)?)?;
    if let Some(e) = error {
        println!("misclassification rate {e}");
    }
    Ok(())
}

fn cluster(
    embedding: &Path,
    k_min: usize,
    k_max: usize,
    seed: u64,
    truth: Option<&Path>,
    trials: usize,
    out: &Path,
) -> Result<()> {
    let z = read_matrix(embedding)?;
    let model = fit_gmm(&z, k_min..=k_max, seed)?;
    let mut text = String::new();
    for a in &model.assignments {
        text.push_str(&format!("{a}\n"));
    }
    write_atomic(&out.join("assignments.txt"), text.as_bytes())?;
    write_atomic(&out.join("model.json"), &to_json_bytes(&model)?)?;
    println!("selected K = {} (BIC {})", model.k, model.bic);
    if let Some(p) = truth {
        let truth = read_labels(p)?;
        let clusters: Vec<i64> = model.assignments.iter().map(|&a| a as i64).collect();
        let report = permutation_test_ari(&truth, &clusters, trials, derive_seed(seed, &[1]))?;
        let mut null = Vec::new();
        report.write_null_csv(&mut null)?;
        write_atomic(&out.join("null.csv"), &null)?;
        write_atomic(&out.join("permutation.json"), &to_json_bytes(&report)?)?;
        println!(
            "ARI {} (null mean {}, sd {}), p = {}",
            report.observed_ari, report.null_mean, report.null_sd, report.p_value
        );
    }
    Ok(())
}

/// Reads a run config, filling in or checking the experiment name.
fn load_config(name: &str, path: &Path) -> Result<ExperimentConfig> {
    let mut table: toml::Table = toml::from_str(&read_text(path)?).map_err(|e| Error::Config(e.to_string()))?;
    match table.get("experiment") {
        None => {
            table.insert("experiment".into(), toml::Value::String(name.into()));
        }
        Some(toml::Value::String(s)) if s == name => {}
        Some(other) => {
            return Err(Error::Config(format!("config describes experiment {other}, not {name:?}")));
        }
    }
    let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
    ExperimentConfig::from_toml_str(&text)
}

fn experiment(name: &str, run: &RunArgs) -> Result<()> {
    let mut cfg = load_config(name, &run.config)?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(s) = run.scale {
        cfg.scale = s;
    }
    cfg.validate()?;
    let root = run.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let output = run_experiment(&cfg)?;
    let dir = write_run(&root, &cfg, &output, !run.no_timestamp)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::to_string_pretty(&output.summary)?)?;
    writeln!(stdout, "wrote {}", dir.display())?;
    Ok(())
}

fn replay_run(dir: &Path) -> Result<()> {
    let cfg = recorded_config(dir)?;
    log::info!("replaying {} with seed {}", cfg.kind.name(), cfg.seed);
    let (out, differing) = replay(dir)?;
    if differing.is_empty() {
        println!("{} artifacts reproduced byte for byte", out.artifacts.len());
        Ok(())
    } else {
        Err(Error::Provenance(format!("replay differs in {}", differing.join(", "))))
    }
}
