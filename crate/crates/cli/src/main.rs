use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use coassoc::eval::{coverage_truncated, default_grid, estimate_coverage};
use coassoc::labelprop::{PropagationConfig, PropagatorRegistry};
use coassoc::pipeline;
use coassoc::solver::SelectionConfig;
use coassoc::synth::WorldConfig;

/// Co-association captcha pipeline: synthetic corpora, graph building,
/// label propagation, solving and evaluation.
#[derive(Parser)]
#[command(name = "coassoc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Hash, deduplicate and count a corpus's training manifest.
    Ingest(IngestArgs),
    /// Build the association graph.
    Build(BuildArgs),
    /// Propagate priors over the graph.
    Propagate(PropagateArgs),
    /// Answer challenges with the propagated state.
    Solve(SolveArgs),
    /// Accuracy over a grid of thresholds, with a priors-only ablation.
    Sweep(SweepArgs),
    /// Top-K image classification before and after propagation.
    Topk(TopkArgs),
    /// Estimate corpus size from a sampled hit rate.
    Coverage(CoverageArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Latent dimension.
    #[arg(long)]
    p: Option<usize>,
    /// JSON world config; --seed and --p override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Work directory.
    #[arg(long)]
    out: PathBuf,
    /// Max Hamming distance for two hashes to be the same image.
    #[arg(long, default_value_t = 0)]
    hash_tolerance: u32,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = coassoc::simgraph::DEFAULT_LATENT_DIM)]
    p: usize,
}

#[derive(Args)]
struct PropagateArgs {
    #[arg(long)]
    out: PathBuf,
    /// sequential, synchronous or direct.
    #[arg(long, default_value = "sequential")]
    schedule: String,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.65)]
    threshold: f64,
    /// Challenge manifest; defaults to the corpus's test manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated thresholds; defaults to 0, 0.05, ..., 1.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct TopkArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Vertices sampled; all of them if larger than the graph.
    #[arg(long, default_value_t = 1000)]
    sample: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long)]
    graph_images: u64,
    #[arg(long)]
    sampled: u64,
    #[arg(long)]
    found: u64,
    /// Decimal places the hit rate is truncated to for the reported estimate.
    #[arg(long, default_value_t = 3)]
    digits: u32,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let mut cfg = match &a.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
                    serde_json::from_str::<WorldConfig>(&text)
                        .map_err(|e| anyhow!("{}: {e}", path.display()))?
                }
                None => WorldConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            if let Some(p) = a.p {
                cfg.p = p;
            }
            let w = pipeline::run_synth(&cfg, &a.out)?;
            println!(
                "wrote {} images, {} challenges, {} test challenges to {}",
                w.images.len(),
                w.challenges.len(),
                w.test_challenges.len(),
                a.out.display()
            );
        }
        Command::Ingest(a) => {
            let s = pipeline::run_ingest(&a.corpus, &a.out, a.hash_tolerance)?;
            println!(
                "records\t{}\nerrors\t{}\nimages\t{}\nvertices\t{}",
                s.records, s.errors, s.images, s.vertices
            );
        }
        Command::Build(a) => {
            let g = pipeline::run_build(&a.corpus, &a.out, a.p)?;
            println!("vertices\t{}\nedges\t{}", g.n(), g.edge_count());
        }
        Command::Propagate(a) => {
            let cfg = PropagationConfig {
                tolerance: a.tolerance,
                max_iters: a.max_iters,
                ..PropagationConfig::default()
            };
            let registry = PropagatorRegistry::with_defaults();
            let r = pipeline::run_propagate(&a.out, &cfg, &a.schedule, &registry)?;
            println!(
                "iters\t{}\nfinal_delta\t{}\nenergy\t{}",
                r.iters, r.final_delta, r.energy
            );
        }
        Command::Solve(a) => {
            let manifest = pipeline::manifest_path(&a.corpus, a.manifest.as_deref());
            let cfg = SelectionConfig::with_threshold(a.threshold);
            let s = pipeline::run_solve(&a.corpus, &a.out, &manifest, &cfg)?;
            println!(
                "challenges\t{}\ngraded\t{}\ncorrect\t{}\naccuracy\t{}",
                s.challenges,
                s.graded,
                s.correct,
                s.accuracy()
            );
        }
        Command::Sweep(a) => {
            let manifest = pipeline::manifest_path(&a.corpus, a.manifest.as_deref());
            let grid = a.grid.unwrap_or_else(default_grid);
            let s = pipeline::run_sweep(&a.corpus, &a.out, &manifest, &grid)?;
            print!("{}", s.propagated.to_csv());
            println!(
                "best_T\t{}\tbest_accuracy\t{}\tpriors_best_accuracy\t{}",
                s.propagated.best_threshold, s.propagated.best_accuracy, s.priors.best_accuracy
            );
        }
        Command::Topk(a) => {
            let r = pipeline::run_topk(&a.corpus, &a.out, a.sample, a.seed)?;
            print!("{}", r.to_csv());
        }
        Command::Coverage(a) => {
            let full = estimate_coverage(a.graph_images, a.sampled, a.found)?;
            let cut = coverage_truncated(a.graph_images, a.sampled, a.found, a.digits)?;
            println!("measure,coverage,estimated_total,estimated_missing");
            println!(
                "full_precision,{},{},{}",
                full.coverage,
                full.total_rounded(),
                full.estimated_missing
            );
            println!(
                "truncated_{}dp,{},{},{}",
                a.digits,
                cut.coverage,
                cut.total_rounded(),
                cut.estimated_missing
            );
        }
    }
    Ok(())
}
