use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use cocoa_cli::{
    cached_reference, error_category, load_data, parse_method, run_experiment, sweep, DataSpec,
    ExperimentConfig, SweepAxis,
};
use cocoa_core::{CostModel, CountDirection, LossModel, StepSizeIndex, DEFAULT_MAX_EPOCHS};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cocoa",
    about = "Distributed dual coordinate ascent experiments over a simulated cluster",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one dataset, once per seed.
    Run(RunArgs),
    /// Run the experiment across a grid of H, beta, or method values.
    Sweep(SweepArgs),
    /// Compute (and cache) the high-accuracy reference solution.
    Reference(CommonArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sweep axis: h, beta, or method.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values, e.g. 10,100,1000.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config; remaining flags override nothing when given.
    #[arg(long)]
    config: Option<PathBuf>,

    /// LIBSVM-format data file.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Synthetic data spec n,d,sparsity,noise.
    #[arg(long, value_name = "N,D,SPARSITY,NOISE")]
    synthetic: Option<String>,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Force the feature dimension (aligns multiple files).
    #[arg(long)]
    force_dim: Option<usize>,

    /// Loss family: hinge, smoothed-hinge, logistic.
    #[arg(long, default_value = "hinge")]
    loss: String,
    /// Smoothing width for smoothed-hinge.
    #[arg(long, default_value_t = 1.0)]
    gamma_s: f64,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,

    /// Method: cocoa, minibatch-cd, minibatch-sgd, local-sgd.
    #[arg(long, default_value = "cocoa")]
    method: String,
    /// Number of workers.
    #[arg(long = "K", default_value_t = 4)]
    k: usize,
    /// Inner iterations / batch size per worker per round.
    #[arg(long = "H", default_value_t = 100)]
    h: usize,
    /// Merge scaling (beta_k or beta_b depending on the method).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Outer rounds.
    #[arg(long = "T", default_value_t = 100)]
    rounds: u32,
    /// Solve each block exactly to this tolerance instead of H steps.
    #[arg(long)]
    exact_tol: Option<f64>,

    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Output directory for traces and reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Vector counting convention: up, down, both.
    #[arg(long, default_value = "both")]
    count_direction: String,
    /// Reference-solve duality gap tolerance.
    #[arg(long, default_value_t = 1e-8)]
    ref_tol: f64,
    /// Skip the reference solve (duality-gap targets only).
    #[arg(long)]
    no_reference: bool,
    /// Evaluate objectives every this many rounds.
    #[arg(long, default_value_t = 1)]
    eval_every: u32,
    /// Run the K local solves on threads.
    #[arg(long)]
    parallel: bool,
    /// Data sharding: random or as-stored.
    #[arg(long, default_value = "random")]
    shard: String,
    #[arg(long, default_value_t = 0)]
    partition_seed: u64,
    /// Step-size indexing for the subgradient methods: round or global-step.
    #[arg(long)]
    step_index: Option<String>,
    /// Synthetic time units per communicated vector.
    #[arg(long)]
    per_vector_cost: Option<f64>,
    /// Synthetic time units per coordinate update.
    #[arg(long)]
    per_update_cost: Option<f64>,
}

impl CommonArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        if let Some(path) = &self.config {
            return ExperimentConfig::from_json_file(path);
        }
        let data = match (&self.data, &self.synthetic) {
            (Some(path), None) => DataSpec::File {
                path: path.clone(),
                force_dim: self.force_dim,
            },
            (None, Some(spec)) => {
                let parts: Vec<&str> = spec.split(',').collect();
                if parts.len() != 4 {
                    bail!("config: --synthetic expects n,d,sparsity,noise");
                }
                DataSpec::Synthetic {
                    n: parts[0]
                        .parse()
                        .map_err(|_| anyhow::anyhow!("config: bad n"))?,
                    d: parts[1]
                        .parse()
                        .map_err(|_| anyhow::anyhow!("config: bad d"))?,
                    sparsity: parts[2]
                        .parse()
                        .map_err(|_| anyhow::anyhow!("config: bad sparsity"))?,
                    noise: parts[3]
                        .parse()
                        .map_err(|_| anyhow::anyhow!("config: bad noise"))?,
                    data_seed: self.data_seed,
                }
            }
            _ => bail!("config: exactly one of --data or --synthetic is required"),
        };
        let loss = match self.loss.as_str() {
            "hinge" => LossModel::Hinge,
            "smoothed-hinge" | "smoothed_hinge" => LossModel::SmoothedHinge {
                gamma: self.gamma_s,
            },
            "logistic" => LossModel::Logistic,
            other => bail!("config: unknown loss `{other}`"),
        };
        let count_direction = match self.count_direction.as_str() {
            "up" => CountDirection::Up,
            "down" => CountDirection::Down,
            "both" => CountDirection::Both,
            other => bail!("config: unknown count direction `{other}`"),
        };
        let shard = match self.shard.as_str() {
            "random" => cocoa_cli::ShardOrder::Random,
            "as-stored" | "as_stored" => cocoa_cli::ShardOrder::AsStored,
            other => bail!("config: unknown shard order `{other}`"),
        };
        let step_index = match self.step_index.as_deref() {
            None => None,
            Some("round") => Some(StepSizeIndex::Round),
            Some("global-step") | Some("global_step") => Some(StepSizeIndex::GlobalStep),
            Some(other) => bail!("config: unknown step index `{other}`"),
        };
        let cost = match (self.per_vector_cost, self.per_update_cost) {
            (None, None) => None,
            (pv, pu) => {
                let default = CostModel::default();
                Some(CostModel {
                    per_vector: pv.unwrap_or(default.per_vector),
                    per_update: pu.unwrap_or(default.per_update),
                })
            }
        };
        Ok(ExperimentConfig {
            data,
            loss,
            lambda: self.lambda,
            method: parse_method(&self.method)?,
            k: self.k,
            h: self.h,
            beta: self.beta,
            rounds: self.rounds,
            exact_tol: self.exact_tol,
            seeds: self.seeds,
            out_dir: self.out,
            ref_tol: self.ref_tol,
            reference: !self.no_reference,
            count_direction,
            eval_every: self.eval_every,
            parallel: self.parallel,
            shard,
            partition_seed: self.partition_seed,
            step_index,
            cost,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(error_category(&err) as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.common.into_config()?;
            let output = run_experiment(&cfg)?;
            for run in &output.runs {
                let last = run.trace.final_record().expect("nonempty trace");
                println!(
                    "seed {}: rounds {}, primal {:.6e}, gap {}, vectors {} -> {}",
                    run.seed,
                    last.round,
                    last.primal,
                    last.gap
                        .map(|g| format!("{g:.6e}"))
                        .unwrap_or_else(|| "-".into()),
                    last.vectors,
                    run.trace_path.display()
                );
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let axis = match args.axis.as_str() {
                "h" | "H" => SweepAxis::H,
                "beta" => SweepAxis::Beta,
                "method" => SweepAxis::Method,
                other => bail!("config: unknown sweep axis `{other}`"),
            };
            let cfg = args.common.into_config()?;
            let summary = sweep(&cfg, axis, &args.values)?;
            for row in &summary.rows {
                let fmt = |hit: &Option<cocoa_cli::TargetHit>| {
                    hit.map(|h| format!("round {} / {} vectors", h.round, h.vectors))
                        .unwrap_or_else(|| "not reached".into())
                };
                println!(
                    "{} = {}: 1e-2 at {}; 1e-3 at {}{}",
                    args.axis,
                    row.value,
                    fmt(&row.targets.hits[0]),
                    fmt(&row.targets.hits[1]),
                    if row.diverged { " (diverged)" } else { "" }
                );
            }
            Ok(())
        }
        Command::Reference(common) => {
            let cfg = common.into_config()?;
            cfg.validate()?;
            let loaded = load_data(&cfg.data)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let (reference, cached) = cached_reference(
                &cfg.out_dir,
                &loaded.ds,
                cfg.lambda,
                cfg.loss,
                cfg.ref_tol,
                DEFAULT_MAX_EPOCHS,
            )?;
            println!(
                "p_star {:.12e}, d_star {:.12e}, gap {:.3e} ({}; scale M = {})",
                reference.primal,
                reference.dual,
                reference.gap,
                if cached { "cached" } else { "computed" },
                loaded.scale_m
            );
            Ok(())
        }
    }
}
