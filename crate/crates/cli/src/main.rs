use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use xlmimo_core::harness::{
    emit_cost, emit_results, oracle_report, run_experiment_with_threads, write_convergence_csv, write_oracle_csv,
    Config, Method, SummaryRow,
};

#[derive(Parser)]
#[command(name = "xlmimo", version, about = "Antenna selection and power allocation experiments for subarray-switching arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo comparison of the configured methods over the sweep.
    Run(Common),
    /// Per-generation GA-RA traces and per-iteration DGA-RA trajectories.
    Convergence(Common),
    /// Training, coordination and flop counts over the cost sweep.
    Cost(Common),
    /// Toy-scale comparison against exhaustive search.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    config: PathBuf,
    /// Master seed (overrides [sweep] seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo trials per sweep point (overrides [sweep] trials).
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory (overrides [output] dir).
    #[arg(long, env = "XLMIMO_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<(Config, PathBuf)> {
        let mut cfg = Config::from_path(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.experiment.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.experiment.trials = t;
        }
        let dir = self
            .out_dir
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("results"));
        Ok((cfg, dir))
    }
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<14} {:>8} {:>12} {:>10} {:>7} {:>12}", "method", "value", "mean_se", "stderr", "trials", "runtime_ms");
    for r in rows {
        println!(
            "{:<14} {:>8} {:>12.4} {:>10.4} {:>7} {:>12.2}",
            r.method.label(),
            r.sweep_value,
            r.mean_se,
            r.stderr_se,
            r.trials,
            r.mean_runtime_ms
        );
    }
}

fn written(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(args: &Common) -> Result<()> {
    let (cfg, dir) = args.load()?;
    let out = run_experiment_with_threads(&cfg.experiment, args.threads)?;
    let files = emit_results(&out, &dir, &cfg.output_name)?;
    print_summary(&out.table.summary());
    written(&files.csv);
    written(&files.json);
    if let Some(p) = &files.messages {
        written(p);
    }
    Ok(())
}

fn convergence(args: &Common) -> Result<()> {
    let (mut cfg, dir) = args.load()?;
    let max_iters = *cfg.dga_iters.iter().max().expect("validated non-empty");
    cfg.experiment.methods = vec![Method::GaRa, Method::DgaRa { n_iters: max_iters }];
    let out = run_experiment_with_threads(&cfg.experiment, args.threads)?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{}_convergence.csv", cfg.output_name));
    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_convergence_csv(&out.traces, std::io::BufWriter::new(file))?;
    print_summary(&out.table.summary());
    written(&path);
    Ok(())
}

fn cost(args: &Common) -> Result<()> {
    let (cfg, dir) = args.load()?;
    let rows = cfg.cost_rows()?;
    let path = emit_cost(&rows, &dir, &cfg.output_name)?;
    let s = &cfg.experiment.system;
    let bound = s.num_antennas as f64 / (s.num_subarrays + cfg.cost.n_iters) as f64;
    println!(
        "distributed coordination is smaller while K < M / (B + N_it) = {bound:.3} (M = {}, B = {}, N_it = {})",
        s.num_antennas, s.num_subarrays, cfg.cost.n_iters
    );
    written(&path);
    Ok(())
}

fn oracle(args: &Common) -> Result<()> {
    let (mut cfg, dir) = args.load()?;
    if !cfg.experiment.methods.contains(&Method::Exhaustive) {
        cfg.experiment.methods.push(Method::Exhaustive);
    }
    let out = run_experiment_with_threads(&cfg.experiment, args.threads)?;
    let files = emit_results(&out, &dir, &cfg.output_name)?;
    let rows = oracle_report(&out.table);
    let path = dir.join(format!("{}_oracle.csv", cfg.output_name));
    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_oracle_csv(&rows, std::io::BufWriter::new(file))?;
    println!("{:<14} {:>8} {:>12} {:>10} {:>10}", "method", "value", "mean_se", "gap_pct", "hits");
    for r in &rows {
        println!(
            "{:<14} {:>8} {:>12.4} {:>10.4} {:>6}/{}",
            r.method.label(),
            r.sweep_value,
            r.mean_se,
            r.mean_gap_pct,
            r.optimum_hits,
            r.trials
        );
    }
    written(&files.csv);
    written(&path);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Convergence(a) => convergence(a),
        Command::Cost(a) => cost(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
