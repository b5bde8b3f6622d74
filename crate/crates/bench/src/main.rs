//! Benchmark CLI: `run` a single experiment, compute a `reference` solution,
//! or produce a scalability `table`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use schwarz_bench::config::{ConfigOverlay, ProblemChoice};
use schwarz_bench::experiment::{iterations_to_tol, run_experiment};
use schwarz_bench::reference::{ensure_reference, fingerprint};
use schwarz_bench::table::{render_table, table_scalability, write_table_csv, TableSpec};

#[derive(Parser)]
#[command(name = "schwarz-bench", version, about = "Schwarz solver benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Flat key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem: slaplacian | poisson | obstacle | dualtv
    #[arg(long)]
    problem: Option<String>,
    /// Exponent of the s-Laplacian energy.
    #[arg(long)]
    s: Option<f64>,
    /// Fine cells per side (h = 1/n).
    #[arg(long)]
    n: Option<usize>,
    /// Subdomains per side (H = 1/N).
    #[arg(long = "N")]
    subdomains: Option<usize>,
    /// Overlap width in fine-cell layers.
    #[arg(long)]
    overlap: Option<usize>,
    /// Decomposition level: one | two
    #[arg(long)]
    level: Option<String>,
    /// Solver: asm | accel_asm | fista | fista_restart | fb | pcg
    #[arg(long)]
    solver: Option<String>,
    /// Step size override (outer step, or the fixed full-space step).
    #[arg(long)]
    tau: Option<f64>,
    /// Outer iteration budget.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Energy-error stop; 0 disables it (default 1e-8).
    #[arg(long)]
    tol: Option<f64>,
    /// Reference solution path.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Trace output path (CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reserved for stochastic solvers.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonOpts {
    fn overlay(&self) -> schwarz_bench::Result<ConfigOverlay> {
        let base = match &self.config {
            Some(path) => ConfigOverlay::from_file(path)?,
            None => ConfigOverlay::default(),
        };
        let flags = ConfigOverlay {
            problem: self.problem.clone(),
            s: self.s,
            cells: self.n,
            subdomains: self.subdomains,
            overlap: self.overlap,
            level: self.level.clone(),
            solver: self.solver.clone(),
            tau: self.tau,
            max_iter: self.max_iter,
            tol: self.tol,
            reference: self.reference.clone(),
            out: self.out.clone(),
            seed: self.seed,
        };
        Ok(base.merged(flags))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its trace.
    Run(CommonOpts),
    /// Compute (or load) the reference solution for a problem.
    Reference(CommonOpts),
    /// Iteration-count table over a (H/h, 1/H) grid.
    Table(TableOpts),
}

#[derive(Args)]
struct TableOpts {
    /// Problem: slaplacian | poisson | obstacle | dualtv
    #[arg(long)]
    problem: String,
    /// Exponent of the s-Laplacian energy.
    #[arg(long, default_value_t = 4.0)]
    s: f64,
    /// Comma-separated H/h ratios, e.g. 4,8
    #[arg(long, value_delimiter = ',')]
    ratios: Vec<usize>,
    /// Comma-separated subdomain counts per side (1/H), e.g. 4,8,16
    #[arg(long, value_delimiter = ',')]
    coarse: Vec<usize>,
    /// Overlap width in fine-cell layers.
    #[arg(long, default_value_t = 2)]
    overlap: usize,
    /// Energy-error threshold defining the iteration count.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Outer iteration budget per cell.
    #[arg(long = "max-iter", default_value_t = 2000)]
    max_iter: usize,
    /// Directory of cached reference solutions.
    #[arg(long = "ref-dir", default_value = "refs")]
    ref_dir: PathBuf,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> schwarz_bench::Result<()> {
    match cli.command {
        Command::Run(opts) => {
            let cfg = opts.overlay()?.build()?;
            let trace = run_experiment(&cfg)?;
            let last = trace.records.last().expect("trace has at least the start row");
            println!(
                "{} {} n={} N={} overlap={} level={}: {} iterations, energy {:.9e}, error {:.3e}",
                cfg.problem.as_str(),
                cfg.solver.as_str(),
                cfg.cells,
                cfg.subdomains,
                cfg.overlap,
                cfg.level.as_str(),
                last.iter,
                last.energy,
                last.energy_error,
            );
            if let Some(tol) = cfg.tol {
                match iterations_to_tol(&trace, tol) {
                    Some(n) => println!("reached tol {tol:.1e} at iteration {n}"),
                    None => println!("tol {tol:.1e} not reached within the budget"),
                }
            }
            if let Some(out) = &cfg.output_path {
                println!("trace written to {}", out.display());
            }
            Ok(())
        }
        Command::Reference(opts) => {
            let cfg = opts.overlay()?.build()?;
            let r = ensure_reference(&cfg)?;
            println!(
                "reference {} ({}): energy {:.12e}, {} dofs, fingerprint {}",
                cfg.reference_path.display(),
                r.generator,
                r.energy,
                r.values.len(),
                &fingerprint(&cfg)[..12],
            );
            Ok(())
        }
        Command::Table(opts) => {
            let problem: ProblemChoice = opts.problem.parse()?;
            let spec = TableSpec {
                problem,
                s: opts.s,
                ratios: opts.ratios,
                coarse_counts: opts.coarse,
                overlap: opts.overlap,
                tol: opts.tol,
                max_iter: opts.max_iter,
                reference_dir: opts.ref_dir,
            };
            let cells = table_scalability(&spec)?;
            print!("{}", render_table(&cells));
            if let Some(out) = &opts.out {
                write_table_csv(out, &cells)?;
                println!("table written to {}", out.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
