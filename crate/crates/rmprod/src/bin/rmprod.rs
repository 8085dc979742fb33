//! Command-line front end: one subcommand per experiment.
//!
//! Exit status is 0 when every comparison passes, 1 when some |z| > 4 or a
//! KS p-value falls below 0.01, and 2 for configuration errors.

use clap::{Parser, Subcommand};
use rmprod::harness::experiments as ex;
use rmprod::harness::report::write_csv;
use rmprod::harness::{ExperimentConfig, ExperimentReport};
use rmprod::Error;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rmprod", version, about = "Matrix-product experiments and limit formulas")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON experiment configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for the JSON report and CSV data.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Centred log singular-value paths of Brownian motion on GL(N).
    SamplePaths {
        /// Matrix size, overriding the configuration.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Limit Laplace transform of the line ensemble.
    LaplaceLimit,
    /// Finite-N Laplace transform.
    LaplaceFiniteN,
    /// One-point density grid and expected counts.
    Kernel,
    /// Product ensembles against the limit, plus a two-ensemble KS test.
    Universality,
    /// Exact small-N observable against Monte Carlo.
    OracleSmalln,
    /// Finite-N to limit convergence table.
    Convergence,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            summarise(&report);
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("acceptance failure: a comparison exceeded |z| > 4 or KS p < 0.01");
                ExitCode::from(1)
            }
        }
        Err(e @ (Error::Config(_) | Error::Io { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> rmprod::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Cmd::SamplePaths { n: Some(n) } = cli.cmd {
        cfg.sample_paths.n = n;
    }
    if cli.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> rmprod::Result<ExperimentReport> {
    let cfg = load_config(cli)?;
    let w = cli.workers;
    let report = match cli.cmd {
        Cmd::SamplePaths { .. } => {
            let (r, rows) = ex::run_sample_paths(&cfg, w)?;
            write_csv(&cli.out.join("paths.csv"), &rows)?;
            r
        }
        Cmd::LaplaceLimit => ex::run_laplace(&cfg, false)?,
        Cmd::LaplaceFiniteN => ex::run_laplace(&cfg, true)?,
        Cmd::Kernel => {
            let (r, rows) = ex::run_kernel(&cfg, w)?;
            write_csv(&cli.out.join("density.csv"), &rows)?;
            r
        }
        Cmd::Universality => ex::run_universality(&cfg, w)?,
        Cmd::OracleSmalln => ex::run_oracle_smalln(&cfg, w)?,
        Cmd::Convergence => ex::run_convergence_sweep(&cfg)?,
    };
    save(&report, &cli.out)?;
    Ok(report)
}

fn save(report: &ExperimentReport, out: &Path) -> rmprod::Result<()> {
    let path = report.write(out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// One line per query and statistic; write errors such as a closed pipe are ignored.
fn summarise(report: &ExperimentReport) {
    let mut out = std::io::stdout().lock();
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    for q in &report.queries {
        let _ = writeln!(
            out,
            "{}: formula {} estimate {} stderr {} z {}{}{}",
            q.label,
            f(q.formula),
            f(q.estimate),
            f(q.stderr),
            f(q.z),
            q.exact.map_or(String::new(), |e| format!(" exact {e:.6} z_exact {}", f(q.z_exact))),
            q.note.as_ref().map_or(String::new(), |n| format!(" ({n})"))
        );
    }
    for s in &report.statistics {
        let _ = writeln!(out, "{}: {:.6} p {} {}", s.name, s.value, f(s.p_value), if s.pass { "pass" } else { "FAIL" });
    }
}
