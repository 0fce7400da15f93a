//! `mlqmc`: run experiments, print low-discrepancy points, and tabulate
//! level statistics.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mlqmc::experiment::{level_statistics, run_experiment, write_outputs, ExperimentOutput};
use mlqmc::ld::{default_lattice, default_net};
use mlqmc::problems::problem_by_name;
use mlqmc::{ExperimentConfig, Generator, LdConfig, SeqKind, StreamKey};

#[derive(Parser, Debug)]
#[command(
    name = "mlqmc",
    version,
    about = "Multilevel (quasi-)Monte Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Evaluate the config's [[check]] entries; exit 1 if any fails.
        #[arg(long)]
        check: bool,
        /// Add a wall_time_s column to records.csv.
        #[arg(long)]
        timing: bool,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print points of the embedded sequences as CSV.
    Points {
        #[arg(long, value_parser = parse_kind)]
        kind: SeqKind,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        d: usize,
        /// Randomly shift the sequence using this seed.
        #[arg(long)]
        shift_seed: Option<u64>,
    },
    /// Per-level mean and standard deviation of Y_l from IID samples.
    Table1 {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 1 << 16)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn parse_kind(s: &str) -> std::result::Result<SeqKind, String> {
    s.parse::<SeqKind>().map_err(|e| e.to_string())
}

fn print_summary(out: &ExperimentOutput) {
    println!(
        "{:<10} {:<6} {:<8} {:>10} {:>6} {:>12} {:>12} {:>9}",
        "problem", "method", "sequence", "budget", "trials", "med_err", "med_stderr", "coverage"
    );
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
    for c in &out.summary.cells {
        println!(
            "{:<10} {:<6} {:<8} {:>10} {:>6} {:>12} {:>12} {:>9}",
            c.problem,
            c.method.as_str(),
            c.sequence,
            c.budget,
            c.trials,
            fmt(c.median_abs_error),
            format!("{:.3e}", c.median_std_err),
            c.coverage.map_or("-".to_string(), |x| format!("{x:.3}")),
        );
    }
    for s in &out.summary.slopes {
        println!(
            "slope {} {}-{}: {}",
            s.problem,
            s.method,
            s.sequence,
            s.slope.map_or("-".to_string(), |x| format!("{x:.3}"))
        );
    }
}

fn run(
    config: PathBuf,
    check: bool,
    timing: bool,
    trials: Option<usize>,
    output: Option<PathBuf>,
) -> Result<bool> {
    let mut cfg = ExperimentConfig::from_file(&config)
        .with_context(|| format!("reading {}", config.display()))?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if output.is_some() {
        cfg.output = output;
    }
    let out = run_experiment(&cfg)?;
    print_summary(&out);
    if let Some(dir) = &cfg.output {
        write_outputs(dir, &out.records, &out.summary, &out.checks, timing)
            .with_context(|| format!("writing to {}", dir.display()))?;
        println!("wrote {}", dir.display());
    }
    if !check {
        return Ok(true);
    }
    let mut ok = true;
    for c in &out.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    Ok(ok)
}

fn points(kind: SeqKind, n: u64, d: usize, shift_seed: Option<u64>) -> Result<()> {
    let gen = match kind {
        SeqKind::Lattice => Generator::Lattice(default_lattice().truncate(d)?),
        SeqKind::Net => Generator::Net(default_net().truncate(d)?),
    };
    let shift = match shift_seed {
        Some(s) => gen.random_shift(&mut StreamKey::new(s).name("points").rng()),
        None => gen.zero_shift(),
    };
    let pts = LdConfig::new(gen, shift)?.points(0, n)?;
    let stdout = std::io::stdout();
    let mut w = std::io::BufWriter::new(stdout.lock());
    for row in pts.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn table1(problem: &str, n: usize, seed: u64, json: bool) -> Result<()> {
    if n < 2 {
        bail!("need at least two samples");
    }
    let p = problem_by_name(problem, None)?;
    let stats = level_statistics(
        p.as_ref(),
        n,
        &mut StreamKey::new(seed).name("table1").name(problem).rng(),
    );
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
        return Ok(());
    }
    println!("{:>5} {:>14} {:>14}", "level", "mean", "std");
    for s in stats {
        println!("{:>5} {:>14.4e} {:>14.4e}", s.level + 1, s.mean, s.std);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            config,
            check,
            timing,
            trials,
            output,
        } => run(config, check, timing, trials, output),
        Command::Points {
            kind,
            n,
            d,
            shift_seed,
        } => points(kind, n, d, shift_seed).map(|_| true),
        Command::Table1 {
            problem,
            n,
            seed,
            json,
        } => table1(&problem, n, seed, json).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
