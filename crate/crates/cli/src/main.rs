use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sit_barrier::experiment::{self, ExperimentConfig, Overrides, SweepSpec};
use sit_barrier::pdesim::{blocking_verdict, SpaceTimeRecord, VerdictOptions};

/// Sterile-male release barriers: simulation and phase-plane analysis.
#[derive(Parser, Debug)]
#[command(name = "sit-barrier", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug)]
struct Global {
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for figure panels and sweep cells (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Grid spacing override (km).
    #[arg(long, global = true)]
    dx: Option<f64>,
    /// Time step override (days).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Run length and verdict horizon override (days).
    #[arg(long, global = true)]
    horizon: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment configuration.
    Run { config: PathBuf },
    /// Reproduce a figure preset: tw, 1, 2, 3, 4 or 5.
    Figure { id: String },
    /// Critical-release sweep or verdict grid.
    Sweep { spec: PathBuf },
    /// Recompute the blocking verdict from a stored run directory.
    Analyze { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let overrides = Overrides { dx: g.dx, dt: g.dt, horizon: g.horizon };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Run { config } => {
            let mut c = ExperimentConfig::from_json_file(config).with_context(|| format!("reading {}", config.display()))?;
            c.apply(&overrides);
            let dir = g.out.clone().or_else(|| c.output_dir.clone()).unwrap_or_else(|| PathBuf::from(&c.name));
            c.output_dir = Some(dir.clone());
            let o = experiment::run_experiment(&c)?;
            match &o.verdict {
                Some(v) => writeln!(out, "{}: blocked={} breakthrough_time={}", c.name, v.blocked, fmt_opt(v.breakthrough_time))?,
                None => writeln!(out, "{}: front={}", c.name, fmt_opt(o.final_front()))?,
            }
            writeln!(out, "wrote {}", dir.display())?;
        }
        Command::Figure { id } => {
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from(format!("figure-{id}")));
            let report = experiment::reproduce_figure(id, &overrides, Some(&dir))?;
            report.write_table(&mut out)?;
            writeln!(out, "wrote {}", dir.display())?;
        }
        Command::Sweep { spec } => {
            let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut s = SweepSpec::from_json_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            s.apply(&overrides);
            let r = experiment::sweep(&s)?;
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
            fs::create_dir_all(&dir)?;
            if s.releases.is_some() {
                r.write_verdict_csv(&mut out)?;
                r.write_verdict_csv(io::BufWriter::new(fs::File::create(dir.join("verdicts.csv"))?))?;
            } else {
                r.write_critical_csv(&mut out)?;
                r.write_critical_csv(io::BufWriter::new(fs::File::create(dir.join("critical.csv"))?))?;
            }
            fs::write(dir.join("result.json"), serde_json::to_string_pretty(&r)?)?;
        }
        Command::Analyze { dir } => analyze(dir, &overrides, g.out.as_deref(), &mut out)?,
    }
    Ok(())
}

fn analyze(dir: &Path, overrides: &Overrides, out_dir: Option<&Path>, out: &mut impl Write) -> Result<()> {
    let (record, meta) = SpaceTimeRecord::read_dir(dir).with_context(|| format!("reading record in {}", dir.display()))?;
    let config = dir.join("config.json");
    let mut opts = if config.exists() {
        ExperimentConfig::from_json_file(&config)?.verdict.unwrap_or_default()
    } else {
        VerdictOptions::default()
    };
    if let Some(h) = overrides.horizon {
        opts.horizon = h;
    }
    let last = record.times().last().copied().unwrap_or(0.0);
    if opts.horizon > last {
        opts.horizon = last;
    }
    let v = blocking_verdict(&record, &opts)?;
    writeln!(out, "{}: blocked={} breakthrough_time={}", meta.variant.name(), v.blocked, fmt_opt(v.breakthrough_time))?;
    if let Some(stored) = &meta.verdict {
        writeln!(out, "stored verdict: blocked={}", stored.blocked)?;
    }
    if let Some(o) = out_dir {
        fs::create_dir_all(o)?;
        fs::write(o.join("verdict.json"), serde_json::to_string_pretty(&v)?)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "none".into())
}
