//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, bad config,
//! empty inputs), 2 on runtime failures.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::datasets::{self, DatasetKind};
use crate::jellybean::JellyBeanWorld;

use super::aggregate::{
    aggregate_mcts, format_mcts_agg_csv, format_mcts_raw_csv, format_trace_csv, parse_mcts_raw_csv,
    parse_trace_csv, MCTS_RAW_HEADER, TRACE_HEADER,
};
use super::config::{ExperimentConfig, ExperimentKind};
use super::plot::{plot_mcts_sweep, plot_ptdqn_traces};
use super::selftest;
use super::sweep::{
    run_corridor_baseline, run_jellybean_baseline, run_mcts_sweep, run_ptdqn_sweep, HarnessError,
};

/// Environment variable that overrides the master seed everywhere.
pub const MASTER_SEED_ENV: &str = "MEMBUDGET_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "membudget",
    about = "Memory-budgeted RL experiments: budgeted MCTS on a corridor gridworld and PT-split DQN on an infinite item world",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset family and write it as CSV.
    GenData {
        /// Dataset family: o0..o3, oa, ra<X> or ronly<X>.
        #[arg(long)]
        dataset: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Optional config file (corridor layout overrides).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Generation seed for the random portion.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep plan allocations for the budgeted MCTS agent.
    SweepMcts {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Repetitions per cell.
        #[arg(long)]
        seeds: Option<u32>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Total memory budget N.
        #[arg(long)]
        total_memory: Option<u32>,
        /// Comma-separated plan-unit grid override.
        #[arg(long)]
        plan_units: Option<String>,
    },
    /// Run PT-DQN on the jelly bean world for every configured split.
    RunPtdqn {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Total memory budget N the split must match.
        #[arg(long)]
        total_memory: Option<u32>,
        /// Replay-buffer slots.
        #[arg(long)]
        buffer_capacity: Option<u32>,
        /// Comma-separated permanent-fraction override.
        #[arg(long)]
        permanent_fraction: Option<String>,
        /// Print the initial 11x11 window before training.
        #[arg(long)]
        render_ascii: bool,
    },
    /// Render a raw CSV as an SVG chart.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Raw CSV produced by sweep-mcts or run-ptdqn.
        #[arg(long)]
        input: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suite.
    Selftest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlotKind {
    Mcts,
    Ptdqn,
}

/// Entry point used by the binary; returns the process exit code.
pub fn cli_main<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(HarnessError::Validation(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(HarnessError::Runtime(message)) => {
            eprintln!("error: {message}");
            2
        }
    }
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::GenData {
            dataset,
            out,
            config,
            seed,
        } => gen_data(&dataset, &out, config.as_deref(), seed),
        Command::SweepMcts {
            config,
            seeds,
            jobs,
            out,
            total_memory,
            plan_units,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            expect_kind(&cfg, &[ExperimentKind::MctsSweep, ExperimentKind::Baseline])?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(n) = total_memory {
                cfg.total_memory = n;
            }
            if let Some(grid) = plan_units {
                cfg.plan_grid = parse_u32_list(&grid)?;
            }
            apply_seed_env(&mut cfg)?;
            cfg.validate()
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
            sweep_mcts(&cfg, jobs)
        }
        Command::RunPtdqn {
            config,
            seeds,
            jobs,
            out,
            total_memory,
            buffer_capacity,
            permanent_fraction,
            render_ascii,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            expect_kind(
                &cfg,
                &[ExperimentKind::PtdqnSweep, ExperimentKind::Baseline],
            )?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(b) = buffer_capacity {
                cfg.ptdqn.buffer_capacity = b;
            }
            if let Some(fractions) = permanent_fraction {
                cfg.ptdqn.fractions = parse_f64_list(&fractions)?;
            }
            apply_seed_env(&mut cfg)?;
            cfg.validate()
                .map_err(|e| HarnessError::Validation(e.to_string()))?;
            if let Some(n) = total_memory {
                let split = crate::budget::PtSplit::new(
                    cfg.ptdqn.hidden_widths.clone(),
                    cfg.ptdqn.buffer_capacity,
                    0.5,
                );
                if !crate::budget::verify_budget(&split, n) {
                    return Err(HarnessError::Validation(format!(
                        "hidden widths {:?} plus buffer {} use {} units, not the requested {n}",
                        cfg.ptdqn.hidden_widths,
                        cfg.ptdqn.buffer_capacity,
                        split.units()
                    )));
                }
            }
            run_ptdqn(&cfg, jobs, render_ascii)
        }
        Command::Plot { kind, input, out } => plot(kind, &input, &out),
        Command::Selftest => selftest::run().map_err(HarnessError::Runtime),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                HarnessError::Validation(format!("cannot read {}: {e}", path.display()))
            })?;
            ExperimentConfig::from_text(&text)
                .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))
        }
    }
}

fn expect_kind(config: &ExperimentConfig, allowed: &[ExperimentKind]) -> Result<(), HarnessError> {
    if let Some(kind) = config.kind {
        if !allowed.contains(&kind) {
            return Err(HarnessError::Validation(format!(
                "config kind '{}' does not match this subcommand",
                kind.name()
            )));
        }
    }
    Ok(())
}

fn apply_seed_env(config: &mut ExperimentConfig) -> Result<(), HarnessError> {
    if let Ok(value) = std::env::var(MASTER_SEED_ENV) {
        config.master_seed = value.parse().map_err(|_| {
            HarnessError::Validation(format!("{MASTER_SEED_ENV}='{value}' is not a valid u64"))
        })?;
    }
    Ok(())
}

fn parse_u32_list(s: &str) -> Result<Vec<u32>, HarnessError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<u32>()
                .map_err(|_| HarnessError::Validation(format!("bad integer '{p}'")))
        })
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, HarnessError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| HarnessError::Validation(format!("bad number '{p}'")))
        })
        .collect()
}

fn gen_data(
    dataset: &str,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), HarnessError> {
    let kind: DatasetKind = dataset.parse().map_err(HarnessError::Validation)?;
    let mut cfg = load_config(config)?;
    apply_seed_env(&mut cfg)?;
    let seed = seed.unwrap_or(cfg.master_seed);
    let spec = datasets::DatasetSpec { kind, seed };
    let stream = spec
        .generate(&cfg.corridor)
        .map_err(|e| HarnessError::Validation(e.to_string()))?;
    let mut buf = Vec::new();
    datasets::write_transitions_csv(&mut buf, &stream)?;
    write_output(out, &buf)?;
    println!("wrote {} transitions to {}", stream.len(), out.display());
    Ok(())
}

fn sweep_mcts(config: &ExperimentConfig, jobs: usize) -> Result<(), HarnessError> {
    let rows = match config.kind {
        Some(ExperimentKind::Baseline) => run_corridor_baseline(config, jobs)?,
        _ => run_mcts_sweep(config, jobs)?,
    };
    fs::create_dir_all(&config.out_dir)?;
    let raw_path = config.out_dir.join("mcts_raw.csv");
    write_output(&raw_path, format_mcts_raw_csv(&rows).as_bytes())?;
    let agg = aggregate_mcts(&rows);
    let agg_path = config.out_dir.join("mcts_agg.csv");
    write_output(&agg_path, format_mcts_agg_csv(&agg).as_bytes())?;
    println!(
        "{} rows ({} cells) -> {} and {}",
        rows.len(),
        agg.len(),
        raw_path.display(),
        agg_path.display()
    );
    for cell in &agg {
        match cell.se_return {
            Some(se) => println!(
                "  {} n_pi={}: {:.4} +/- {:.4} (n={})",
                cell.dataset, cell.n_pi, cell.mean_return, se, cell.seeds
            ),
            None => println!(
                "  {} n_pi={}: {:.4} (n={})",
                cell.dataset, cell.n_pi, cell.mean_return, cell.seeds
            ),
        }
    }
    Ok(())
}

fn run_ptdqn(
    config: &ExperimentConfig,
    jobs: usize,
    render_ascii: bool,
) -> Result<(), HarnessError> {
    if render_ascii {
        let mut world = JellyBeanWorld::new(config.jellybean.clone(), config.master_seed);
        println!("initial 11x11 window (seed {}):", config.master_seed);
        print!("{}", world.render_ascii());
    }
    let rows = match config.kind {
        Some(ExperimentKind::Baseline) => run_jellybean_baseline(config, jobs)?,
        _ => run_ptdqn_sweep(config, jobs)?,
    };
    fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("ptdqn_traces.csv");
    write_output(&path, format_trace_csv(&rows).as_bytes())?;
    println!("{} trace rows -> {}", rows.len(), path.display());
    // Final-phase summary per fraction.
    let mut fractions: Vec<u64> = Vec::new();
    for r in &rows {
        let bits = r.permanent_fraction.to_bits();
        if !fractions.contains(&bits) {
            fractions.push(bits);
        }
    }
    let last_step = rows.iter().map(|r| r.step).max().unwrap_or(0);
    let cutoff = last_step.saturating_sub(config.jellybean.swap_period / 5);
    for bits in fractions {
        let fraction = f64::from_bits(bits);
        let tail: Vec<f64> = rows
            .iter()
            .filter(|r| r.permanent_fraction.to_bits() == bits && r.step >= cutoff)
            .map(|r| r.reward_smoothed)
            .collect();
        let (mean, _) = super::aggregate::mean_and_se(&tail);
        println!("  fraction {fraction}: final smoothed reward {mean:.4}");
    }
    Ok(())
}

fn plot(kind: PlotKind, input: &Path, out: &Path) -> Result<(), HarnessError> {
    let text = fs::read_to_string(input)
        .map_err(|e| HarnessError::Validation(format!("cannot read {}: {e}", input.display())))?;
    let header = text.lines().next().unwrap_or("");
    let svg = match kind {
        PlotKind::Mcts => {
            if header != MCTS_RAW_HEADER {
                return Err(HarnessError::Validation(format!(
                    "{} is not a raw MCTS sweep CSV (header '{header}')",
                    input.display()
                )));
            }
            let rows = parse_mcts_raw_csv(&text).map_err(HarnessError::Validation)?;
            plot_mcts_sweep(&rows).map_err(HarnessError::Validation)?
        }
        PlotKind::Ptdqn => {
            if header != TRACE_HEADER {
                return Err(HarnessError::Validation(format!(
                    "{} is not a PT-DQN trace CSV (header '{header}')",
                    input.display()
                )));
            }
            let rows = parse_trace_csv(&text).map_err(HarnessError::Validation)?;
            plot_ptdqn_traces(&rows).map_err(HarnessError::Validation)?
        }
    };
    write_output(out, svg.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}
