//! `mapshare` command line: single runs, batches, map and codebook
//! generation, and field snapshot export.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use mapshare_core::codec::Codebook;
use mapshare_core::engine::mapgen::{generate_map, MapGenParams};
use mapshare_core::engine::metrics::run_batch;
use mapshare_core::engine::scenario::{MapSource, Scenario, Variant};
use mapshare_core::engine::trace::{to_pgm, Field};
use mapshare_core::engine::{run, RunOptions, Snapshots};
use mapshare_core::grid::{save_map, CellIndex};

#[derive(Parser, Debug)]
#[command(name = "mapshare", version, about = "Task-driven exploration with compressed map sharing")]
struct Cli {
    /// Suppress per-run summary lines.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trace CSV plus a scenario sidecar.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Timesteps at which to also write graymaps of x, h, w and r.
        #[arg(long = "snapshot-at", value_delimiter = ',')]
        snapshot_at: Vec<usize>,
    },
    /// Run every batch variant over consecutive seeds and write summary CSVs.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of seeds, starting at the scenario's seed.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a cluttered map file.
    GenMap {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 0.25)]
        density: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cells kept free and connected, as `row,col`.
        #[arg(long, value_parser = parse_cell)]
        start: Option<CellIndex>,
        #[arg(long, value_parser = parse_cell)]
        goal: Option<CellIndex>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled 7×7 codebook.
    GenCodebook {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun a traced scenario and write one field at one timestep as a graymap.
    Export {
        /// Trace CSV written by `run`; its `.toml` sidecar must sit next to it.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        at: usize,
        #[arg(long, value_enum)]
        field: FieldArg,
        /// Output path; defaults to `<trace>_t<at>_<field>.pgm`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldArg {
    X,
    H,
    W,
    R,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::X => Field::Estimate,
            FieldArg::H => Field::Uncertainty,
            FieldArg::W => Field::Weights,
            FieldArg::R => Field::Reward,
        }
    }
}

fn parse_cell(s: &str) -> Result<CellIndex, String> {
    let (r, c) = s.split_once(',').ok_or_else(|| format!("expected row,col, got {s:?}"))?;
    let r = r.trim().parse().map_err(|e| format!("bad row: {e}"))?;
    let c = c.trim().parse().map_err(|e| format!("bad col: {e}"))?;
    Ok(CellIndex::new(r, c))
}

/// Error classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    Scenario(anyhow::Error),
    Write(anyhow::Error),
    Simulation(anyhow::Error),
    Export(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Scenario(_) => 3,
            Failure::Write(_) => 4,
            Failure::Simulation(_) => 5,
            Failure::Export(_) => 6,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Scenario(e) | Failure::Write(e) | Failure::Simulation(e) | Failure::Export(e) => e,
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, seed, out, snapshot_at } => cmd_run(&scenario, seed, &out, &snapshot_at, cli.quiet),
        Command::Batch { scenario, n, out } => cmd_batch(&scenario, n, &out, cli.quiet),
        Command::GenMap { width, height, density, noise, seed, start, goal, out } => {
            cmd_gen_map(width, height, density, noise, seed, start.zip(goal), &out)
        }
        Command::GenCodebook { out } => write(&out, Codebook::default_7x7().to_text()),
        Command::Export { trace, at, field, out } => cmd_export(&trace, at, field.into(), out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let kind = match f {
                Failure::Scenario(_) => "scenario error",
                Failure::Write(_) => "write error",
                Failure::Simulation(_) => "simulation error",
                Failure::Export(_) => "export error",
            };
            eprintln!("mapshare: {kind}: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Failure::Scenario(anyhow!(e)))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Write)?;
    }
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Write)
}

/// Scenario with every relative path made absolute, so a sidecar copy
/// reproduces the run from anywhere.
fn absolutize(mut s: Scenario) -> Scenario {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    if let MapSource::File { path } = &mut s.map {
        *path = abs(path);
    }
    if let Some(p) = &mut s.codebook {
        *p = abs(p);
    }
    s
}

fn cmd_run(path: &Path, seed: Option<u64>, out: &Path, snapshot_at: &[usize], quiet: bool) -> Outcome {
    let mut scenario = load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let snapshots = if snapshot_at.is_empty() {
        Snapshots::None
    } else {
        Snapshots::At(snapshot_at.iter().copied().collect::<BTreeSet<_>>())
    };
    let trace = run(&scenario, RunOptions { snapshots }).map_err(|e| classify(e.into()))?;
    let stem = out.join(format!("run{}", scenario.seed));
    write(&stem.with_extension("csv"), trace.to_csv())?;
    write(&stem.with_extension("toml"), absolutize(scenario).to_toml())?;
    for snap in &trace.snapshots {
        for field in [Field::Estimate, Field::Uncertainty, Field::Weights, Field::Reward] {
            let file = out.join(format!("run{}_t{}_{}.pgm", trace.seed, snap.t, field.short()));
            write(&file, to_pgm(snap.get(field), trace.width, trace.height))?;
        }
    }
    if !quiet {
        println!("{}", trace.summary_line());
    }
    Ok(())
}

/// Scenario problems found while building the run count as scenario errors.
fn classify(e: anyhow::Error) -> Failure {
    match e.downcast_ref::<mapshare_core::engine::EngineError>() {
        Some(mapshare_core::engine::EngineError::Scenario(_)) => Failure::Scenario(e),
        _ => Failure::Simulation(e),
    }
}

fn cmd_batch(path: &Path, n: Option<usize>, out: &Path, quiet: bool) -> Outcome {
    let scenario = load_scenario(path)?;
    let n = n.or(scenario.batch.n).unwrap_or(1);
    if n == 0 {
        return Err(Failure::Scenario(anyhow!("--n must be at least 1")));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| scenario.seed + i).collect();
    let variants = if scenario.batch.variants.is_empty() {
        vec![Variant::of_mode(scenario.mode)]
    } else {
        scenario.batch.variants.clone()
    };
    let report = run_batch(&scenario, &variants, &seeds).map_err(|e| classify(e.into()))?;
    write(&out.join("summary.csv"), report.to_csv())?;
    write(&out.join("variants.csv"), report.summary_csv())?;
    if !quiet {
        for r in &report.records {
            println!(
                "seed={} mode={} cost={:.6} bits={} steps={}",
                r.seed,
                r.label,
                r.cost,
                r.bits,
                r.steps
            );
        }
    }
    Ok(())
}

fn cmd_gen_map(
    width: usize,
    height: usize,
    density: f64,
    noise: f64,
    seed: u64,
    endpoints: Option<(CellIndex, CellIndex)>,
    out: &Path,
) -> Outcome {
    let params = MapGenParams { width, height, density, noise, epsilon: 0.501 };
    let map = generate_map(seed, &params, endpoints).map_err(|e| Failure::Scenario(anyhow!(e)))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Write(anyhow!(e)))?;
    }
    save_map(&map, out).map_err(|e| Failure::Write(anyhow!(e)))
}

fn cmd_export(trace: &Path, at: usize, field: Field, out: Option<PathBuf>) -> Outcome {
    let sidecar = trace.with_extension("toml");
    let scenario = load_scenario(&sidecar).map_err(|f| match f {
        Failure::Scenario(e) => Failure::Export(e.context(format!("reading sidecar {}", sidecar.display()))),
        other => other,
    })?;
    let options = RunOptions { snapshots: Snapshots::At(BTreeSet::from([at])) };
    let tr = run(&scenario, options).map_err(|e| classify(e.into()))?;
    let snap = tr
        .snapshot(at)
        .ok_or_else(|| Failure::Export(anyhow!("timestep {at} not reached; the run has {} steps", tr.actor_steps())))?;
    let out = out.unwrap_or_else(|| {
        let stem = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        trace.with_file_name(format!("{stem}_t{at}_{}.pgm", field.short()))
    });
    write(&out, to_pgm(snap.get(field), tr.width, tr.height))
}
