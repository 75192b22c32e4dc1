//! Command-line front end: simulate paths, estimate drifts from lift CSVs,
//! run Monte Carlo experiments, run the diagnostics battery and tabulate the
//! Itô correction.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roughfou::estimate::estimate_discrete;
use roughfou::fbm::{sample_fbm, PathKind, PathMatrix, PathSeed, SampleGrid};
use roughfou::fou::euler_simulate;
use roughfou::harness::{
    diagnostics, emit_outputs, run_mc, write_diagnostics_csv, ExperimentConfig,
};
use roughfou::rough::{strat_lift, to_ito_lift, CorrectionTable, LiftedPath};

#[derive(Parser)]
#[command(name = "roughfou", version, about = "Fractional Ornstein-Uhlenbeck simulation and rough-path drift estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Experiment configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the Monte Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Full-scale mode: 1000 Monte Carlo paths.
    #[arg(long, default_value_t = false)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one fOU path and its Itô lift; writes path.csv and lift.csv.
    Simulate(CommonOpts),
    /// Estimate the drift from a path CSV and a lift CSV; writes result JSON.
    Estimate {
        #[command(flatten)]
        common: CommonOpts,
        /// Path CSV produced by `simulate`.
        #[arg(long)]
        path: PathBuf,
        /// Lift CSV produced by `simulate`.
        #[arg(long)]
        lift: PathBuf,
    },
    /// Run the Monte Carlo experiment described by the config.
    Mc(CommonOpts),
    /// Run the diagnostics battery; exit code 3 if any check fails.
    Diagnose(CommonOpts),
    /// Tabulate the Itô correction phi^gamma on the configured grid.
    Phi(CommonOpts),
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIAGNOSE_FAILED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn load_config(common: &CommonOpts) -> Result<ExperimentConfig, String> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?
        }
        None => return Err("--config <file.json> is required for this subcommand".into()),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.outputs = out.clone();
    }
    if let Some(paths) = common.paths {
        config.mc_paths = paths;
    }
    if common.full_scale {
        config.mc_paths = 1000;
    }
    Ok(config)
}

fn with_thread_pool<R>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, String>
where
    R: Send,
{
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| format!("building thread pool: {e}"))?;
            Ok(pool.install(f))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Simulate(common) => {
            let config = load_config(&common)?;
            let experiment = config.resolve().map_err(|e| e.to_string())?;
            let cell = *experiment
                .cells
                .first()
                .ok_or_else(|| "config has an empty schedule".to_string())?;
            let model =
                experiment.model.with_hurst(cell.hurst).map_err(|e| e.to_string())?;
            let coarse = SampleGrid::new(cell.horizon, cell.steps).map_err(|e| e.to_string())?;
            let substeps = experiment.config.substeps;
            let fine = coarse.refine(substeps);
            let driver = sample_fbm(
                cell.hurst,
                fine,
                model.dim(),
                PathSeed::new(experiment.config.seed, 0),
            )
            .map_err(|e| e.to_string())?;
            let path = euler_simulate(&model, fine, &driver).map_err(|e| e.to_string())?;
            let lift = strat_lift(&path, substeps).map_err(|e| e.to_string())?;
            let coarse_path = if substeps > 1 {
                path.subsample(substeps).map_err(|e| e.to_string())?
            } else {
                path
            };
            let table = CorrectionTable::new(model.gamma(), cell.hurst, coarse)
                .map_err(|e| e.to_string())?;
            let ito = to_ito_lift(&lift, &table, model.sigma()).map_err(|e| e.to_string())?;

            let dir = &experiment.config.outputs;
            fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
            let mut path_file = fs::File::create(dir.join("path.csv"))
                .map_err(|e| format!("creating path.csv: {e}"))?;
            coarse_path.write_csv(&mut path_file).map_err(|e| e.to_string())?;
            let mut lift_file = fs::File::create(dir.join("lift.csv"))
                .map_err(|e| format!("creating lift.csv: {e}"))?;
            ito.write_csv(&mut lift_file).map_err(|e| e.to_string())?;
            println!("wrote {} and {}", dir.join("path.csv").display(), dir.join("lift.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { common, path, lift } => {
            let path_file = fs::File::open(&path)
                .map_err(|e| format!("opening {}: {e}", path.display()))?;
            let observed = PathMatrix::read_csv(BufReader::new(path_file), PathKind::Fou)
                .map_err(|e| e.to_string())?;
            let lift_file = fs::File::open(&lift)
                .map_err(|e| format!("opening {}: {e}", lift.display()))?;
            let lifted = LiftedPath::read_csv(
                BufReader::new(lift_file),
                Some(observed.grid().horizon()),
                observed.initial_state(),
            )
            .map_err(|e| e.to_string())?;
            let result = estimate_discrete(&lifted, &observed).map_err(|e| e.to_string())?;
            let json = result.to_json();
            match &common.out {
                Some(dir) => {
                    fs::create_dir_all(dir)
                        .map_err(|e| format!("creating {}: {e}", dir.display()))?;
                    let target = dir.join("result.json");
                    fs::write(&target, &json)
                        .map_err(|e| format!("writing {}: {e}", target.display()))?;
                    println!("wrote {}", target.display());
                }
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Mc(common) => {
            let config = load_config(&common)?;
            let experiment = config.resolve().map_err(|e| e.to_string())?;
            let reports = with_thread_pool(common.threads, || run_mc(&experiment))?
                .map_err(|e| e.to_string())?;
            let files = emit_outputs(&experiment, &reports).map_err(|e| e.to_string())?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose(common) => {
            let config = load_config(&common)?;
            let experiment = config.resolve().map_err(|e| e.to_string())?;
            let report = with_thread_pool(common.threads, || diagnostics(&experiment))?
                .map_err(|e| e.to_string())?;
            for check in &report.checks {
                println!(
                    "{}: {} (measured {:.6e}, threshold {:.6e}) — {}",
                    check.name,
                    if check.pass { "pass" } else { "FAIL" },
                    check.measured,
                    check.threshold,
                    check.detail
                );
            }
            let out = write_diagnostics_csv(&experiment.config.outputs, &report)
                .map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
            if report.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_DIAGNOSE_FAILED))
            }
        }
        Command::Phi(common) => {
            let config = load_config(&common)?;
            let experiment = config.resolve().map_err(|e| e.to_string())?;
            let cell = *experiment
                .cells
                .first()
                .ok_or_else(|| "config has an empty schedule".to_string())?;
            let model =
                experiment.model.with_hurst(cell.hurst).map_err(|e| e.to_string())?;
            let grid = SampleGrid::new(cell.horizon, cell.steps).map_err(|e| e.to_string())?;
            let table = CorrectionTable::new(model.gamma(), cell.hurst, grid)
                .map_err(|e| e.to_string())?;
            let dir = &experiment.config.outputs;
            fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
            let target = dir.join("phi.csv");
            let mut out = String::from("l,t");
            let d = model.dim();
            for i in 1..=d {
                for j in 1..=d {
                    out.push_str(&format!(",phi{i}{j}"));
                }
            }
            out.push('\n');
            for l in 0..=grid.steps() {
                out.push_str(&format!("{l},{:.16e}", grid.time(l)));
                let phi = table.at(l);
                for i in 0..d {
                    for j in 0..d {
                        out.push_str(&format!(",{:.16e}", phi.get(i, j)));
                    }
                }
                out.push('\n');
            }
            fs::write(&target, out).map_err(|e| format!("writing {}: {e}", target.display()))?;
            println!("wrote {}", target.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
