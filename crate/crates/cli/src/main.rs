use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magpie_core::experiment::{
    build_dataset, run_experiment, write_dataset, ExperimentConfig, ExperimentReport, Overrides, SolverSpec,
};
use magpie_core::io::{export_images, write_complex};
use magpie_core::simulate::{make_synthetic_object, make_zone_plate_probe};
use magpie_core::{properties, Algorithm, Error, ObjectKind, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "magpie", version, about = "Multilevel ptychographic reconstruction harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// INI experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Object side length.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Probe side length.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    overlap: Option<f64>,
    /// Poisson noise level.
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    levels: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_epochs: Option<usize>,
    /// rpie, magpie, lbfgs or exact_surrogate.
    #[arg(long, global = true)]
    algorithm: Option<Algorithm>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the probe as CF2D plus magnitude/phase images.
    Probe,
    /// Write the ground-truth object as CF2D plus magnitude/phase images.
    Object {
        /// Synthetic object kind; overrides the config.
        #[arg(long)]
        kind: Option<ObjectKind>,
    },
    /// Write probe, object, measurements and a manifest.
    Simulate,
    /// Run a single solver.
    Reconstruct,
    /// Run every configured solver on one dataset and write compare.csv.
    Compare,
    /// Run the property suites.
    Verify,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            n: self.n,
            m: self.m,
            overlap: self.overlap,
            eta: self.eta,
            alpha: self.alpha,
            levels: self.levels,
            tol: self.tol,
            max_epochs: self.max_epochs,
            algorithm: self.algorithm,
            out: self.out.clone(),
        }
    }

    fn load(&self) -> magpie_core::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn write_field(dir: &Path, name: &str, z: &magpie_core::ComplexField2D) -> magpie_core::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_complex(dir.join(format!("{name}.cf2d")), z)?;
    let images = dir.join(name);
    export_images(z, &images)?;
    println!("wrote {}", dir.join(format!("{name}.cf2d")).display());
    Ok(())
}

/// Solver list for `reconstruct`: the first configured solver, or one built
/// from the flags.
fn single_solver(cfg: &mut ExperimentConfig, flags: &Flags) {
    if let Some(first) = cfg.solvers.first().cloned() {
        cfg.solvers = vec![first];
        return;
    }
    let algorithm = flags.algorithm.unwrap_or(Algorithm::Magpie);
    let mut config = SolverConfig::new(algorithm);
    if algorithm == Algorithm::Magpie {
        config.levels = magpie_core::multigrid::max_levels(cfg.m);
    }
    cfg.solvers = vec![SolverSpec {
        name: algorithm.name().to_string(),
        config,
        seed: None,
        max_epochs: None,
    }];
    cfg.apply(&flags.overrides());
}

fn summarize(report: &ExperimentReport) -> Result<(), Failure> {
    println!("dataset sha256 {}", report.checksum);
    let mut failed = Vec::new();
    for o in &report.outcomes {
        match &o.result {
            Ok(log) => {
                let last = log.last();
                let error = last.error.map_or_else(|| "-".to_string(), |e| format!("{e:.6e}"));
                println!(
                    "{:<16} {:<18} epochs {:>5}  residual {:.6e}  error {}  criterion {:.6e}",
                    o.name, log.status.to_string(), last.epoch, last.residual, error, last.grad_criterion
                );
            }
            Err(e) => {
                println!("{:<16} failed: {e}", o.name);
                failed.push(o.name.clone());
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(format!("failed solvers: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let flags = &cli.flags;
    let mut cfg = flags.load()?;
    match cli.command {
        Command::Probe => {
            cfg.validate()?;
            let probe = make_zone_plate_probe::<f64>(cfg.m, cfg.aperture_fraction, cfg.phase_coeff())?;
            write_field(&cfg.out_dir, "probe", &probe)?;
        }
        Command::Object { kind } => {
            cfg.validate()?;
            let object = match kind {
                Some(kind) => make_synthetic_object::<f64>(cfg.n, kind, cfg.object_seed()),
                None => build_dataset(&cfg)?
                    .ground_truth
                    .ok_or_else(|| Failure::Solver("dataset has no ground truth".into()))?,
            };
            write_field(&cfg.out_dir, "object", &object)?;
        }
        Command::Simulate => {
            let data = build_dataset(&cfg)?;
            let checksum = write_dataset(&cfg, &data, &cfg.out_dir)?;
            println!(
                "wrote {} regions to {} (sha256 {checksum})",
                data.regions().len(),
                cfg.out_dir.display()
            );
        }
        Command::Reconstruct => {
            single_solver(&mut cfg, flags);
            summarize(&run_experiment(&cfg)?)?;
        }
        Command::Compare => {
            if cfg.solvers.is_empty() {
                cfg.solvers = ExperimentConfig::default_solvers(cfg.m);
                cfg.apply(&flags.overrides());
            }
            let report = run_experiment(&cfg)?;
            println!("wrote {}", cfg.out_dir.join("compare.csv").display());
            summarize(&report)?;
        }
        Command::Verify => {
            let reports = properties::run_all(cfg.seed)?;
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                return Err(Failure::Solver(format!("{failed} of {} properties failed", reports.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
