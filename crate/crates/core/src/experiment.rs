//! Experiment orchestration: configuration, dataset construction, solver
//! runs and on-disk artifacts.
//!
//! Configuration files are INI. The `[experiment]` section describes the
//! object, probe, scan and noise; every `[solver.NAME]` section adds one
//! solver run, in file order:
//!
//! ```ini
//! [experiment]
//! object = texture
//! n = 128
//! m = 32
//! overlap = 0.5
//! eta = 0.05
//! seed = 7
//! max_epochs = 200
//! out = runs/demo
//!
//! [solver.rpie]
//! algorithm = rpie
//! alpha = 0.01
//!
//! [solver.magpie5]
//! algorithm = magpie
//! levels = 5
//! ```
//!
//! Metrics are logged once per epoch, where an epoch is one full sweep over
//! all scanning regions (one iteration for L-BFGS and the exact surrogate).

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{dataset_checksum, export_images, load_grayscale_object, write_complex, write_measurements};
use crate::metrics::{format_row, CSV_HEADER};
use crate::multigrid::max_levels;
use crate::simulate::{
    default_phase_coeff, make_synthetic_object, make_zone_plate_probe, scan_positions, Dataset, ObjectKind,
};
use crate::solvers::{initial_object, run_solver, Algorithm, RunLog, SolverConfig};

pub const METRICS_AXIS: &str = "epoch (one full sweep over all regions; one iteration for lbfgs and exact_surrogate)";

/// Where the ground-truth object comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectSource {
    Synthetic(ObjectKind),
    /// Magnitude and phase graymaps.
    Images { magnitude: PathBuf, phase: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub name: String,
    pub config: SolverConfig,
    /// Shuffle seed; the experiment seed when unset.
    pub seed: Option<u64>,
    /// Epoch cap; the experiment cap when unset.
    pub max_epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub object: ObjectSource,
    /// Master seed; object, noise and shuffle seeds derive from it unless set.
    pub seed: u64,
    pub object_seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub n: usize,
    pub m: usize,
    pub aperture_fraction: f64,
    /// Quadratic pupil phase; [`default_phase_coeff`] when unset.
    pub phase_coeff: Option<f64>,
    pub overlap_ratio: f64,
    pub eta: f64,
    pub max_epochs: usize,
    pub out_dir: PathBuf,
    /// Logs wall-clock time; disable for byte-reproducible logs.
    pub timing: bool,
    /// Runs the solvers concurrently.
    pub parallel: bool,
    pub solvers: Vec<SolverSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            object: ObjectSource::Synthetic(ObjectKind::Texture),
            seed: 0,
            object_seed: None,
            noise_seed: None,
            n: 128,
            m: 32,
            aperture_fraction: 0.5,
            phase_coeff: None,
            overlap_ratio: 0.5,
            eta: 0.05,
            max_epochs: 200,
            out_dir: PathBuf::from("runs"),
            timing: true,
            parallel: true,
            solvers: Vec::new(),
        }
    }
}

/// Command-line overrides; every field replaces its config key when set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub overlap: Option<f64>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub levels: Option<usize>,
    pub tol: Option<f64>,
    pub max_epochs: Option<usize>,
    pub algorithm: Option<Algorithm>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("[{section}] {key} = {value:?}: {e}")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("[{section}] {key} = {other:?}: expected a boolean"))),
    }
}

fn parse_solver(name: &str, props: &Properties) -> Result<SolverSpec> {
    let section = format!("solver.{name}");
    let mut config = SolverConfig::new(name.parse().unwrap_or(Algorithm::Magpie));
    let mut seed = None;
    let mut max_epochs = None;
    let mut algorithm_set = false;
    for (key, value) in props.iter() {
        match key {
            "algorithm" => {
                config.algorithm = parse_value(&section, key, value)?;
                algorithm_set = true;
            }
            "alpha" => config.alpha = parse_value(&section, key, value)?,
            "levels" => config.levels = parse_value(&section, key, value)?,
            "tol" => config.tol = parse_value(&section, key, value)?,
            "max_epochs" => max_epochs = Some(parse_value(&section, key, value)?),
            "seed" => seed = Some(parse_value(&section, key, value)?),
            "lbfgs_history" => config.lbfgs_history = parse_value(&section, key, value)?,
            other => return Err(Error::Config(format!("[{section}] unknown key {other:?}"))),
        }
    }
    if !algorithm_set && name.parse::<Algorithm>().is_err() {
        return Err(Error::Config(format!("[{section}] needs an algorithm key")));
    }
    Ok(SolverSpec {
        name: name.to_string(),
        config,
        seed,
        max_epochs,
    })
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        let mut cfg = Self::default();
        let mut magnitude = None;
        let mut phase = None;
        let mut kind = ObjectKind::Texture;
        for (section, props) in ini.iter() {
            match section {
                None if props.is_empty() => {}
                None => return Err(Error::Config("keys must be inside a section".into())),
                Some("experiment") => {
                    for (key, value) in props.iter() {
                        let s = "experiment";
                        match key {
                            "object" => kind = parse_value(s, key, value)?,
                            "object_magnitude" => magnitude = Some(PathBuf::from(value.trim())),
                            "object_phase" => phase = Some(PathBuf::from(value.trim())),
                            "seed" => cfg.seed = parse_value(s, key, value)?,
                            "object_seed" => cfg.object_seed = Some(parse_value(s, key, value)?),
                            "noise_seed" => cfg.noise_seed = Some(parse_value(s, key, value)?),
                            "n" => cfg.n = parse_value(s, key, value)?,
                            "m" => cfg.m = parse_value(s, key, value)?,
                            "aperture" => cfg.aperture_fraction = parse_value(s, key, value)?,
                            "phase_coeff" => cfg.phase_coeff = Some(parse_value(s, key, value)?),
                            "overlap" => cfg.overlap_ratio = parse_value(s, key, value)?,
                            "eta" => cfg.eta = parse_value(s, key, value)?,
                            "max_epochs" => cfg.max_epochs = parse_value(s, key, value)?,
                            "out" => cfg.out_dir = PathBuf::from(value.trim()),
                            "timing" => cfg.timing = parse_bool(s, key, value)?,
                            "parallel" => cfg.parallel = parse_bool(s, key, value)?,
                            other => return Err(Error::Config(format!("[experiment] unknown key {other:?}"))),
                        }
                    }
                }
                Some(name) => match name.strip_prefix("solver.") {
                    Some(solver) if !solver.is_empty() => cfg.solvers.push(parse_solver(solver, props)?),
                    _ => return Err(Error::Config(format!("unknown section [{name}]"))),
                },
            }
        }
        cfg.object = match (magnitude, phase) {
            (Some(magnitude), Some(phase)) => ObjectSource::Images { magnitude, phase },
            (None, None) => ObjectSource::Synthetic(kind),
            _ => {
                return Err(Error::Config(
                    "object_magnitude and object_phase must be given together".into(),
                ))
            }
        };
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    /// Solver list used when the config names none: rPIE and the deepest MAGPIE.
    pub fn default_solvers(m: usize) -> Vec<SolverSpec> {
        let magpie = SolverConfig {
            levels: max_levels(m),
            ..SolverConfig::new(Algorithm::Magpie)
        };
        vec![
            SolverSpec {
                name: "rpie".into(),
                config: SolverConfig::new(Algorithm::Rpie),
                seed: None,
                max_epochs: None,
            },
            SolverSpec {
                name: format!("magpie{}", magpie.levels),
                config: magpie,
                seed: None,
                max_epochs: None,
            },
        ]
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.m {
            self.m = v;
        }
        if let Some(v) = o.overlap {
            self.overlap_ratio = v;
        }
        if let Some(v) = o.eta {
            self.eta = v;
        }
        if let Some(v) = o.max_epochs {
            self.max_epochs = v;
        }
        if let Some(v) = &o.out {
            self.out_dir = v.clone();
        }
        for spec in &mut self.solvers {
            if let Some(v) = o.algorithm {
                spec.config.algorithm = v;
            }
            if let Some(v) = o.alpha {
                spec.config.alpha = v;
            }
            if let Some(v) = o.levels {
                spec.config.levels = v;
            }
            if let Some(v) = o.tol {
                spec.config.tol = v;
            }
            if o.max_epochs.is_some() {
                spec.max_epochs = None;
            }
        }
    }

    pub fn object_seed(&self) -> u64 {
        self.object_seed.unwrap_or(self.seed)
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed)
    }

    pub fn phase_coeff(&self) -> f64 {
        self.phase_coeff
            .unwrap_or_else(|| default_phase_coeff(self.m, self.aperture_fraction))
    }

    /// Fully resolved solver configuration for `spec`.
    pub fn solver_config(&self, spec: &SolverSpec) -> SolverConfig {
        SolverConfig {
            seed: spec.seed.unwrap_or(self.seed),
            max_epochs: spec.max_epochs.unwrap_or(self.max_epochs),
            record_time: self.timing,
            ..spec.config.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || !self.m.is_power_of_two() {
            return Err(Error::Config(format!("m must be a power of two, got {}", self.m)));
        }
        if self.n < self.m {
            return Err(Error::Config(format!("n = {} is smaller than m = {}", self.n, self.m)));
        }
        if !(0.0..1.0).contains(&self.overlap_ratio) {
            return Err(Error::Config(format!("overlap must lie in [0, 1), got {}", self.overlap_ratio)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be non-negative, got {}", self.eta)));
        }
        if !(self.aperture_fraction > 0.0 && self.aperture_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "aperture must lie in (0, 1], got {}",
                self.aperture_fraction
            )));
        }
        let mut names = std::collections::HashSet::new();
        for spec in &self.solvers {
            if !names.insert(spec.name.as_str()) {
                return Err(Error::Config(format!("duplicate solver name {:?}", spec.name)));
            }
            if spec.name.contains(['/', '\\']) || spec.name == "." || spec.name == ".." {
                return Err(Error::Config(format!("solver name {:?} is not a directory name", spec.name)));
            }
            self.solver_config(spec).validate(self.m)?;
        }
        Ok(())
    }

    /// Echo of the resolved configuration, as written to manifests.
    pub fn to_ini(&self) -> Ini {
        let mut ini = Ini::new();
        {
            let mut s = ini.with_section(Some("experiment"));
            match &self.object {
                ObjectSource::Synthetic(kind) => {
                    s.set("object", kind.to_string());
                }
                ObjectSource::Images { magnitude, phase } => {
                    s.set("object_magnitude", magnitude.display().to_string());
                    s.set("object_phase", phase.display().to_string());
                }
            }
            s.set("seed", self.seed.to_string())
                .set("object_seed", self.object_seed().to_string())
                .set("noise_seed", self.noise_seed().to_string())
                .set("n", self.n.to_string())
                .set("m", self.m.to_string())
                .set("aperture", self.aperture_fraction.to_string())
                .set("phase_coeff", self.phase_coeff().to_string())
                .set("overlap", self.overlap_ratio.to_string())
                .set("eta", self.eta.to_string())
                .set("max_epochs", self.max_epochs.to_string())
                .set("timing", self.timing.to_string());
        }
        for spec in &self.solvers {
            let c = self.solver_config(spec);
            ini.with_section(Some(format!("solver.{}", spec.name)))
                .set("algorithm", c.algorithm.to_string())
                .set("alpha", c.alpha.to_string())
                .set("levels", c.levels.to_string())
                .set("tol", c.tol.to_string())
                .set("max_epochs", c.max_epochs.to_string())
                .set("seed", c.seed.to_string())
                .set("lbfgs_history", c.lbfgs_history.to_string());
        }
        ini
    }
}

/// Builds the probe, object and noisy measurements described by `cfg`.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    cfg.validate()?;
    let probe = make_zone_plate_probe(cfg.m, cfg.aperture_fraction, cfg.phase_coeff())?;
    let object = match &cfg.object {
        ObjectSource::Synthetic(kind) => make_synthetic_object(cfg.n, *kind, cfg.object_seed()),
        ObjectSource::Images { magnitude, phase } => load_grayscale_object(magnitude, phase, cfg.n)?,
    };
    let plan = scan_positions(cfg.n, cfg.m, cfg.overlap_ratio)?;
    Dataset::simulate(object, probe, plan, cfg.eta, cfg.noise_seed())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::from)
}

fn write_ini(path: &Path, ini: &Ini) -> Result<()> {
    ini.write_to_file(path).map_err(Error::from)
}

/// Writes `probe.cf2d`, `object.cf2d`, `measurements.meas` and a manifest.
pub fn write_dataset(cfg: &ExperimentConfig, data: &Dataset<f64>, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir)?;
    write_complex(dir.join("probe.cf2d"), &data.probe)?;
    if let Some(truth) = &data.ground_truth {
        write_complex(dir.join("object.cf2d"), truth)?;
    }
    write_measurements(dir.join("measurements.meas"), &data.measurements)?;
    let checksum = dataset_checksum(data);
    let mut ini = cfg.to_ini();
    ini.with_section(Some("dataset"))
        .set("checksum_sha256", checksum.clone())
        .set("regions", data.regions().len().to_string())
        .set("scan_step", data.plan.step.to_string());
    write_ini(&dir.join("manifest.ini"), &ini)?;
    Ok(checksum)
}

/// Outcome of one configured solver.
#[derive(Clone, Debug)]
pub struct SolverOutcome {
    pub name: String,
    pub config: SolverConfig,
    pub dir: PathBuf,
    pub result: std::result::Result<RunLog, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub checksum: String,
    pub outcomes: Vec<SolverOutcome>,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.outcomes.iter().all(|o| o.result.is_ok())
    }

    /// Rows of every successful run, prefixed with the solver name.
    pub fn compare_csv(&self) -> String {
        let mut s = format!("solver,{CSV_HEADER}\n");
        for o in &self.outcomes {
            if let Ok(log) = &o.result {
                for row in &log.rows {
                    s.push_str(&o.name);
                    s.push(',');
                    s.push_str(&format_row(row));
                    s.push('\n');
                }
            }
        }
        s
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    spec: &SolverSpec,
    data: &Dataset<f64>,
    z0: &crate::grid::ComplexField<f64>,
) -> SolverOutcome {
    let config = cfg.solver_config(spec);
    let dir = cfg.out_dir.join(&spec.name);
    let result = (|| -> Result<RunLog> {
        fs::create_dir_all(&dir)?;
        let (z, log) = run_solver(z0, data, &config)?;
        write_text(&dir.join("log.csv"), &log.to_csv())?;
        write_complex(dir.join("recon.cf2d"), &z)?;
        export_images(&z, &dir)?;
        Ok(log)
    })();
    let result = result.map_err(|e| {
        let msg = e.to_string();
        let _ = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("error.txt"), &msg));
        msg
    });
    SolverOutcome {
        name: spec.name.clone(),
        config,
        dir,
        result,
    }
}

/// Builds the dataset once and runs every configured solver from the same
/// starting object. Solver failures are recorded per solver; I/O failures on
/// the experiment directory abort the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    if cfg.solvers.is_empty() {
        cfg.solvers = ExperimentConfig::default_solvers(cfg.m);
    }
    cfg.validate()?;
    let data = build_dataset(&cfg)?;
    let checksum = write_dataset(&cfg, &data, &cfg.out_dir)?;
    let z0 = initial_object(cfg.n);
    let outcomes: Vec<SolverOutcome> = if cfg.parallel {
        cfg.solvers.par_iter().map(|s| run_one(&cfg, s, &data, &z0)).collect()
    } else {
        cfg.solvers.iter().map(|s| run_one(&cfg, s, &data, &z0)).collect()
    };
    let report = ExperimentReport { checksum, outcomes };
    let mut manifest = cfg.to_ini();
    manifest
        .with_section(Some("dataset"))
        .set("checksum_sha256", report.checksum.clone())
        .set("regions", data.regions().len().to_string())
        .set("scan_step", data.plan.step.to_string());
    manifest.with_section(Some("logging")).set("metrics_axis", METRICS_AXIS);
    for o in &report.outcomes {
        let mut s = manifest.with_section(Some(format!("result.{}", o.name)));
        s.set("dataset_checksum_sha256", report.checksum.clone());
        match &o.result {
            Ok(log) => {
                s.set("status", log.status.to_string())
                    .set("epochs", log.last().epoch.to_string());
            }
            Err(e) => {
                s.set("status", "failed").set("error", e.clone());
            }
        }
    }
    write_ini(&cfg.out_dir.join("manifest.ini"), &manifest)?;
    write_text(&cfg.out_dir.join("compare.csv"), &report.compare_csv())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_in_order() {
        let cfg = ExperimentConfig::from_ini_str(
            "[experiment]\nobject = circuit\nn = 32\nm = 8\nseed = 4\ntiming = false\n\n\
             [solver.b]\nalgorithm = magpie\nlevels = 3\n\n[solver.rpie]\nalpha = 0.025\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.object, ObjectSource::Synthetic(ObjectKind::Circuit));
        assert_eq!((cfg.n, cfg.m, cfg.seed, cfg.timing), (32, 8, 4, false));
        assert_eq!(cfg.solvers.len(), 2);
        assert_eq!(cfg.solvers[0].name, "b");
        assert_eq!(cfg.solvers[0].config.levels, 3);
        assert_eq!(cfg.solvers[1].config.algorithm, Algorithm::Rpie);
        let resolved = cfg.solver_config(&cfg.solvers[1]);
        assert_eq!((resolved.seed, resolved.alpha, resolved.record_time), (9, 0.025, false));
        assert_eq!(cfg.solver_config(&cfg.solvers[0]).seed, 4);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "[experiment]\nbogus = 1\n",
            "[experiment]\nn = -3\n",
            "[solver.x]\nlevels = 2\n",
            "[other]\n",
            "[experiment]\nobject_magnitude = a.pgm\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_ini_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
        let mut cfg = ExperimentConfig::from_ini_str("[experiment]\nm = 8\n[solver.magpie]\nlevels = 9\n").unwrap();
        assert!(cfg.validate().is_err());
        cfg.apply(&Overrides {
            levels: Some(4),
            ..Default::default()
        });
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_replace_keys() {
        let mut cfg = ExperimentConfig::from_ini_str("[experiment]\nn = 64\n[solver.r]\nalgorithm = rpie\nmax_epochs = 7\n").unwrap();
        cfg.apply(&Overrides {
            n: Some(16),
            alpha: Some(0.5),
            max_epochs: Some(3),
            ..Default::default()
        });
        assert_eq!(cfg.n, 16);
        let c = cfg.solver_config(&cfg.solvers[0]);
        assert_eq!((c.alpha, c.max_epochs), (0.5, 3));
    }

    #[test]
    fn manifest_echo_parses_back() {
        let mut cfg = ExperimentConfig {
            solvers: ExperimentConfig::default_solvers(32),
            ..Default::default()
        };
        cfg.timing = false;
        let mut buf = Vec::new();
        cfg.to_ini().write_to(&mut buf).unwrap();
        let back = ExperimentConfig::from_ini_str(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(back.n, cfg.n);
        assert_eq!(back.solvers.len(), 2);
        assert_eq!(back.solver_config(&back.solvers[1]), cfg.solver_config(&cfg.solvers[1]));
    }
}
