//! Reconstruction algorithms and the shared sweep machinery.
//!
//! All solvers start from the same `z0` (see [`initial_object`]) and log one
//! [`MetricRow`] per epoch, starting with epoch 0 for the initial state. The
//! stopping test is evaluated after every epoch, never on epoch 0.

mod exact;
mod lbfgs;
mod magpie;
mod rpie;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Dft2;
use crate::grid::{ComplexField, Field2D, RealField};
use crate::metrics::{check_stop, compute_metrics_with, MetricRow};
use crate::multigrid::max_levels;
use crate::scalar::Real;
use crate::simulate::Dataset;
use crate::surrogate::{region_gradient, revised_exit_wave_from_amplitude, PhaseCache};

pub use exact::{exact_surrogate_run, exact_surrogate_step, ExactStep, ExactSurrogate};
pub use lbfgs::lbfgs_run;
pub use magpie::{magpie_epoch, magpie_run, magps_coarse_direction, magps_update};
pub use rpie::{proximal_step_guarded, rpie_epoch, rpie_region_update, rpie_regularizer, rpie_run};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Rpie,
    ExactSurrogate,
    Lbfgs,
    Magpie,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rpie => "rpie",
            Algorithm::ExactSurrogate => "exact_surrogate",
            Algorithm::Lbfgs => "lbfgs",
            Algorithm::Magpie => "magpie",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rpie" => Ok(Algorithm::Rpie),
            "exact_surrogate" | "exact" => Ok(Algorithm::ExactSurrogate),
            "lbfgs" | "l_bfgs" => Ok(Algorithm::Lbfgs),
            "magpie" => Ok(Algorithm::Magpie),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// rPIE regularization constant.
    pub alpha: f64,
    /// MAGPIE depth; 1 reproduces rPIE.
    pub levels: usize,
    pub tol: f64,
    pub max_epochs: usize,
    /// Seeds the region shuffle.
    pub seed: u64,
    pub lbfgs_history: usize,
    /// When false, `wall_ms` is logged as 0 so logs are reproducible byte for byte.
    pub record_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Magpie,
            alpha: 0.01,
            levels: 1,
            tol: 1e-4,
            max_epochs: 100,
            seed: 0,
            lbfgs_history: 5,
            record_time: true,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    /// Checks ranges against a probe of size `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.levels == 0 || self.levels > max_levels(m) {
            return Err(Error::Config(format!(
                "levels must be in 1..={} for m = {m}, got {}",
                max_levels(m),
                self.levels
            )));
        }
        if self.lbfgs_history == 0 {
            return Err(Error::Config("lbfgs_history must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    EpochLimit,
    LineSearchFailed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::EpochLimit => "epoch_limit",
            RunStatus::LineSearchFailed => "line_search_failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub config: SolverConfig,
    pub rows: Vec<MetricRow>,
    pub status: RunStatus,
}

impl RunLog {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn last(&self) -> &MetricRow {
        self.rows.last().expect("a run log always holds epoch 0")
    }

    /// First epoch at which the stopping test held, if any.
    pub fn epochs_to_tol(&self) -> Option<usize> {
        match self.status {
            RunStatus::Converged => Some(self.last().epoch),
            _ => None,
        }
    }

    pub fn to_csv(&self) -> String {
        crate::metrics::rows_to_csv(&self.rows)
    }
}

/// All-ones starting object of size `n`.
pub fn initial_object<R: Real>(n: usize) -> ComplexField<R> {
    ComplexField::ones(n, n)
}

pub(crate) fn check_initial<R: Real>(z0: &ComplexField<R>, data: &Dataset<R>) -> Result<()> {
    let n = data.object_size();
    if z0.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "initial object is {}x{}, expected {n}x{n}",
            z0.width(),
            z0.height()
        )));
    }
    Ok(())
}

/// Iterate, per-region phase caches and shuffle generator of a sweep-based run.
#[derive(Clone, Debug)]
pub struct SweepState<R: Real> {
    pub z: ComplexField<R>,
    pub phases: PhaseCache<R>,
    rng: ChaCha8Rng,
}

impl<R: Real> SweepState<R> {
    pub fn new(z0: ComplexField<R>, data: &Dataset<R>, seed: u64) -> Result<Self> {
        check_initial(&z0, data)?;
        Ok(Self {
            z: z0,
            phases: PhaseCache::new(data.regions().len(), data.probe_size()),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Fresh Fisher–Yates permutation of `0..count`.
    pub fn shuffled_order(&mut self, count: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut self.rng);
        order
    }
}

/// One shuffled pass over all regions. For each region the revised exit wave
/// is refreshed at the current patch, `update(z_k, R_k)` produces the new
/// patch and it is written back before the next region is visited.
pub fn sweep<R: Real>(
    state: &mut SweepState<R>,
    data: &Dataset<R>,
    dft: &Dft2<R>,
    mut update: impl FnMut(&ComplexField<R>, &ComplexField<R>) -> Result<ComplexField<R>>,
) -> Result<()> {
    let order = state.shuffled_order(data.regions().len());
    for k in order {
        let region = &data.regions()[k];
        let z_k = state.z.extract_region(region)?;
        let revised = revised_exit_wave_from_amplitude(
            &z_k,
            &data.probe,
            &data.amplitudes()[k],
            state.phases.slice_mut(k),
            dft,
        )?;
        let next = update(&z_k, &revised)?;
        state.z.set_region(&next, region)?;
    }
    Ok(())
}

/// `Φ(z)` and `∇Φ(z) = Σ_k P_kᵀ conj(Q) ⊙ (Q ⊙ z_k − R_k)`, refreshing the
/// phase caches.
pub fn objective_and_gradient<R: Real>(
    z: &ComplexField<R>,
    data: &Dataset<R>,
    phases: &mut PhaseCache<R>,
    dft: &Dft2<R>,
) -> Result<(R, ComplexField<R>)> {
    let parts = region_terms(z, data, phases, dft)?;
    let n = data.object_size();
    let mut grad = Field2D::zeros(n, n);
    let mut phi = R::zero();
    for (region, (phi_k, g_k, _)) in data.regions().iter().zip(parts) {
        phi += phi_k;
        grad.embed_add_region(&g_k, region)?;
    }
    Ok((phi, grad))
}

/// `(Φ_k, ∇Φ_k, R_k)` of one region.
pub(crate) type RegionTerms<R> = (R, ComplexField<R>, ComplexField<R>);

/// Per region: `(Φ_k, ∇Φ_k, R_k)` at `P_k z`.
pub(crate) fn region_terms<R: Real>(
    z: &ComplexField<R>,
    data: &Dataset<R>,
    phases: &mut PhaseCache<R>,
    dft: &Dft2<R>,
) -> Result<Vec<RegionTerms<R>>> {
    data.regions()
        .par_iter()
        .zip(data.amplitudes().par_iter())
        .zip(phases.slices_mut().par_iter_mut())
        .map(|((region, amplitude), cache)| {
            let z_k = z.extract_region(region)?;
            let revised =
                revised_exit_wave_from_amplitude(&z_k, &data.probe, amplitude, cache, dft)?;
            let g = region_gradient(&z_k, &data.probe, &revised)?;
            let residual = data.probe.hadamard(&z_k).sub(&revised);
            Ok((residual.norm_sq() * R::lit(0.5), g, revised))
        })
        .collect()
}

/// Epoch loop shared by the sweep-based solvers: logs epoch 0, then runs
/// `epoch` until the stopping test holds or `max_epochs` is reached.
pub(crate) fn drive<R: Real, S>(
    config: &SolverConfig,
    data: &Dataset<R>,
    state: &mut S,
    current: impl Fn(&S) -> (&ComplexField<R>, &PhaseCache<R>),
    mut epoch: impl FnMut(&mut S) -> Result<EpochOutcome>,
) -> Result<RunLog> {
    let dft = Dft2::square(data.probe_size());
    let metrics = |s: &S, e: usize, elapsed: Duration| -> Result<MetricRow> {
        let (z, phases) = current(s);
        let mut row = compute_metrics_with(z, data, phases, &dft)?;
        row.epoch = e;
        row.wall_ms = if config.record_time { elapsed.as_secs_f64() * 1e3 } else { 0.0 };
        Ok(row)
    };
    let mut elapsed = Duration::ZERO;
    let mut rows = vec![metrics(state, 0, elapsed)?];
    let mut status = RunStatus::EpochLimit;
    for e in 1..=config.max_epochs {
        let start = Instant::now();
        let outcome = epoch(state)?;
        elapsed += start.elapsed();
        let row = metrics(state, e, elapsed)?;
        if !row.is_finite() || !current(state).0.all_finite() {
            return Err(Error::NumericalGuard(format!(
                "{} produced a non-finite iterate at epoch {e}",
                config.algorithm
            )));
        }
        let stop = check_stop(&row, config.tol);
        rows.push(row);
        match outcome {
            _ if stop => {
                status = RunStatus::Converged;
                break;
            }
            EpochOutcome::Continue => {}
            EpochOutcome::Stationary => {
                status = RunStatus::Converged;
                break;
            }
            EpochOutcome::LineSearchFailed => {
                status = RunStatus::LineSearchFailed;
                break;
            }
        }
    }
    Ok(RunLog {
        config: config.clone(),
        rows,
        status,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum EpochOutcome {
    Continue,
    Stationary,
    LineSearchFailed,
}

/// Dispatches on `config.algorithm`.
pub fn run_solver<R: Real>(
    z0: &ComplexField<R>,
    data: &Dataset<R>,
    config: &SolverConfig,
) -> Result<(ComplexField<R>, RunLog)> {
    match config.algorithm {
        Algorithm::Rpie => rpie_run(z0, data, config),
        Algorithm::ExactSurrogate => exact_surrogate_run(z0, data, config),
        Algorithm::Lbfgs => lbfgs_run(z0, data, config),
        Algorithm::Magpie => magpie_run(z0, data, config),
    }
}

/// `α(‖Q‖∞²·1 − |Q|²)` for the dataset probe.
pub fn fine_regularizer<R: Real>(data: &Dataset<R>, alpha: f64) -> Result<RealField<R>> {
    rpie_regularizer(&data.probe, alpha)
}
