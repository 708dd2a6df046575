use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fourier::Dft2;
use crate::grid::{ComplexField, RealField};
use crate::scalar::Real;
use crate::simulate::Dataset;

use super::{drive, sweep, EpochOutcome, RunLog, SolverConfig, SweepState};

/// `α(‖Q‖∞²·1 − |Q|²)`.
pub fn rpie_regularizer<R: Real>(probe: &ComplexField<R>, alpha: f64) -> Result<RealField<R>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let energy = probe.abs_sq();
    let peak = energy.max_value();
    if !(peak > R::zero()) {
        return Err(Error::Domain("probe is identically zero".into()));
    }
    let a = R::lit(alpha);
    Ok(energy.map(|e| a * (peak - e)))
}

fn check_shapes<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    revised: &ComplexField<R>,
    u: &RealField<R>,
) -> Result<()> {
    z_k.ensure_same_shape(probe, "patch vs probe")?;
    z_k.ensure_same_shape(revised, "patch vs revised exit wave")?;
    z_k.ensure_same_shape(u, "patch vs regularizer")
}

fn step<R: Real>(z: Complex<R>, q: Complex<R>, r: Complex<R>, u: R) -> Complex<R> {
    z + q.conj() * (r - q * z) / (u + q.norm_sqr())
}

/// Proximal step `z_k + conj(Q) ⊘ (u + |Q|²) ⊙ (R_k − Q ⊙ z_k)`.
pub fn rpie_region_update<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    revised: &ComplexField<R>,
    u: &RealField<R>,
) -> Result<ComplexField<R>> {
    check_shapes(z_k, probe, revised, u)?;
    let mut out = z_k.clone();
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        let q = probe.as_slice()[i];
        let uu = u.as_slice()[i];
        if !(uu + q.norm_sqr() > R::zero()) {
            return Err(Error::NumericalGuard(format!(
                "u + |Q|² is not positive at pixel {i}"
            )));
        }
        *o = step(*o, q, revised.as_slice()[i], uu);
    }
    Ok(out)
}

/// As [`rpie_region_update`], but pixels with `u + |Q|² = 0` are left
/// unchanged. Used on coarse levels, where the probe may vanish on a bin.
pub fn proximal_step_guarded<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    revised: &ComplexField<R>,
    u: &RealField<R>,
) -> Result<ComplexField<R>> {
    check_shapes(z_k, probe, revised, u)?;
    let mut out = z_k.clone();
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        let q = probe.as_slice()[i];
        let uu = u.as_slice()[i];
        if uu + q.norm_sqr() > R::zero() {
            *o = step(*o, q, revised.as_slice()[i], uu);
        }
    }
    Ok(out)
}

/// One shuffled rPIE sweep.
pub fn rpie_epoch<R: Real>(
    state: &mut SweepState<R>,
    data: &Dataset<R>,
    u: &RealField<R>,
    dft: &Dft2<R>,
) -> Result<()> {
    let probe = &data.probe;
    sweep(state, data, dft, |z_k, r_k| rpie_region_update(z_k, probe, r_k, u))
}

pub fn rpie_run<R: Real>(
    z0: &ComplexField<R>,
    data: &Dataset<R>,
    config: &SolverConfig,
) -> Result<(ComplexField<R>, RunLog)> {
    config.validate(data.probe_size())?;
    let u = rpie_regularizer(&data.probe, config.alpha)?;
    let dft = Dft2::square(data.probe_size());
    let mut state = SweepState::new(z0.clone(), data, config.seed)?;
    let log = drive(config, data, &mut state, |s| (&s.z, &s.phases), |s| {
        rpie_epoch(s, data, &u, &dft)?;
        Ok(EpochOutcome::Continue)
    })?;
    Ok((state.z, log))
}
