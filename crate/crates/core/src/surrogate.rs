//! Revised exit waves, per-region and global misfits, complex gradients and
//! the quadratic surrogate that majorizes the misfit.
//!
//! Gradients follow the ℝ² embedding convention `∇ = ∇_re + i ∇_im`, so the
//! first-order change of a real objective along a complex direction `h` is
//! `Re Σ conj(∇)·h`.

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Dft2;
use crate::grid::{ComplexField, Field2D, RealField, RegionIndex};
use crate::scalar::Real;

/// Per-region unit-modulus phase factors used where the current Fourier
/// coefficient vanishes. Starts at phase zero everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCache<R: Real> {
    slices: Vec<ComplexField<R>>,
}

impl<R: Real> PhaseCache<R> {
    pub fn new(regions: usize, size: usize) -> Self {
        Self {
            slices: vec![ComplexField::ones(size, size); regions],
        }
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice(&self, k: usize) -> &ComplexField<R> {
        &self.slices[k]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut ComplexField<R> {
        &mut self.slices[k]
    }

    pub fn slices_mut(&mut self) -> &mut [ComplexField<R>] {
        &mut self.slices
    }

    /// Largest deviation of any cached factor from unit modulus.
    pub fn max_modulus_error(&self) -> R {
        self.slices
            .iter()
            .flat_map(|s| s.as_slice().iter())
            .fold(R::zero(), |acc, p| acc.max((p.norm() - R::one()).abs()))
    }
}

/// `√d` with a domain check on the intensities.
pub fn sqrt_intensity<R: Real>(d: &RealField<R>) -> Result<RealField<R>> {
    if let Some(bad) = d.as_slice().iter().find(|&&x| x < R::zero() || !x.is_finite()) {
        return Err(Error::Domain(format!(
            "intensities must be finite and non-negative, found {bad}"
        )));
    }
    Ok(d.map(|x| x.sqrt()))
}

fn exit_wave<R: Real>(z_k: &ComplexField<R>, probe: &ComplexField<R>) -> Result<ComplexField<R>> {
    z_k.ensure_same_shape(probe, "object patch vs probe")?;
    Ok(probe.hadamard(z_k))
}

fn apply_phases<R: Real>(
    spectrum: &mut ComplexField<R>,
    amplitude: &RealField<R>,
    phases: &mut [Complex<R>],
    update: bool,
) {
    for ((w, &a), p) in spectrum
        .as_mut_slice()
        .iter_mut()
        .zip(amplitude.as_slice())
        .zip(phases.iter_mut())
    {
        let factor = if w.is_zero() {
            *p
        } else {
            let unit = *w / w.norm();
            if update {
                *p = unit;
            }
            unit
        };
        *w = factor * a;
    }
}

/// Revised exit wave from a precomputed amplitude `√d_k`, refreshing the
/// phase cache at every frequency where the current coefficient is nonzero.
pub fn revised_exit_wave_from_amplitude<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    amplitude: &RealField<R>,
    phases: &mut ComplexField<R>,
    dft: &Dft2<R>,
) -> Result<ComplexField<R>> {
    let exit = exit_wave(z_k, probe)?;
    exit.ensure_same_shape(amplitude, "exit wave vs measurement")?;
    exit.ensure_same_shape(phases, "exit wave vs phase cache")?;
    let mut spectrum = dft.forward(&exit)?;
    apply_phases(&mut spectrum, amplitude, phases.as_mut_slice(), true);
    dft.inverse(&spectrum)
}

/// Same as [`revised_exit_wave_from_amplitude`] but leaves the cache untouched.
pub fn revised_exit_wave_frozen<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    amplitude: &RealField<R>,
    phases: &ComplexField<R>,
    dft: &Dft2<R>,
) -> Result<ComplexField<R>> {
    let exit = exit_wave(z_k, probe)?;
    exit.ensure_same_shape(amplitude, "exit wave vs measurement")?;
    exit.ensure_same_shape(phases, "exit wave vs phase cache")?;
    let mut spectrum = dft.forward(&exit)?;
    let mut scratch = phases.as_slice().to_vec();
    apply_phases(&mut spectrum, amplitude, &mut scratch, false);
    dft.inverse(&spectrum)
}

/// Revised exit wave `F⁻¹(√d_k ⊙ exp(iθ(F(Q ⊙ z_k))))` from raw intensities.
pub fn revised_exit_wave<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    d_k: &RealField<R>,
    phases: &mut ComplexField<R>,
    dft: &Dft2<R>,
) -> Result<ComplexField<R>> {
    let amplitude = sqrt_intensity(d_k)?;
    revised_exit_wave_from_amplitude(z_k, probe, &amplitude, phases, dft)
}

/// `conj(Q) ⊙ (Q ⊙ z_k − R_k)`.
pub fn region_gradient<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    revised: &ComplexField<R>,
) -> Result<ComplexField<R>> {
    let exit = exit_wave(z_k, probe)?;
    exit.ensure_same_shape(revised, "exit wave vs revised exit wave")?;
    Ok(probe.conj().hadamard(&exit.sub(revised)))
}

/// `½‖Q ⊙ z_k − R‖²` for a given revised exit wave.
pub fn exit_misfit<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    revised: &ComplexField<R>,
) -> Result<R> {
    let exit = exit_wave(z_k, probe)?;
    exit.ensure_same_shape(revised, "exit wave vs revised exit wave")?;
    Ok(exit.sub(revised).norm_sq() * R::lit(0.5))
}

/// Region misfit `Φ_k(z_k) = ½‖Q ⊙ z_k − R_k(z_k)‖²`, evaluated with a fresh
/// (phase-zero) cache.
pub fn region_objective<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    d_k: &RealField<R>,
) -> Result<R> {
    let dft = Dft2::new(z_k.width(), z_k.height());
    let mut phases = ComplexField::ones(z_k.width(), z_k.height());
    let revised = revised_exit_wave(z_k, probe, d_k, &mut phases, &dft)?;
    exit_misfit(z_k, probe, &revised)
}

/// Fourier-domain misfit `½‖|F(Q ⊙ z_k)| − √d_k‖² / (w·h)`; phase-independent.
pub fn fourier_objective<R: Real>(
    z_k: &ComplexField<R>,
    probe: &ComplexField<R>,
    amplitude: &RealField<R>,
    dft: &Dft2<R>,
) -> Result<R> {
    let exit = exit_wave(z_k, probe)?;
    exit.ensure_same_shape(amplitude, "exit wave vs measurement")?;
    let spectrum = dft.forward(&exit)?;
    let s: R = spectrum
        .as_slice()
        .iter()
        .zip(amplitude.as_slice())
        .map(|(w, &a)| {
            let d = w.norm() - a;
            d * d
        })
        .sum();
    Ok(s * R::lit(0.5) / R::from_count(exit.len()))
}

/// Global misfit `Φ(z) = Σ_k Φ_k(P_k z)`.
pub fn global_objective<R: Real>(
    z: &ComplexField<R>,
    probe: &ComplexField<R>,
    regions: &[RegionIndex],
    intensities: &[RealField<R>],
) -> Result<R> {
    if regions.len() != intensities.len() {
        return Err(Error::Dimension(format!(
            "{} regions but {} measurements",
            regions.len(),
            intensities.len()
        )));
    }
    let dft = Dft2::new(probe.width(), probe.height());
    let parts: Result<Vec<R>> = regions
        .par_iter()
        .zip(intensities.par_iter())
        .map(|(region, d)| {
            let z_k = z.extract_region(region)?;
            let amplitude = sqrt_intensity(d)?;
            let mut phases = ComplexField::ones(probe.width(), probe.height());
            let revised =
                revised_exit_wave_from_amplitude(&z_k, probe, &amplitude, &mut phases, &dft)?;
            exit_misfit(&z_k, probe, &revised)
        })
        .collect();
    Ok(parts?.into_iter().sum())
}

/// Quadratic surrogate `Φ̃_k(·; anchor) = ½‖Q ⊙ · − R_k(anchor)‖²` with the
/// revised exit wave frozen at the anchor.
#[derive(Clone, Debug)]
pub struct SurrogateModel<R: Real> {
    probe: ComplexField<R>,
    revised: ComplexField<R>,
}

impl<R: Real> SurrogateModel<R> {
    pub fn new(probe: ComplexField<R>, revised: ComplexField<R>) -> Result<Self> {
        probe.ensure_same_shape(&revised, "probe vs revised exit wave")?;
        Ok(Self { probe, revised })
    }

    /// Builds the surrogate anchored at `anchor`, updating `phases` as the
    /// revised exit wave evaluation does.
    pub fn at_anchor(
        anchor: &ComplexField<R>,
        probe: &ComplexField<R>,
        amplitude: &RealField<R>,
        phases: &mut ComplexField<R>,
        dft: &Dft2<R>,
    ) -> Result<Self> {
        let revised = revised_exit_wave_from_amplitude(anchor, probe, amplitude, phases, dft)?;
        Self::new(probe.clone(), revised)
    }

    pub fn probe(&self) -> &ComplexField<R> {
        &self.probe
    }

    pub fn revised(&self) -> &ComplexField<R> {
        &self.revised
    }

    pub fn objective(&self, z_k: &ComplexField<R>) -> Result<R> {
        exit_misfit(z_k, &self.probe, &self.revised)
    }

    pub fn gradient(&self, z_k: &ComplexField<R>) -> Result<ComplexField<R>> {
        region_gradient(z_k, &self.probe, &self.revised)
    }
}

/// Sum over regions of `P_kᵀ |Q|²`: per-pixel accumulated probe energy.
pub fn accumulated_energy<R: Real>(
    width: usize,
    height: usize,
    probe: &ComplexField<R>,
    regions: &[RegionIndex],
) -> Result<RealField<R>> {
    let energy = probe.abs_sq();
    let mut acc = Field2D::zeros(width, height);
    for region in regions {
        acc.embed_add_region(&energy, region)?;
    }
    Ok(acc)
}
