use num_complex::Complex;

use crate::error::Result;
use crate::fourier::Dft2;
use crate::grid::{ComplexField, Field2D, RealField};
use crate::scalar::Real;
use crate::simulate::Dataset;
use crate::surrogate::{accumulated_energy, PhaseCache};

use super::{check_initial, drive, region_terms, EpochOutcome, RunLog, SolverConfig};

/// Result of one exact surrogate minimization anchored at `z`.
#[derive(Clone, Debug)]
pub struct ExactStep<R: Real> {
    pub next: ComplexField<R>,
    /// `Φ(z)` at the anchor.
    pub objective: R,
    /// `∇Φ(z)` at the anchor.
    pub gradient: ComplexField<R>,
}

/// Global surrogate minimizer with its phase caches and the accumulated
/// probe energy `Σ_k P_kᵀ|Q|²`.
#[derive(Clone, Debug)]
pub struct ExactSurrogate<R: Real> {
    energy: RealField<R>,
    phases: PhaseCache<R>,
    dft: Dft2<R>,
}

impl<R: Real> ExactSurrogate<R> {
    pub fn new(data: &Dataset<R>) -> Result<Self> {
        let n = data.object_size();
        Ok(Self {
            energy: accumulated_energy(n, n, &data.probe, data.regions())?,
            phases: PhaseCache::new(data.regions().len(), data.probe_size()),
            dft: Dft2::square(data.probe_size()),
        })
    }

    pub fn energy(&self) -> &RealField<R> {
        &self.energy
    }

    pub fn phases(&self) -> &PhaseCache<R> {
        &self.phases
    }

    /// Solves `(Σ_k P_kᵀ|Q|²) ⊙ z⁺ = Σ_k P_kᵀ(conj(Q) ⊙ R_k(P_k z))` per pixel;
    /// unilluminated pixels keep their value.
    pub fn step(&mut self, z: &ComplexField<R>, data: &Dataset<R>) -> Result<ExactStep<R>> {
        let terms = region_terms(z, data, &mut self.phases, &self.dft)?;
        let n = data.object_size();
        let probe_conj = data.probe.conj();
        let mut rhs: ComplexField<R> = Field2D::zeros(n, n);
        let mut gradient: ComplexField<R> = Field2D::zeros(n, n);
        let mut objective = R::zero();
        for (region, (phi, g, revised)) in data.regions().iter().zip(terms) {
            objective += phi;
            gradient.embed_add_region(&g, region)?;
            rhs.embed_add_region(&probe_conj.hadamard(&revised), region)?;
        }
        let mut next = z.clone();
        for ((out, &b), &e) in next
            .as_mut_slice()
            .iter_mut()
            .zip(rhs.as_slice())
            .zip(self.energy.as_slice())
        {
            if e > R::zero() {
                *out = b / Complex::from(e);
            }
        }
        Ok(ExactStep {
            next,
            objective,
            gradient,
        })
    }
}

/// One exact surrogate step from `z` with fresh phase caches.
pub fn exact_surrogate_step<R: Real>(z: &ComplexField<R>, data: &Dataset<R>) -> Result<ComplexField<R>> {
    Ok(ExactSurrogate::new(data)?.step(z, data)?.next)
}

pub fn exact_surrogate_run<R: Real>(
    z0: &ComplexField<R>,
    data: &Dataset<R>,
    config: &SolverConfig,
) -> Result<(ComplexField<R>, RunLog)> {
    config.validate(data.probe_size())?;
    check_initial(z0, data)?;
    let mut state = (z0.clone(), ExactSurrogate::new(data)?);
    let log = drive(config, data, &mut state, |s| (&s.0, &s.1.phases), |s| {
        let step = s.1.step(&s.0, data)?;
        s.0 = step.next;
        Ok(EpochOutcome::Continue)
    })?;
    Ok((state.0, log))
}
