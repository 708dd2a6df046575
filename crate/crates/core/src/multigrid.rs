//! Per-level probes, transfer weights and regularizers for the multilevel
//! proximal solver.
//!
//! For a level with probe `Q` (size `m`) and regularizer `u`, the next
//! coarser level uses
//!
//! ```text
//! Q_H  = restrict(Q)
//! W_z  = |Q|² ⊘ prolong(restrict(|Q|²))
//! W_R  = (prolong(Q_H) ⊙ conj(Q)) ⊘ prolong(restrict(|Q|²))
//! W_uH = |Q_H|² ⊘ restrict(|Q|²)
//! u_H  = W_uH ⊙ restrict(u)
//! ```
//!
//! `W_R` is kept in the cancelled form, so it never divides by `Q`. Bins
//! whose probe energy is zero get zero weights and a cleared mask.

use crate::error::{Error, Result};
use crate::grid::{ComplexField, RealField};
use crate::scalar::Real;

/// Weights used to descend from one level to the next coarser one.
#[derive(Clone, Debug)]
pub struct Transfer<R: Real> {
    /// Object downsampling weight (fine size).
    pub w_z: RealField<R>,
    /// Revised-exit-wave downsampling weight (fine size).
    pub w_r: ComplexField<R>,
    /// Regularizer transfer weight (coarse size).
    pub w_uh: RealField<R>,
    /// Coarse bins carrying nonzero probe energy.
    pub illuminated: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct LevelData<R: Real> {
    pub q: ComplexField<R>,
    pub u: RealField<R>,
    /// `None` on the coarsest level.
    pub transfer: Option<Transfer<R>>,
}

impl<R: Real> LevelData<R> {
    pub fn size(&self) -> usize {
        self.q.width()
    }
}

/// Level hierarchy; index 0 is the finest level.
#[derive(Clone, Debug)]
pub struct LevelStack<R: Real> {
    pub levels: Vec<LevelData<R>>,
}

impl<R: Real> LevelStack<R> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &LevelData<R> {
        &self.levels[l]
    }
}

/// Largest admissible level count for probe size `m` (`log₂ m + 1`).
pub fn max_levels(m: usize) -> usize {
    m.trailing_zeros() as usize + 1
}

/// Builds the transfer weights for one coarsening step.
pub fn coarsen<R: Real>(q: &ComplexField<R>, u: &RealField<R>) -> Result<(LevelData<R>, Transfer<R>)> {
    q.ensure_same_shape(u, "probe vs regularizer")?;
    let energy = q.abs_sq();
    let bin_energy = energy.restrict()?;
    let spread = bin_energy.prolong();
    let q_h = q.restrict()?;
    let w_z = energy.div_or_zero(&spread);
    let w_r = q_h
        .prolong()
        .hadamard(&q.conj())
        .zip_map(&spread, |a, b| if b == R::zero() { a * R::zero() } else { a / b });
    let w_uh = q_h.abs_sq().div_or_zero(&bin_energy);
    let u_h = w_uh.hadamard(&u.restrict()?);
    let illuminated = bin_energy.as_slice().iter().map(|&e| e > R::zero()).collect();
    Ok((
        LevelData {
            q: q_h,
            u: u_h,
            transfer: None,
        },
        Transfer {
            w_z,
            w_r,
            w_uh,
            illuminated,
        },
    ))
}

/// Precomputes `levels` levels starting from the fine probe and regularizer.
pub fn build_level_stack<R: Real>(
    q: &ComplexField<R>,
    u: &RealField<R>,
    levels: usize,
) -> Result<LevelStack<R>> {
    let m = q.width();
    if q.height() != m || !m.is_power_of_two() {
        return Err(Error::Config(format!(
            "probe must be square with power-of-two size, got {}x{}",
            q.width(),
            q.height()
        )));
    }
    if levels == 0 || levels > max_levels(m) {
        return Err(Error::Config(format!(
            "levels must be in 1..={} for m = {m}, got {levels}",
            max_levels(m)
        )));
    }
    q.ensure_same_shape(u, "probe vs regularizer")?;
    if u.as_slice().iter().any(|&x| x < R::zero() || !x.is_finite()) {
        return Err(Error::Config("regularizer must be finite and non-negative".into()));
    }
    let mut stack = Vec::with_capacity(levels);
    let mut current = LevelData {
        q: q.clone(),
        u: u.clone(),
        transfer: None,
    };
    for _ in 1..levels {
        let (coarse, transfer) = coarsen(&current.q, &current.u)?;
        current.transfer = Some(transfer);
        stack.push(current);
        current = coarse;
    }
    stack.push(current);
    Ok(LevelStack { levels: stack })
}

/// `restrict(W_z ⊙ z_k)`: probe-energy-weighted bin average of the object.
pub fn downsample_object<R: Real>(z_k: &ComplexField<R>, w_z: &RealField<R>) -> Result<ComplexField<R>> {
    z_k.ensure_same_shape(w_z, "object vs W_z")?;
    z_k.scale_by(w_z).restrict()
}

/// `restrict(W_R ⊙ R_k)`.
pub fn downsample_rew<R: Real>(r_k: &ComplexField<R>, w_r: &ComplexField<R>) -> Result<ComplexField<R>> {
    r_k.ensure_same_shape(w_r, "revised exit wave vs W_R")?;
    r_k.hadamard(w_r).restrict()
}
