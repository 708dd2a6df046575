//! Limited-memory BFGS on the real embedding `ℂⁿˣⁿ ≅ ℝ²ⁿ²`, where the inner
//! product is `Re Σ conj(a)·b`.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::Result;
use crate::fourier::Dft2;
use crate::grid::ComplexField;
use crate::scalar::Real;
use crate::simulate::Dataset;
use crate::surrogate::{accumulated_energy, fourier_objective, PhaseCache};

use super::{check_initial, drive, objective_and_gradient, EpochOutcome, RunLog, SolverConfig};

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

struct Pair<R: Real> {
    s: ComplexField<R>,
    y: ComplexField<R>,
    rho: R,
}

struct State<R: Real> {
    z: ComplexField<R>,
    f: R,
    g: ComplexField<R>,
    phases: PhaseCache<R>,
    history: VecDeque<Pair<R>>,
    /// Initial inverse-Hessian scale before any curvature pair exists.
    gamma0: R,
}

/// `Φ` in the phase-free Fourier form, used for line-search trials.
fn objective<R: Real>(z: &ComplexField<R>, data: &Dataset<R>, dft: &Dft2<R>) -> Result<R> {
    let parts: Vec<R> = data
        .regions()
        .par_iter()
        .zip(data.amplitudes().par_iter())
        .map(|(region, amp)| fourier_objective(&z.extract_region(region)?, &data.probe, amp, dft))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(R::zero(), |a, b| a + b))
}

/// Two-loop recursion: `−H g`.
fn direction<R: Real>(g: &ComplexField<R>, history: &VecDeque<Pair<R>>, gamma0: R) -> ComplexField<R> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * p.s.real_dot(&q);
        q = q.sub(&p.y.scale(a));
        alphas.push(a);
    }
    let gamma = history
        .back()
        .map_or(gamma0, |p| p.s.real_dot(&p.y) / p.y.norm_sq());
    let mut r = q.scale(gamma);
    for (p, a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * p.y.real_dot(&r);
        r = r.add(&p.s.scale(a - b));
    }
    r.scale(-R::one())
}

fn iterate<R: Real>(
    st: &mut State<R>,
    data: &Dataset<R>,
    dft: &Dft2<R>,
    history_len: usize,
) -> Result<EpochOutcome> {
    if st.g.norm_sq() == R::zero() {
        return Ok(EpochOutcome::Stationary);
    }
    let mut d = direction(&st.g, &st.history, st.gamma0);
    let mut slope = st.g.real_dot(&d);
    if !(slope < R::zero()) {
        st.history.clear();
        d = st.g.scale(-st.gamma0);
        slope = st.g.real_dot(&d);
    }
    let c1 = R::lit(ARMIJO);
    let mut t = R::one();
    let mut accepted = None;
    for _ in 0..=MAX_HALVINGS {
        let trial = st.z.add(&d.scale(t));
        let f_trial = objective(&trial, data, dft)?;
        if f_trial <= st.f + c1 * t * slope {
            accepted = Some((trial, f_trial));
            break;
        }
        t *= R::lit(0.5);
    }
    let Some((z_new, f_new)) = accepted else {
        return Ok(EpochOutcome::LineSearchFailed);
    };
    let (_, g_new) = objective_and_gradient(&z_new, data, &mut st.phases, dft)?;
    let s = z_new.sub(&st.z);
    let y = g_new.sub(&st.g);
    let sy = s.real_dot(&y);
    if sy > R::zero() {
        st.history.push_back(Pair { s, y, rho: R::one() / sy });
        while st.history.len() > history_len {
            st.history.pop_front();
        }
    }
    st.z = z_new;
    st.f = f_new;
    st.g = g_new;
    Ok(EpochOutcome::Continue)
}

/// Runs L-BFGS from `z0`; one iteration per logged epoch. A line search that
/// fails after the maximum number of halvings ends the run with the last
/// accepted iterate.
pub fn lbfgs_run<R: Real>(
    z0: &ComplexField<R>,
    data: &Dataset<R>,
    config: &SolverConfig,
) -> Result<(ComplexField<R>, RunLog)> {
    config.validate(data.probe_size())?;
    check_initial(z0, data)?;
    let n = data.object_size();
    let dft = Dft2::square(data.probe_size());
    let mut phases = PhaseCache::new(data.regions().len(), data.probe_size());
    let (_, g) = objective_and_gradient(z0, data, &mut phases, &dft)?;
    let peak = accumulated_energy(n, n, &data.probe, data.regions())?.max_value();
    let mut st = State {
        z: z0.clone(),
        f: objective(z0, data, &dft)?,
        g,
        phases,
        history: VecDeque::with_capacity(config.lbfgs_history + 1),
        gamma0: if peak > R::zero() { R::one() / peak } else { R::one() },
    };
    let log = drive(config, data, &mut st, |s| (&s.z, &s.phases), |s| {
        iterate(s, data, &dft, config.lbfgs_history)
    })?;
    Ok((st.z, log))
}
