use crate::error::{Error, Result};
use crate::fourier::Dft2;
use crate::grid::ComplexField;
use crate::multigrid::{build_level_stack, downsample_object, downsample_rew, LevelStack};
use crate::scalar::Real;
use crate::simulate::Dataset;

use super::rpie::{proximal_step_guarded, rpie_region_update, rpie_regularizer};
use super::{drive, sweep, EpochOutcome, RunLog, SolverConfig, SweepState};

fn check_level<R: Real>(stack: &LevelStack<R>, level: usize) -> Result<()> {
    if level >= stack.depth() {
        return Err(Error::Config(format!(
            "level {level} out of range for a stack of depth {}",
            stack.depth()
        )));
    }
    Ok(())
}

/// Multilevel proximal update of one region at `level`.
///
/// The coarsest level takes a single proximal step. Finer levels descend
/// with `z_H = restrict(W_z ⊙ z_k)` and `R_H = restrict(W_R ⊙ R_k)`, recurse,
/// apply `z̃ = z_k + prolong(ẑ_H − z_H)` and post-smooth with one proximal
/// step against the same `R_k`. Coarse levels skip pixels whose denominator
/// `u + |Q|²` vanishes.
pub fn magps_update<R: Real>(
    z_k: &ComplexField<R>,
    level: usize,
    stack: &LevelStack<R>,
    r_k: &ComplexField<R>,
) -> Result<ComplexField<R>> {
    check_level(stack, level)?;
    let data = stack.level(level);
    let smooth = |z: &ComplexField<R>| {
        if level == 0 {
            rpie_region_update(z, &data.q, r_k, &data.u)
        } else {
            proximal_step_guarded(z, &data.q, r_k, &data.u)
        }
    };
    let Some(transfer) = &data.transfer else {
        return smooth(z_k);
    };
    let z_h = downsample_object(z_k, &transfer.w_z)?;
    let r_h = downsample_rew(r_k, &transfer.w_r)?;
    let z_h_new = magps_update(&z_h, level + 1, stack, &r_h)?;
    let corrected = z_k.add(&z_h_new.sub(&z_h).prolong());
    smooth(&corrected)
}

/// Coarse direction `e_H = ẑ_H − z_H` generated at `level + 1` while
/// updating `z_k` on `level`.
pub fn magps_coarse_direction<R: Real>(
    z_k: &ComplexField<R>,
    level: usize,
    stack: &LevelStack<R>,
    r_k: &ComplexField<R>,
) -> Result<ComplexField<R>> {
    check_level(stack, level)?;
    let transfer = stack
        .level(level)
        .transfer
        .as_ref()
        .ok_or_else(|| Error::Config(format!("level {level} is the coarsest level")))?;
    let z_h = downsample_object(z_k, &transfer.w_z)?;
    let r_h = downsample_rew(r_k, &transfer.w_r)?;
    Ok(magps_update(&z_h, level + 1, stack, &r_h)?.sub(&z_h))
}

/// One shuffled MAGPIE sweep.
pub fn magpie_epoch<R: Real>(
    state: &mut SweepState<R>,
    data: &Dataset<R>,
    stack: &LevelStack<R>,
    dft: &Dft2<R>,
) -> Result<()> {
    sweep(state, data, dft, |z_k, r_k| magps_update(z_k, 0, stack, r_k))
}

pub fn magpie_run<R: Real>(
    z0: &ComplexField<R>,
    data: &Dataset<R>,
    config: &SolverConfig,
) -> Result<(ComplexField<R>, RunLog)> {
    config.validate(data.probe_size())?;
    let u = rpie_regularizer(&data.probe, config.alpha)?;
    let stack = build_level_stack(&data.probe, &u, config.levels)?;
    let dft = Dft2::square(data.probe_size());
    let mut state = SweepState::new(z0.clone(), data, config.seed)?;
    let log = drive(config, data, &mut state, |s| (&s.z, &s.phases), |s| {
        magpie_epoch(s, data, &stack, &dft)?;
        Ok(EpochOutcome::Continue)
    })?;
    Ok((state.z, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field2D, RealField};
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, m: usize) -> ComplexField<f64> {
        Field2D::from_fn(m, m, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn single_level_is_rpie() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_field(&mut rng, 8);
        let z = random_field(&mut rng, 8);
        let r = random_field(&mut rng, 8);
        let u = rpie_regularizer(&q, 0.05).unwrap();
        let stack = build_level_stack(&q, &u, 1).unwrap();
        assert_eq!(
            magps_update(&z, 0, &stack, &r).unwrap(),
            rpie_region_update(&z, &q, &r, &u).unwrap()
        );
        assert!(magps_coarse_direction(&z, 0, &stack, &r).is_err());
        assert!(magps_update(&z, 1, &stack, &r).is_err());
    }

    #[test]
    fn constant_probe_direction() {
        // Q ≡ c: e_H = −restrict(∇Φ̃_k) ⊘ (restrict(u) + |c|²)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cval = Complex::new(0.7, -0.4);
        let q = ComplexField::filled(8, 8, cval);
        let z = random_field(&mut rng, 8);
        let r = random_field(&mut rng, 8);
        let u: RealField<f64> = Field2D::from_fn(8, 8, |_, _| rng.gen_range(0.0..0.5));
        let stack = build_level_stack(&q, &u, 2).unwrap();
        let e = magps_coarse_direction(&z, 0, &stack, &r).unwrap();
        let grad = q.conj().hadamard(&q.hadamard(&z).sub(&r)).restrict().unwrap();
        let ur = u.restrict().unwrap();
        for i in 0..e.len() {
            let want = -grad.as_slice()[i] / (ur.as_slice()[i] + cval.norm_sqr());
            assert!((e.as_slice()[i] - want).norm() < 1e-13);
        }
    }
}
