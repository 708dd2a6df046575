//! Randomized property suites for the surrogate, the transfer weights and
//! the multilevel update. Each suite is deterministic given its seed and
//! returns a [`PropertyReport`] with the worst observed violation.

use std::fmt;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::fourier::Dft2;
use crate::grid::{ComplexField, Field2D, RealField};
use crate::multigrid::{build_level_stack, downsample_object, downsample_rew, max_levels};
use crate::simulate::{make_synthetic_object, make_zone_plate_probe, scan_positions, Dataset, ObjectKind};
use crate::solvers::{initial_object, magps_coarse_direction, rpie_regularizer, ExactSurrogate};
use crate::surrogate::{fourier_objective, region_gradient, revised_exit_wave, sqrt_intensity, SurrogateModel};

type C = Complex<f64>;

/// Outcome of one property suite. `worst` is the largest normalized
/// violation seen; an instance fails when its violation exceeds `tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyReport {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.instances > 0
    }

    /// Records one instance with violation `v` (NaN counts as a failure).
    fn record(&mut self, v: f64) {
        self.instances += 1;
        if v.is_nan() || v > self.tolerance {
            self.failures += 1;
        }
        if v.is_nan() || v > self.worst {
            self.worst = v;
        }
    }

    /// Merges another check into an instance already counted here.
    fn check(&mut self, v: f64) -> bool {
        if v.is_nan() || v > self.worst {
            self.worst = v;
        }
        !(v.is_nan() || v > self.tolerance)
    }

    fn record_all(&mut self, ok: bool) {
        self.instances += 1;
        if !ok {
            self.failures += 1;
        }
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({} instances, {} failures, worst {:.3e}, tolerance {:.1e})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.instances,
            self.failures,
            self.worst,
            self.tolerance
        )
    }
}

pub fn gaussian(rng: &mut impl Rng) -> C {
    Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_field(rng: &mut impl Rng, width: usize, height: usize) -> ComplexField<f64> {
    Field2D::from_fn(width, height, |_, _| gaussian(rng))
}

/// Gaussian probe with isolated zero pixels and, half of the time, whole
/// zero 2×2 bins.
pub fn random_probe_with_zeros(rng: &mut impl Rng, m: usize) -> ComplexField<f64> {
    let mut q = random_field(rng, m, m);
    for v in q.as_mut_slice() {
        if rng.gen_bool(0.15) {
            *v = Complex::new(0.0, 0.0);
        }
    }
    if m >= 2 && rng.gen_bool(0.5) {
        let bins = rng.gen_range(1..=(m / 2) * (m / 2));
        for _ in 0..bins.min(4) {
            let (br, bc) = (rng.gen_range(0..m / 2), rng.gen_range(0..m / 2));
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                q.set(2 * br + dr, 2 * bc + dc, Complex::new(0.0, 0.0));
            }
        }
    }
    q
}

/// Intensities of a random exit wave, with some entries forced to zero.
pub fn random_intensities(rng: &mut impl Rng, probe: &ComplexField<f64>) -> RealField<f64> {
    let m = probe.width();
    let w = random_field(rng, m, m);
    let mut d = Dft2::square(m).forward(&probe.hadamard(&w)).expect("square field").abs_sq();
    for v in d.as_mut_slice() {
        if rng.gen_bool(0.1) {
            *v = 0.0;
        }
    }
    d
}

fn rel(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

const SIZES: [usize; 3] = [4, 8, 16];

/// Majorization of the region misfit by its surrogate: domination away from
/// the anchor, equality at the anchor, and equal gradients at the anchor.
pub fn majorization_suite(instances: usize, seed: u64) -> Result<Vec<PropertyReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dominate = PropertyReport::new("surrogate dominates misfit", 1e-9);
    let mut agree = PropertyReport::new("surrogate equals misfit at anchor", 1e-12);
    let mut grad = PropertyReport::new("surrogate gradient equals misfit gradient at anchor", 1e-12);
    for i in 0..instances {
        let m = SIZES[i % SIZES.len()];
        let dft = Dft2::square(m);
        let q = random_probe_with_zeros(&mut rng, m);
        let d = random_intensities(&mut rng, &q);
        let amp = sqrt_intensity(&d)?;
        let anchor = random_field(&mut rng, m, m);
        let z = if rng.gen_bool(0.5) {
            random_field(&mut rng, m, m)
        } else {
            anchor.add(&random_field(&mut rng, m, m).scale(rng.gen_range(1e-3..1.0)))
        };
        let mut phases = ComplexField::ones(m, m);
        let model = SurrogateModel::at_anchor(&anchor, &q, &amp, &mut phases, &dft)?;

        let phi = fourier_objective(&z, &q, &amp, &dft)?;
        let phi_tilde = model.objective(&z)?;
        dominate.record(rel((phi - phi_tilde).max(0.0), 1.0 + phi_tilde));

        let phi_a = fourier_objective(&anchor, &q, &amp, &dft)?;
        let phi_tilde_a = model.objective(&anchor)?;
        agree.record(rel((phi_a - phi_tilde_a).abs(), 1.0 + phi_a));

        // Misfit gradient through the Fourier domain:
        // conj(Q) ⊙ F⁻¹(W − √d ⊙ W/|W|), W = F(Q ⊙ z).
        let spectrum = dft.forward(&q.hadamard(&anchor))?;
        let residual_spec = spectrum.zip_map(&amp, |w, a| {
            let n = w.norm();
            if n > 0.0 {
                w - w * (a / n)
            } else {
                w - Complex::new(a, 0.0)
            }
        });
        let g_fourier = q.conj().hadamard(&dft.inverse(&residual_spec)?);
        let g_model = model.gradient(&anchor)?;
        grad.record(rel(g_fourier.sub(&g_model).norm(), 1.0 + g_fourier.norm()));
    }
    Ok(vec![dominate, agree, grad])
}

/// Complex gradient against central differences of the Fourier-form misfit
/// over every real and imaginary coordinate.
pub fn gradient_fd_suite(instances: usize, seed: u64) -> Result<PropertyReport> {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("gradient matches central differences", 1e-5);
    for i in 0..instances {
        let m = [4, 8][i % 2];
        let dft = Dft2::square(m);
        let q = random_field(&mut rng, m, m);
        let amp = sqrt_intensity(&random_intensities(&mut rng, &q))?;
        let z = random_field(&mut rng, m, m);
        let mut phases = ComplexField::ones(m, m);
        let revised = crate::surrogate::revised_exit_wave_from_amplitude(&z, &q, &amp, &mut phases, &dft)?;
        let g = region_gradient(&z, &q, &revised)?;
        let mut fd: ComplexField<f64> = Field2D::zeros(m, m);
        for j in 0..m * m {
            let mut partial = [0.0; 2];
            for (p, dir) in [Complex::new(H, 0.0), Complex::new(0.0, H)].into_iter().enumerate() {
                let mut zp = z.clone();
                zp.as_mut_slice()[j] += dir;
                let mut zm = z.clone();
                zm.as_mut_slice()[j] -= dir;
                let fp = fourier_objective(&zp, &q, &amp, &dft)?;
                let fm = fourier_objective(&zm, &q, &amp, &dft)?;
                partial[p] = (fp - fm) / (2.0 * H);
            }
            fd.as_mut_slice()[j] = Complex::new(partial[0], partial[1]);
        }
        report.record(rel(fd.sub(&g).norm(), g.norm()));
    }
    Ok(report)
}

/// Elementwise bounds of the transfer weights on every level of random
/// probes with structured zeros, and `restrict(W_z) = 1` on illuminated bins.
pub fn weight_bounds_suite(instances: usize, seed: u64) -> Result<PropertyReport> {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("transfer weight bounds", TOL);
    for i in 0..instances {
        let m = [2, 4, 8, 16][i % 4];
        let q = random_probe_with_zeros(&mut rng, m);
        let alpha = rng.gen_range(1e-3..1.0);
        let u = if q.norm_inf() > 0.0 {
            rpie_regularizer(&q, alpha)?
        } else {
            RealField::zeros(m, m)
        };
        let stack = build_level_stack(&q, &u, max_levels(m))?;
        let mut ok = true;
        for level in &stack.levels {
            let Some(t) = &level.transfer else { continue };
            for &w in t.w_z.as_slice() {
                ok &= report.check((-w).max(w - 4.0).max(0.0));
            }
            for w in t.w_r.as_slice() {
                ok &= report.check((w.norm() - 4.0).max(0.0));
            }
            for &w in t.w_uh.as_slice() {
                ok &= report.check((-w).max(w - 1.0).max(0.0));
            }
            let sums = t.w_z.restrict()?;
            let energy = level.q.abs_sq().restrict()?;
            for ((&s, &lit), &e) in sums.as_slice().iter().zip(&t.illuminated).zip(energy.as_slice()) {
                ok &= lit == (e > 0.0);
                if lit {
                    ok &= report.check((s - 1.0).abs());
                } else {
                    ok &= s == 0.0;
                }
            }
            ok &= level.u.as_slice().iter().all(|&x| x >= 0.0);
        }
        report.record_all(ok);
    }
    Ok(report)
}

/// Random single-region surrogate instance shared by the coarse-level suites.
struct CoarseInstance {
    q: ComplexField<f64>,
    u: RealField<f64>,
    z: ComplexField<f64>,
    r: ComplexField<f64>,
}

fn coarse_instance(rng: &mut ChaCha8Rng, m: usize) -> Result<CoarseInstance> {
    let dft = Dft2::square(m);
    let q = random_probe_with_zeros(rng, m);
    let d = random_intensities(rng, &q);
    let anchor = random_field(rng, m, m);
    let mut phases = ComplexField::ones(m, m);
    let r = revised_exit_wave(&anchor, &q, &d, &mut phases, &dft)?;
    let z = if rng.gen_bool(0.5) { anchor } else { random_field(rng, m, m) };
    let u = if q.norm_inf() > 0.0 {
        rpie_regularizer(&q, rng.gen_range(1e-3..1.0))?
    } else {
        RealField::zeros(m, m)
    };
    Ok(CoarseInstance { q, u, z, r })
}

/// Coarse surrogate consistency:
/// `Φ̃_H(restrict(W_z ⊙ z)) ≤ ¼‖W_R‖∞² Φ̃(z)` and
/// `‖∇Φ̃_H‖ ≤ ½‖W_uH‖∞ ‖∇Φ̃‖`.
pub fn consistency_suite(instances: usize, seed: u64) -> Result<Vec<PropertyReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut value = PropertyReport::new("coarse surrogate value bound", 1e-9);
    let mut gradient = PropertyReport::new("coarse surrogate gradient bound", 1e-9);
    for i in 0..instances {
        let m = SIZES[i % SIZES.len()];
        let inst = coarse_instance(&mut rng, m)?;
        let stack = build_level_stack(&inst.q, &inst.u, 2)?;
        let t = stack.level(0).transfer.as_ref().expect("two levels");
        let q_h = &stack.level(1).q;
        let fine = SurrogateModel::new(inst.q.clone(), inst.r.clone())?;
        let z_h = downsample_object(&inst.z, &t.w_z)?;
        let r_h = downsample_rew(&inst.r, &t.w_r)?;
        let coarse = SurrogateModel::new(q_h.clone(), r_h)?;

        let bound = 0.25 * t.w_r.norm_inf().powi(2) * fine.objective(&inst.z)?;
        let phi_h = coarse.objective(&z_h)?;
        value.record(rel((phi_h - bound).max(0.0), bound.max(phi_h)));

        let g_bound = 0.5 * t.w_uh.norm_inf() * fine.gradient(&inst.z)?.norm();
        let g_h = coarse.gradient(&z_h)?.norm();
        gradient.record(rel((g_h - g_bound).max(0.0), g_bound.max(g_h)));
    }
    Ok(vec![value, gradient])
}

/// `−(W_uH ⊘ (u_H + |Q_H|²)) ⊙ restrict(∇Φ̃)`, zero where the denominator vanishes.
pub fn closed_form_direction(
    q: &ComplexField<f64>,
    u: &RealField<f64>,
    gradient: &ComplexField<f64>,
) -> Result<ComplexField<f64>> {
    let stack = build_level_stack(q, u, 2)?;
    let w_uh = &stack.level(0).transfer.as_ref().expect("two levels").w_uh;
    let coarse = stack.level(1);
    let denom = coarse.u.add(&coarse.q.abs_sq());
    let factor = w_uh.div_or_zero(&denom);
    Ok(gradient.restrict()?.scale_by(&factor).scale(-1.0))
}

/// Two-level coarse direction: closed form and descent.
pub fn descent_suite(instances: usize, seed: u64) -> Result<Vec<PropertyReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut closed = PropertyReport::new("coarse direction matches closed form", 1e-10);
    let mut descent = PropertyReport::new("coarse direction is a descent direction", 1e-12);
    for i in 0..instances {
        let m = SIZES[i % SIZES.len()];
        let inst = coarse_instance(&mut rng, m)?;
        let stack = build_level_stack(&inst.q, &inst.u, 2)?;
        let e = magps_coarse_direction(&inst.z, 0, &stack, &inst.r)?;
        let g = region_gradient(&inst.z, &inst.q, &inst.r)?;
        let expected = closed_form_direction(&inst.q, &inst.u, &g)?;
        closed.record(rel(e.sub(&expected).norm(), expected.norm().max(e.norm())));
        let p = e.prolong();
        let inner = g.real_dot(&p);
        descent.record(rel(inner.max(0.0), g.norm() * p.norm()));
    }
    Ok(vec![closed, descent])
}

/// Per-bin check of `restrict(1 ⊘ (u + |Q|²)) = (W_uH ⊘ (u_H + |Q_H|²))` on
/// illuminated bins, with `u = α(‖Q‖∞² − |Q|²)`.
pub fn regularization_transfer_suite(instances: usize, seed: u64) -> Result<PropertyReport> {
    regularization_transfer(instances, seed, false)
}

/// Per-bin check of `1 ⊘ restrict(u + |Q|²) = W_uH ⊘ (u_H + |Q_H|²)` on
/// illuminated bins with `Q_H ≠ 0`, under the same sampling as
/// [`regularization_transfer_suite`].
pub fn harmonic_transfer_suite(instances: usize, seed: u64) -> Result<PropertyReport> {
    regularization_transfer(instances, seed, true)
}

fn regularization_transfer(instances: usize, seed: u64, bin_mean_first: bool) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = if bin_mean_first {
        "coarse step factor equals reciprocal of bin mean"
    } else {
        "coarse step factor equals bin mean of reciprocal"
    };
    let mut report = PropertyReport::new(name, 1e-12);
    for i in 0..instances {
        let m = SIZES[i % SIZES.len()];
        let mut q = random_probe_with_zeros(&mut rng, m);
        if q.norm_inf() == 0.0 {
            q = random_field(&mut rng, m, m);
        }
        let alpha = rng.gen_range(1e-3..1.0);
        let u = rpie_regularizer(&q, alpha)?;
        let stack = build_level_stack(&q, &u, 2)?;
        let t = stack.level(0).transfer.as_ref().expect("two levels");
        let coarse = stack.level(1);
        let fine_denom = u.add(&q.abs_sq());
        let lhs = if bin_mean_first {
            fine_denom.restrict()?.map(|x| 1.0 / x)
        } else {
            fine_denom.map(|x| 1.0 / x).restrict()?
        };
        let mut worst = 0.0f64;
        for b in 0..lhs.len() {
            let q_h2 = coarse.q.as_slice()[b].norm_sqr();
            if !t.illuminated[b] || (bin_mean_first && q_h2 == 0.0) {
                continue;
            }
            let rhs = t.w_uh.as_slice()[b] / (coarse.u.as_slice()[b] + q_h2);
            let l = lhs.as_slice()[b];
            worst = worst.max(rel((l - rhs).abs(), l.abs().max(rhs.abs())));
        }
        report.record(worst);
    }
    Ok(report)
}

/// Restriction and prolongation identities on random fields of even size.
pub fn transfer_identities_suite(instances: usize, seed: u64) -> Result<PropertyReport> {
    const TOL: f64 = 1e-13;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("transfer operator identities", TOL);
    for _ in 0..instances {
        let (wc, hc) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        let b = random_field(&mut rng, wc, hc);
        let a = random_field(&mut rng, 2 * wc, 2 * hc);
        let mut ok = true;

        ok &= report.check(rel(b.prolong().restrict()?.sub(&b).norm(), b.norm()));
        let lhs = b.hadamard(&a.restrict()?);
        let rhs = b.prolong().hadamard(&a).restrict()?;
        ok &= report.check(rel(lhs.sub(&rhs).norm(), lhs.norm()));

        let ra = a.restrict()?;
        ok &= report.check(rel((ra.norm() - 0.5 * a.norm()).max(0.0), a.norm()));
        ok &= report.check(rel((b.prolong().norm() - 2.0 * b.norm()).abs(), b.norm()));
        ok &= report.check(rel((ra.norm_inf() - a.norm_inf()).max(0.0), a.norm_inf()));
        ok &= report.check(rel((b.prolong().norm_inf() - b.norm_inf()).abs(), b.norm_inf()));

        let ones = ComplexField::<f64>::ones(2 * wc, 2 * hc);
        let r1 = ones.restrict()?;
        ok &= report.check(rel((r1.norm() - 0.5 * ones.norm()).abs(), ones.norm()));
        ok &= report.check((r1.norm_inf() - 1.0).abs());
        report.record_all(ok);
    }
    Ok(report)
}

/// Iterates of the exact surrogate minimization with their misfits and
/// gradient norms.
#[derive(Clone, Debug)]
pub struct ExactTrace {
    /// `Φ(z^{(j)})` for `j = 0..=steps`.
    pub objective: Vec<f64>,
    /// `‖∇Φ(z^{(j)})‖²` for `j = 0..=steps`.
    pub grad_norm_sq: Vec<f64>,
    /// `‖Σ_k P_kᵀ|Q|²‖∞`.
    pub energy_peak: f64,
}

/// Noiseless texture instance used by the exact surrogate suites.
pub fn exact_instance(n: usize, m: usize, seed: u64) -> Result<Dataset<f64>> {
    let probe = make_zone_plate_probe(m, 0.5, crate::simulate::default_phase_coeff(m, 0.5))?;
    let object = make_synthetic_object(n, ObjectKind::Texture, seed);
    Dataset::simulate(object, probe, scan_positions(n, m, 0.5)?, 0.0, seed)
}

pub fn exact_trace(data: &Dataset<f64>, steps: usize) -> Result<ExactTrace> {
    let mut solver = ExactSurrogate::new(data)?;
    let mut z = initial_object(data.object_size());
    let mut objective = Vec::with_capacity(steps + 1);
    let mut grad_norm_sq = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let step = solver.step(&z, data)?;
        objective.push(step.objective);
        grad_norm_sq.push(step.gradient.norm_sq());
        z = step.next;
    }
    Ok(ExactTrace {
        objective,
        grad_norm_sq,
        energy_peak: solver.energy().max_value(),
    })
}

/// Non-increasing misfit along exact surrogate iterates.
pub fn monotone_report(trace: &ExactTrace) -> PropertyReport {
    let mut report = PropertyReport::new("exact surrogate steps never increase the misfit", 1e-12);
    for w in trace.objective.windows(2) {
        report.record(((w[1] - w[0]) / (1.0 + w[0])).max(0.0));
    }
    report
}

fn gradient_bound_report(trace: &ExactTrace, name: &str, factor: f64) -> PropertyReport {
    let mut report = PropertyReport::new(name, 0.0);
    let mut best = f64::INFINITY;
    for (t, &g) in trace.grad_norm_sq.iter().enumerate() {
        best = best.min(g);
        let bound = factor * trace.energy_peak * trace.objective[0] / (t as f64 + 1.0);
        report.record((best / bound - 1.0).max(0.0));
    }
    report
}

/// `min_{j≤t} ‖∇Φ(z^{(j)})‖² ≤ ‖Σ P_kᵀ|Q|²‖∞ Φ(z^{(0)}) / (2(t+1))` for every
/// prefix `t`. The violation is the ratio of the left side to the bound
/// minus one.
pub fn rate_report(trace: &ExactTrace) -> PropertyReport {
    gradient_bound_report(trace, "sublinear gradient bound", 0.5)
}

/// The same bound with constant `2`, which follows from the descent lemma
/// `Φ(z⁺) ≤ Φ(z) − ‖∇Φ(z)‖² / (2‖Σ P_kᵀ|Q|²‖∞)` of the exact step.
pub fn corrected_rate_report(trace: &ExactTrace) -> PropertyReport {
    gradient_bound_report(trace, "sublinear gradient bound, constant 2", 2.0)
}

/// Every suite at its standard size, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<PropertyReport>> {
    let mut out = majorization_suite(200, seed)?;
    out.push(gradient_fd_suite(50, seed.wrapping_add(1))?);
    out.push(weight_bounds_suite(1000, seed.wrapping_add(2))?);
    out.extend(consistency_suite(200, seed.wrapping_add(3))?);
    out.extend(descent_suite(200, seed.wrapping_add(4))?);
    out.push(regularization_transfer_suite(200, seed.wrapping_add(5))?);
    out.push(harmonic_transfer_suite(200, seed.wrapping_add(5))?);
    let trace = exact_trace(&exact_instance(32, 8, seed)?, 50)?;
    out.push(monotone_report(&trace));
    out.push(rate_report(&trace));
    out.push(corrected_rate_report(&trace));
    out.push(transfer_identities_suite(500, seed.wrapping_add(6))?);
    Ok(out)
}
