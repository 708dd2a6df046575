//! Forward simulation: scan plans, probes, synthetic objects, diffraction
//! intensities and photon-counting noise.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::{fftshift, ifftshift, Dft2};
use crate::grid::{ComplexField, Field2D, RealField, RegionIndex};
use crate::scalar::Real;
use crate::surrogate::sqrt_intensity;

/// Raster of scanning regions over an `n × n` object.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPlan {
    pub n: usize,
    pub m: usize,
    pub overlap_ratio: f64,
    pub step: usize,
    pub regions: Vec<RegionIndex>,
}

impl ScanPlan {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Uniform raster with step `round(m·(1 − overlap))`; the last row/column of
/// offsets is clamped to `n − m` so that every pixel is covered.
pub fn scan_positions(n: usize, m: usize, overlap_ratio: f64) -> Result<ScanPlan> {
    if m == 0 || m > n {
        return Err(Error::Dimension(format!(
            "region size {m} must be in 1..={n}"
        )));
    }
    if !(0.0..1.0).contains(&overlap_ratio) {
        return Err(Error::Config(format!(
            "overlap ratio must lie in [0, 1), got {overlap_ratio}"
        )));
    }
    let step = ((m as f64 * (1.0 - overlap_ratio)).round() as usize).max(1);
    let last = n - m;
    let mut offsets: Vec<usize> = (0..=last).step_by(step).collect();
    if *offsets.last().expect("offset 0 always present") != last {
        offsets.push(last);
    }
    let mut regions = Vec::with_capacity(offsets.len() * offsets.len());
    for &row in &offsets {
        for &col in &offsets {
            regions.push(RegionIndex::new(regions.len(), row, col, m));
        }
    }
    Ok(ScanPlan {
        n,
        m,
        overlap_ratio,
        step,
        regions,
    })
}

/// Rim phase giving a defocused spot of diameter about `m/4`, leaving most
/// of the window dimly lit.
pub fn default_phase_coeff(m: usize, aperture_fraction: f64) -> f64 {
    std::f64::consts::PI * aperture_fraction * m as f64 / 16.0
}

/// Fresnel-zone-plate-like probe: a centered disk of radius
/// `aperture_fraction · m/2` carrying the quadratic phase
/// `exp(i·phase_coeff·ρ²)` (`ρ` = radius / aperture radius), propagated by a
/// single centered DFT and normalized to `Σ|Q|² = m²`.
pub fn make_zone_plate_probe<R: Real>(
    m: usize,
    aperture_fraction: f64,
    phase_coeff: f64,
) -> Result<ComplexField<R>> {
    if m == 0 || !m.is_power_of_two() {
        return Err(Error::Config(format!("probe size {m} must be a power of two")));
    }
    if !(aperture_fraction > 0.0 && aperture_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "aperture fraction must lie in (0, 1], got {aperture_fraction}"
        )));
    }
    if !phase_coeff.is_finite() {
        return Err(Error::Config("phase coefficient must be finite".into()));
    }
    let radius = aperture_fraction * m as f64 / 2.0;
    let center = (m / 2) as f64;
    let pupil: ComplexField<R> = Field2D::from_fn(m, m, |r, c| {
        let (y, x) = (r as f64 - center, c as f64 - center);
        let rho2 = (x * x + y * y) / (radius * radius);
        if rho2 <= 1.0 {
            let p = Complex::from_polar(1.0, phase_coeff * rho2);
            Complex::new(R::lit(p.re), R::lit(p.im))
        } else {
            Complex::new(R::zero(), R::zero())
        }
    });
    let probe = fftshift(&Dft2::square(m).forward(&ifftshift(&pupil))?);
    let energy = probe.norm_sq();
    let scale = (R::from_count(m * m) / energy).sqrt();
    Ok(probe.scale(scale))
}

/// Kind of procedurally generated test object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    /// Smoothed multi-scale random texture.
    Texture,
    /// Rectangular wiring pattern on a substrate, zero near the boundary.
    Circuit,
}

impl std::str::FromStr for ObjectKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "texture" => Ok(Self::Texture),
            "circuit" => Ok(Self::Circuit),
            other => Err(Error::Config(format!("unknown object kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Texture => "texture",
            Self::Circuit => "circuit",
        })
    }
}

/// Separable box blur with clamped edges.
fn box_blur(src: &[f64], n: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return src.to_vec();
    }
    let pass = |input: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for line in 0..n {
            let at = |i: usize| if horizontal { line * n + i } else { i * n + line };
            for i in 0..n {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius).min(n - 1);
                let s: f64 = (lo..=hi).map(|j| input[at(j)]).sum();
                out[at(i)] = s / (hi - lo + 1) as f64;
            }
        }
        out
    };
    let mut v = src.to_vec();
    for _ in 0..2 {
        v = pass(&v, true);
        v = pass(&v, false);
    }
    v
}

fn normalize_unit(v: &mut [f64]) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = if span > 0.0 { ((*x - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
    }
}

fn smooth_texture(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut acc = vec![0.0; n * n];
    for (radius, weight) in [(n / 16, 1.0), (n / 48, 0.5), (n / 128, 0.25)] {
        let noise: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut layer = box_blur(&noise, n, radius.max(1));
        normalize_unit(&mut layer);
        for (a, l) in acc.iter_mut().zip(&layer) {
            *a += weight * l;
        }
    }
    normalize_unit(&mut acc);
    acc
}

/// Procedural object with magnitude in `[0, 1]` and phase in `[0, π/2]`.
pub fn make_synthetic_object<R: Real>(n: usize, kind: ObjectKind, seed: u64) -> ComplexField<R> {
    assert!(n >= 1, "object size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mag, phase) = match kind {
        ObjectKind::Texture => {
            let mag = smooth_texture(n, &mut rng);
            let phase: Vec<f64> = smooth_texture(n, &mut rng)
                .into_iter()
                .map(|p| p * FRAC_PI_2)
                .collect();
            (mag, phase)
        }
        ObjectKind::Circuit => circuit_pattern(n, &mut rng),
    };
    Field2D::from_fn(n, n, |r, c| {
        let i = r * n + c;
        Complex::from_polar(R::lit(mag[i]), R::lit(phase[i]))
    })
}

fn circuit_pattern(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut mag = vec![0.0; n * n];
    let mut phase = vec![0.0; n * n];
    let margin = (n as f64 * 0.12).ceil() as usize;
    if 2 * margin >= n {
        return (mag, phase);
    }
    let inner = n - 2 * margin;
    let mut fill = |r0: usize, c0: usize, h: usize, w: usize, a: f64, p: f64| {
        for r in r0..(r0 + h).min(n - margin) {
            for c in c0..(c0 + w).min(n - margin) {
                mag[r * n + c] = a;
                phase[r * n + c] = p;
            }
        }
    };
    fill(margin, margin, inner, inner, 0.25, 0.1);
    let wires = 6 + n / 16;
    let thick = (n / 64).max(1);
    for _ in 0..wires {
        let a = 0.7 + 0.3 * rng.gen::<f64>();
        let p = FRAC_PI_2 * (0.5 + 0.5 * rng.gen::<f64>());
        let len = inner / 4 + rng.gen_range(0..=inner / 2);
        let r0 = margin + rng.gen_range(0..inner);
        let c0 = margin + rng.gen_range(0..inner);
        if rng.gen::<bool>() {
            fill(r0, c0, thick, len, a, p);
        } else {
            fill(r0, c0, len, thick, a, p);
        }
    }
    let pads = 4 + n / 32;
    for _ in 0..pads {
        let side = (inner / 12).max(1);
        let r0 = margin + rng.gen_range(0..inner);
        let c0 = margin + rng.gen_range(0..inner);
        fill(r0, c0, side, side, 1.0, FRAC_PI_2 * rng.gen::<f64>());
    }
    (mag, phase)
}

/// Noiseless intensities `|F(Q ⊙ P_k z)|²` for every region of the plan.
pub fn simulate_intensities<R: Real>(
    object: &ComplexField<R>,
    probe: &ComplexField<R>,
    plan: &ScanPlan,
) -> Result<Vec<RealField<R>>> {
    if probe.shape() != (plan.m, plan.m) {
        return Err(Error::Dimension(format!(
            "probe is {}x{} but plan expects {}x{}",
            probe.width(),
            probe.height(),
            plan.m,
            plan.m
        )));
    }
    if object.shape() != (plan.n, plan.n) {
        return Err(Error::Dimension(format!(
            "object is {}x{} but plan expects {}x{}",
            object.width(),
            object.height(),
            plan.n,
            plan.n
        )));
    }
    let dft = Dft2::square(plan.m);
    plan.regions
        .par_iter()
        .map(|region| {
            let exit = probe.hadamard(&object.extract_region(region)?);
            Ok(dft.forward(&exit)?.abs_sq())
        })
        .collect()
}

/// Draws one Poisson variate; a non-positive mean gives 0.
pub fn sample_poisson(mean: f64, rng: &mut impl Rng) -> f64 {
    match Poisson::new(mean) {
        Ok(dist) => rng.sample(dist),
        Err(_) => 0.0,
    }
}

/// Rng for the `stream`-th independent substream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `η · Poisson(d̃ / η)` entry-wise; `η = 0` returns the input.
pub fn add_poisson_noise<R: Real>(
    clean: &RealField<R>,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<RealField<R>> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("noise level must be >= 0, got {eta}")));
    }
    if let Some(bad) = clean.as_slice().iter().find(|&&x| x < R::zero() || !x.is_finite()) {
        return Err(Error::Domain(format!("negative or non-finite intensity {bad}")));
    }
    if eta == 0.0 {
        return Ok(clean.clone());
    }
    Ok(clean.map(|x| R::lit(eta * sample_poisson(x.as_f64() / eta, rng))))
}

/// Measured data for one ptychographic scan.
#[derive(Clone, Debug)]
pub struct Dataset<R: Real> {
    pub probe: ComplexField<R>,
    pub plan: ScanPlan,
    pub measurements: Vec<RealField<R>>,
    amplitudes: Vec<RealField<R>>,
    pub eta: f64,
    pub ground_truth: Option<ComplexField<R>>,
    pub seed: u64,
}

impl<R: Real> Dataset<R> {
    pub fn new(
        probe: ComplexField<R>,
        plan: ScanPlan,
        measurements: Vec<RealField<R>>,
        eta: f64,
        ground_truth: Option<ComplexField<R>>,
        seed: u64,
    ) -> Result<Self> {
        if measurements.len() != plan.len() {
            return Err(Error::Dimension(format!(
                "{} measurements for {} regions",
                measurements.len(),
                plan.len()
            )));
        }
        if probe.shape() != (plan.m, plan.m) {
            return Err(Error::Dimension("probe does not match plan".into()));
        }
        for d in &measurements {
            if d.shape() != (plan.m, plan.m) {
                return Err(Error::Dimension("measurement does not match plan".into()));
            }
        }
        if let Some(gt) = &ground_truth {
            if gt.shape() != (plan.n, plan.n) {
                return Err(Error::Dimension("ground truth does not match plan".into()));
            }
        }
        let amplitudes = measurements
            .iter()
            .map(sqrt_intensity)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            probe,
            plan,
            measurements,
            amplitudes,
            eta,
            ground_truth,
            seed,
        })
    }

    /// Simulates measurements of `object`; region `k` draws its noise from
    /// substream `k` of `seed`, so the result does not depend on scheduling.
    pub fn simulate(
        object: ComplexField<R>,
        probe: ComplexField<R>,
        plan: ScanPlan,
        eta: f64,
        seed: u64,
    ) -> Result<Self> {
        let clean = simulate_intensities(&object, &probe, &plan)?;
        let measurements = clean
            .par_iter()
            .enumerate()
            .map(|(k, d)| add_poisson_noise(d, eta, &mut stream_rng(seed, k as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(probe, plan, measurements, eta, Some(object), seed)
    }

    /// `√d_k` for every region, computed once.
    pub fn amplitudes(&self) -> &[RealField<R>] {
        &self.amplitudes
    }

    pub fn regions(&self) -> &[RegionIndex] {
        &self.plan.regions
    }

    pub fn object_size(&self) -> usize {
        self.plan.n
    }

    pub fn probe_size(&self) -> usize {
        self.plan.m
    }
}
