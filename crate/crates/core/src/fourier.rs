//! Two-dimensional DFT with the convention used throughout the crate:
//! the forward transform is unnormalized and the inverse carries the full
//! `1/(w·h)` factor, so `‖dft2(f)‖² = w·h·‖f‖²` and `idft2 = conj(dft2(conj ·))/(w·h)`.
//! Library defaults differ (rustfft normalizes neither direction).

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::ComplexField;
use crate::scalar::Real;

/// Cached forward/inverse plans for one field shape. Cheap to clone and
/// shareable across threads.
#[derive(Clone)]
pub struct Dft2<R: Real> {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<R>>,
    row_inv: Arc<dyn Fft<R>>,
    col_fwd: Arc<dyn Fft<R>>,
    col_inv: Arc<dyn Fft<R>>,
}

impl<R: Real> std::fmt::Debug for Dft2<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl<R: Real> Dft2<R> {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft(width, FftDirection::Forward),
            row_inv: planner.plan_fft(width, FftDirection::Inverse),
            col_fwd: planner.plan_fft(height, FftDirection::Forward),
            col_inv: planner.plan_fft(height, FftDirection::Inverse),
        }
    }

    pub fn square(size: usize) -> Self {
        Self::new(size, size)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn check(&self, f: &ComplexField<R>) -> Result<()> {
        if f.shape() != (self.width, self.height) {
            return Err(Error::Dimension(format!(
                "DFT planned for {}x{}, got {}x{}",
                self.width,
                self.height,
                f.width(),
                f.height()
            )));
        }
        Ok(())
    }

    fn transform(&self, data: &mut [Complex<R>], rows: &Arc<dyn Fft<R>>, cols: &Arc<dyn Fft<R>>) {
        let (w, h) = (self.width, self.height);
        rows.process(data);
        let mut column = vec![Complex::new(R::zero(), R::zero()); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = data[r * w + c];
            }
            cols.process(&mut column);
            for r in 0..h {
                data[r * w + c] = column[r];
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, f: &ComplexField<R>) -> Result<ComplexField<R>> {
        self.check(f)?;
        let mut out = f.clone();
        self.transform(out.as_mut_slice(), &self.row_fwd, &self.col_fwd);
        Ok(out)
    }

    /// Inverse transform scaled by `1/(w·h)`.
    pub fn inverse(&self, f: &ComplexField<R>) -> Result<ComplexField<R>> {
        self.check(f)?;
        let mut out = f.clone();
        self.transform(out.as_mut_slice(), &self.row_inv, &self.col_inv);
        let s = R::one() / R::from_count(self.width * self.height);
        for x in out.as_mut_slice() {
            *x *= s;
        }
        Ok(out)
    }
}

/// One-shot forward transform of a square field.
pub fn dft2<R: Real>(f: &ComplexField<R>) -> Result<ComplexField<R>> {
    ensure_square(f)?;
    Dft2::square(f.width()).forward(f)
}

/// One-shot inverse transform of a square field.
pub fn idft2<R: Real>(f: &ComplexField<R>) -> Result<ComplexField<R>> {
    ensure_square(f)?;
    Dft2::square(f.width()).inverse(f)
}

fn ensure_square<R: Real>(f: &ComplexField<R>) -> Result<()> {
    if f.width() != f.height() {
        return Err(Error::Dimension(format!(
            "square field expected, got {}x{}",
            f.width(),
            f.height()
        )));
    }
    Ok(())
}

/// Cyclic shift moving the zero-frequency sample to the grid center.
pub fn fftshift<R: Real>(f: &ComplexField<R>) -> ComplexField<R> {
    let (w, h) = f.shape();
    ComplexField::from_fn(w, h, |r, c| f.get((r + h - h / 2) % h, (c + w - w / 2) % w))
}

/// Inverse of [`fftshift`].
pub fn ifftshift<R: Real>(f: &ComplexField<R>) -> ComplexField<R> {
    let (w, h) = f.shape();
    ComplexField::from_fn(w, h, |r, c| f.get((r + h / 2) % h, (c + w / 2) % w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field2D;
    use std::f64::consts::PI;

    fn naive_dft(f: &ComplexField<f64>) -> ComplexField<f64> {
        let (w, h) = f.shape();
        Field2D::from_fn(w, h, |kr, kc| {
            let mut acc = Complex::new(0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let ang = -2.0 * PI * ((kr * r) as f64 / h as f64 + (kc * c) as f64 / w as f64);
                    acc += f.get(r, c) * Complex::from_polar(1.0, ang);
                }
            }
            acc
        })
    }

    fn sample(w: usize, h: usize) -> ComplexField<f64> {
        Field2D::from_fn(w, h, |r, c| {
            let x = (r * 31 + c * 17) as f64;
            Complex::new((x * 0.37).sin(), (x * 0.11).cos())
        })
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut f: ComplexField<f64> = Field2D::zeros(4, 4);
        f.set(0, 0, Complex::new(1.0, 0.0));
        let s = dft2(&f).unwrap();
        for x in s.as_slice() {
            assert!((x - Complex::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_and_round_trips() {
        let f = sample(8, 4);
        let plan = Dft2::new(8, 4);
        let s = plan.forward(&f).unwrap();
        let n = naive_dft(&f);
        for (a, b) in s.as_slice().iter().zip(n.as_slice()) {
            assert!((a - b).norm() < 1e-10);
        }
        let back = plan.inverse(&s).unwrap();
        for (a, b) in back.as_slice().iter().zip(f.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval_scaling() {
        let f = sample(16, 16);
        let ratio = dft2(&f).unwrap().norm_sq() / f.norm_sq();
        assert!((ratio / 256.0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn shift_round_trip() {
        let f = sample(6, 4);
        assert_eq!(ifftshift(&fftshift(&f)), f);
        let mut d: ComplexField<f64> = Field2D::zeros(4, 4);
        d.set(0, 0, Complex::new(1.0, 0.0));
        assert_eq!(fftshift(&d).get(2, 2), Complex::new(1.0, 0.0));
    }

    #[test]
    fn wrong_shape_rejected() {
        let plan: Dft2<f64> = Dft2::square(4);
        assert!(plan.forward(&Field2D::zeros(4, 2)).is_err());
        assert!(dft2::<f64>(&Field2D::zeros(4, 2)).is_err());
    }
}
