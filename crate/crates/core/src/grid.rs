//! Dense 2D fields, scan-region extraction/embedding and the dyadic grid
//! transfer operators.
//!
//! Samples are stored row-major: entry `(row, col)` lives at
//! `row * width + col`. Every flattened-vector statement in this crate (dense
//! operator oracles, binary file layouts) uses that ordering.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{Float, One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Real, Sample};

/// Row-major 2D grid of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type RealField<R> = Field2D<R>;
pub type ComplexField<R> = Field2D<Complex<R>>;

/// Location of one scanning region (the `P_k` window) inside the object grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RegionIndex {
    pub k: usize,
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl RegionIndex {
    pub fn new(k: usize, row: usize, col: usize, size: usize) -> Self {
        Self { k, row, col, size }
    }

    fn check<T>(&self, f: &Field2D<T>) -> Result<()> {
        if self.size == 0
            || self.row + self.size > f.height
            || self.col + self.size > f.width
        {
            return Err(Error::Index {
                k: self.k,
                row: self.row,
                col: self.col,
                size: self.size,
                width: f.width,
                height: f.height,
            });
        }
        Ok(())
    }
}

impl<T: Sample> Field2D<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "field dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples supplied for a {width}x{height} field",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::from_real(T::Real::one()))
    }

    pub fn square(size: usize, value: T) -> Self {
        Self::filled(size, size, value)
    }

    /// Builds a field from `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape<U>(&self, other: &Field2D<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape<U>(&self, other: &Field2D<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map<U: Sample>(&self, mut f: impl FnMut(T) -> U) -> Field2D<U> {
        Field2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Element-wise combination of two equally shaped fields.
    ///
    /// Panics on shape mismatch; callers validate shapes at the API boundary.
    pub fn zip_map<U: Sample, V: Sample>(&self, other: &Field2D<U>, f: impl Fn(T, U) -> V) -> Field2D<V> {
        assert!(
            self.same_shape(other),
            "shape mismatch {}x{} vs {}x{}",
            self.width,
            self.height,
            other.width,
            other.height
        );
        Field2D {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// Hadamard product `self ⊙ other`.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T::Real) -> Self {
        self.map(|x| x.scale(s))
    }

    pub fn conj(&self) -> Self {
        self.map(Sample::conjugate)
    }

    /// Element-wise `|x|²` as a real field.
    pub fn abs_sq(&self) -> Field2D<T::Real> {
        Field2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|x| x.abs_sq()).collect(),
        }
    }

    /// Element-wise `|x|` as a real field.
    pub fn modulus(&self) -> Field2D<T::Real> {
        Field2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|x| x.modulus()).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    pub fn norm_sq(&self) -> T::Real {
        self.data
            .iter()
            .fold(T::Real::zero(), |acc, x| acc + x.abs_sq())
    }

    pub fn norm(&self) -> T::Real {
        self.norm_sq().sqrt()
    }

    /// Maximum modulus over all entries.
    pub fn norm_inf(&self) -> T::Real {
        self.data
            .iter()
            .fold(T::Real::zero(), |acc, x| acc.max(x.modulus()))
    }

    /// Real inner product `Re Σ conj(a) b` on the ℝ² embedding.
    pub fn real_dot(&self, other: &Self) -> T::Real {
        assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::Real::zero(), |acc, (&a, &b)| acc + a.real_dot(b))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite_sample())
    }

    /// Bin-average restriction: each output sample is the mean of the
    /// corresponding 2x2 input bin.
    pub fn restrict(&self) -> Result<Self> {
        if !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "restriction needs even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / 2, self.height / 2);
        let quarter = T::Real::lit(0.25);
        let src = &self.data;
        let fw = self.width;
        Ok(Self::from_fn(w, h, |r, c| {
            let i = 2 * r * fw + 2 * c;
            (src[i] + src[i + 1] + src[i + fw] + src[i + fw + 1]).scale(quarter)
        }))
    }

    /// Replication prolongation: every sample is copied into its 2x2 bin.
    /// Equal to `4 · restrictionᵀ`.
    pub fn prolong(&self) -> Self {
        let cw = self.width;
        let src = &self.data;
        Self::from_fn(2 * self.width, 2 * self.height, |r, c| src[(r / 2) * cw + c / 2])
    }

    /// Copies the `size × size` window described by `region` (the `P_k` action).
    pub fn extract_region(&self, region: &RegionIndex) -> Result<Self> {
        region.check(self)?;
        let m = region.size;
        let mut data = Vec::with_capacity(m * m);
        for r in 0..m {
            let start = (region.row + r) * self.width + region.col;
            data.extend_from_slice(&self.data[start..start + m]);
        }
        Ok(Self {
            width: m,
            height: m,
            data,
        })
    }

    /// Adds `patch` into the window of `region` (the `P_kᵀ` action).
    pub fn embed_add_region(&mut self, patch: &Self, region: &RegionIndex) -> Result<()> {
        region.check(self)?;
        self.check_patch(patch, region)?;
        let m = region.size;
        for r in 0..m {
            let start = (region.row + r) * self.width + region.col;
            for (dst, &src) in self.data[start..start + m]
                .iter_mut()
                .zip(&patch.data[r * m..(r + 1) * m])
            {
                *dst += src;
            }
        }
        Ok(())
    }

    /// Overwrites the window of `region` with `patch`.
    pub fn set_region(&mut self, patch: &Self, region: &RegionIndex) -> Result<()> {
        region.check(self)?;
        self.check_patch(patch, region)?;
        let m = region.size;
        for r in 0..m {
            let start = (region.row + r) * self.width + region.col;
            self.data[start..start + m].copy_from_slice(&patch.data[r * m..(r + 1) * m]);
        }
        Ok(())
    }

    fn check_patch(&self, patch: &Self, region: &RegionIndex) -> Result<()> {
        if patch.width != region.size || patch.height != region.size {
            return Err(Error::Dimension(format!(
                "patch is {}x{} but region {} has size {}",
                patch.width, patch.height, region.k, region.size
            )));
        }
        Ok(())
    }
}

impl<R: Real> Field2D<R> {
    /// Element-wise division where `0/0` (or any zero denominator) yields zero.
    pub fn div_or_zero(&self, denom: &Self) -> Self {
        self.zip_map(denom, |a, b| if b == R::zero() { R::zero() } else { a / b })
    }

    pub fn max_value(&self) -> R {
        self.data.iter().copied().fold(R::neg_infinity(), R::max)
    }

    pub fn min_value(&self) -> R {
        self.data.iter().copied().fold(R::infinity(), R::min)
    }

    pub fn to_complex(&self) -> ComplexField<R> {
        self.map(|x| Complex::new(x, R::zero()))
    }
}

impl<R: Real> Field2D<Complex<R>> {
    pub fn re(&self) -> RealField<R> {
        self.map(|x| x.re)
    }

    pub fn im(&self) -> RealField<R> {
        self.map(|x| x.im)
    }

    /// Principal argument of each sample.
    pub fn arg(&self) -> RealField<R> {
        self.map(|x| x.arg())
    }

    /// Multiplies each sample by a real weight.
    pub fn scale_by(&self, weights: &RealField<R>) -> Self {
        self.zip_map(weights, |z, w| z * w)
    }

    pub fn from_polar(magnitude: &RealField<R>, phase: &RealField<R>) -> Self {
        magnitude.zip_map(phase, |r, t| Complex::from_polar(r, t))
    }
}

impl<T> Index<(usize, usize)> for Field2D<T> {
    type Output = T;
    #[inline]
    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self.data[row * self.width + col]
    }
}

impl<T> IndexMut<(usize, usize)> for Field2D<T> {
    #[inline]
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        &mut self.data[row * self.width + col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    /// Restriction matrix written out entry by entry for a `w × h` fine grid
    /// under row-major flattening.
    fn dense_restriction(w: usize, h: usize) -> Vec<Vec<f64>> {
        let (cw, ch) = (w / 2, h / 2);
        let mut mat = vec![vec![0.0; w * h]; cw * ch];
        for (i, row) in mat.iter_mut().enumerate() {
            let (r, cc) = (i / cw, i % cw);
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                row[(2 * r + dr) * w + 2 * cc + dc] = 0.25;
            }
        }
        mat
    }

    fn apply(mat: &[Vec<f64>], v: &[C]) -> Vec<C> {
        mat.iter()
            .map(|row| row.iter().zip(v).map(|(&a, &x)| x * a).sum())
            .collect()
    }

    fn transpose(mat: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let cols = mat[0].len();
        (0..cols)
            .map(|j| mat.iter().map(|row| row[j]).collect())
            .collect()
    }

    fn lcg_field(w: usize, h: usize, seed: u64) -> ComplexField<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Field2D::from_fn(w, h, |_, _| c(next(), next()))
    }

    #[test]
    fn restrict_bin_average() {
        let f = Field2D::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.restrict().unwrap().as_slice(), &[2.5]);
    }

    #[test]
    fn restrict_preserves_constants() {
        let f = Field2D::square(4, c(1.5, -0.5));
        let r = f.restrict().unwrap();
        assert_eq!(r.shape(), (2, 2));
        assert!(r.as_slice().iter().all(|&x| x == c(1.5, -0.5)));
    }

    #[test]
    fn restrict_rejects_odd_dimensions() {
        let f: RealField<f64> = Field2D::zeros(3, 4);
        assert!(matches!(f.restrict(), Err(Error::Dimension(_))));
    }

    #[test]
    fn restrict_matches_dense_matrix() {
        let f = lcg_field(4, 4, 3);
        let expected = apply(&dense_restriction(4, 4), f.as_slice());
        let got = f.restrict().unwrap();
        for (a, b) in got.as_slice().iter().zip(&expected) {
            assert!((a - b).norm() < 1e-15);
        }
        // non-square grid
        let f = lcg_field(6, 4, 9);
        let expected = apply(&dense_restriction(6, 4), f.as_slice());
        for (a, b) in f.restrict().unwrap().as_slice().iter().zip(&expected) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn prolong_replicates() {
        let f = Field2D::square(1, c(2.0, 1.0));
        let p = f.prolong();
        assert_eq!(p.shape(), (2, 2));
        assert!(p.as_slice().iter().all(|&x| x == c(2.0, 1.0)));
    }

    #[test]
    fn prolong_matches_scaled_transpose() {
        let f = lcg_field(2, 2, 5);
        let pt = transpose(&dense_restriction(4, 4));
        let expected: Vec<C> = apply(&pt, f.as_slice()).into_iter().map(|x| x * 4.0).collect();
        for (a, b) in f.prolong().as_slice().iter().zip(&expected) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn restrict_prolong_identity_many() {
        for seed in 0..100 {
            let b = lcg_field(4, 6, seed);
            assert_eq!(b.prolong().restrict().unwrap(), b);
        }
    }

    #[test]
    fn extract_whole_and_interior() {
        let f: RealField<f64> = Field2D::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let all = f.extract_region(&RegionIndex::new(0, 0, 0, 4)).unwrap();
        assert_eq!(all, f);
        let inner = f.extract_region(&RegionIndex::new(0, 1, 1, 2)).unwrap();
        assert_eq!(inner.as_slice(), &[5.0, 6.0, 9.0, 10.0]);
        let z: RealField<f64> = Field2D::zeros(4, 4);
        let zr = z.extract_region(&RegionIndex::new(0, 2, 0, 2)).unwrap();
        assert!(zr.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn extract_out_of_bounds() {
        let f: RealField<f64> = Field2D::zeros(4, 4);
        assert!(matches!(
            f.extract_region(&RegionIndex::new(3, 1, 2, 3)),
            Err(Error::Index { k: 3, .. })
        ));
    }

    #[test]
    fn embed_then_extract_recovers_patch() {
        let patch = lcg_field(3, 3, 11);
        let region = RegionIndex::new(0, 2, 1, 3);
        let mut obj: ComplexField<f64> = Field2D::zeros(6, 5);
        obj.embed_add_region(&patch, &region).unwrap();
        assert_eq!(obj.extract_region(&region).unwrap(), patch);
        let outside: f64 = obj.norm_sq() - patch.norm_sq();
        assert!(outside.abs() < 1e-12);
    }

    #[test]
    fn embed_overlap_sums() {
        let mut obj: RealField<f64> = Field2D::zeros(3, 3);
        let ones = Field2D::ones(2, 2);
        obj.embed_add_region(&ones, &RegionIndex::new(0, 0, 0, 2)).unwrap();
        obj.embed_add_region(&ones, &RegionIndex::new(1, 1, 1, 2)).unwrap();
        assert_eq!(obj.get(1, 1), 2.0);
        assert_eq!(obj.get(0, 0), 1.0);
        assert_eq!(obj.get(2, 2), 1.0);
        assert_eq!(obj.get(0, 2), 0.0);
    }

    #[test]
    fn embed_shape_mismatch() {
        let mut obj: RealField<f64> = Field2D::zeros(4, 4);
        let patch = Field2D::ones(3, 3);
        assert!(matches!(
            obj.embed_add_region(&patch, &RegionIndex::new(0, 0, 0, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn accumulated_probe_energy_matches_pixel_count() {
        // n=8, m=4, step 2: offsets {0,2,4} in each direction.
        let weights: RealField<f64> = Field2D::from_fn(4, 4, |r, c| 1.0 + (r * 4 + c) as f64 * 0.1);
        let offsets = [0usize, 2, 4];
        let mut acc: RealField<f64> = Field2D::zeros(8, 8);
        let mut k = 0;
        for &r in &offsets {
            for &c in &offsets {
                acc.embed_add_region(&weights, &RegionIndex::new(k, r, c, 4)).unwrap();
                k += 1;
            }
        }
        for pr in 0..8 {
            for pc in 0..8 {
                let mut expected = 0.0;
                for &r in &offsets {
                    for &c in &offsets {
                        if (r..r + 4).contains(&pr) && (c..c + 4).contains(&pc) {
                            expected += weights.get(pr - r, pc - c);
                        }
                    }
                }
                assert!((acc.get(pr, pc) - expected).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn extract_embed_adjoint(seed in 0u64..10_000, row in 0usize..4, col in 0usize..4) {
            let a = lcg_field(7, 7, seed);
            let b = lcg_field(3, 3, seed ^ 0xabcdef);
            let region = RegionIndex::new(0, row, col, 3);
            let lhs = a.extract_region(&region).unwrap().real_dot(&b);
            let mut e: ComplexField<f64> = Field2D::zeros(7, 7);
            e.embed_add_region(&b, &region).unwrap();
            let rhs = a.real_dot(&e);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn commutation_law(seed in 0u64..10_000) {
            let coarse = lcg_field(3, 2, seed);
            let fine = lcg_field(6, 4, seed.wrapping_add(77));
            let lhs = coarse.hadamard(&fine.restrict().unwrap());
            let rhs = coarse.prolong().hadamard(&fine).restrict().unwrap();
            for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
                prop_assert!((x - y).norm() < 1e-13);
            }
        }
    }
}
