//! Truncated Fourier series on the unit torus `[0,1)²`.
//!
//! A [`Field2`] stores the coefficients `c_{mn}`, `|m|, |n| <= N`, of
//!
//! ```text
//! F(x, y) = Σ c_{mn} exp(2πi (m x + n y))
//! ```
//!
//! as a dense `(2N+1)²` square. Only real fields are represented, so the
//! spectrum is kept Hermitian (`c_{-m,-n} = conj(c_{mn})`) after every
//! operation. Products go through an oversampled grid and are alias free.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn transpose(buf: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

/// Unnormalized 2-D FFT of a row-major `m × m` buffer, in place.
fn fft2(buf: &mut [Complex64], m: usize, inverse: bool) {
    let fft = plan(m, inverse);
    fft.process(buf);
    transpose(buf, m);
    fft.process(buf);
    transpose(buf, m);
}

/// Smallest even `n >= target` whose only prime factors are 2, 3 and 5.
pub fn fast_grid_size(target: usize) -> usize {
    let mut n = target.max(2);
    loop {
        if n % 2 == 0 {
            let mut r = n;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return n;
            }
        }
        n += 1;
    }
}

/// How [`Field2::from_modes`] treats a spectrum that is not Hermitian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Input must already be Hermitian (to 1e-14).
    Exact,
    /// Missing conjugate partners are implied; the result is the real part
    /// of the given series.
    Symmetrize,
}

/// Samples of a real field on the uniform grid `x_i = i/M`, `y_j = j/M`.
///
/// Values are row-major with `x` as the slow index: `values[i * M + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSampling {
    resolution: usize,
    values: Vec<f64>,
}

impl GridSampling {
    pub fn new(resolution: usize, values: Vec<f64>) -> Result<Self> {
        if resolution == 0 || values.len() != resolution * resolution {
            return Err(Error::InvalidArgument(format!(
                "grid of resolution {resolution} needs {} values, got {}",
                resolution * resolution,
                values.len()
            )));
        }
        Ok(Self { resolution, values })
    }

    /// Samples an arbitrary function of `(x, y)`.
    pub fn from_fn(resolution: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = 1.0 / resolution as f64;
        let mut values = Vec::with_capacity(resolution * resolution);
        for i in 0..resolution {
            for j in 0..resolution {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        Self { resolution, values }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, index: usize) -> (f64, f64) {
        let h = 1.0 / self.resolution as f64;
        ((index / self.resolution) as f64 * h, (index % self.resolution) as f64 * h)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            resolution: self.resolution,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two samplings on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.resolution, other.resolution, "grid mismatch");
        Self {
            resolution: self.resolution,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Root mean square over the grid.
    pub fn rms(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s / self.values.len() as f64).sqrt()
    }

    /// Minimum value together with the grid point where it is attained.
    pub fn min_with_point(&self) -> (f64, f64, f64) {
        let (idx, v) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
        let (x, y) = self.point(idx);
        (v, x, y)
    }

    /// Population variance of the samples.
    pub fn variance(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// CSV with header `x,y,value`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 72 + 16);
        out.push_str("x,y,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let (x, y) = self.point(k);
            let _ = writeln!(out, "{x:.16e},{y:.16e},{v:.16e}");
        }
        out
    }
}

/// One entry of an exported spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub m: i64,
    pub n: i64,
    pub re: f64,
    pub im: f64,
}

/// Real, 1-periodic trigonometric polynomial on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    band: usize,
    coeffs: Vec<Complex64>,
}

impl Field2 {
    pub fn zeros(band: usize) -> Self {
        let side = 2 * band + 1;
        Self {
            band,
            coeffs: vec![Complex64::new(0.0, 0.0); side * side],
        }
    }

    pub fn constant(value: f64, band: usize) -> Self {
        let mut f = Self::zeros(band);
        *f.coeff_mut(0, 0) = Complex64::new(value, 0.0);
        f
    }

    /// Builds a field with exactly the listed spectrum.
    ///
    /// With [`Symmetry::Symmetrize`] the input is read as a one-sided (or
    /// partially conjugated) series and the real part of it is stored.
    pub fn from_modes(
        modes: &[(i64, i64, Complex64)],
        band: usize,
        symmetry: Symmetry,
    ) -> Result<Self> {
        let mut f = Self::zeros(band);
        for &(m, n, c) in modes {
            if m.unsigned_abs() as usize > band || n.unsigned_abs() as usize > band {
                return Err(Error::ModeOutOfBand { m, n, band });
            }
            *f.coeff_mut(m, n) += c;
        }
        match symmetry {
            Symmetry::Exact => {
                let defect = f.hermitian_defect();
                if defect > 1e-14 {
                    return Err(Error::NonHermitian { defect });
                }
                f.symmetrize();
            }
            Symmetry::Symmetrize => {
                // Re(Σ c e^{iθ}) = Σ ½(c_k + conj(c_{-k})) e^{iθ}
                let src = f.clone();
                let b = band as i64;
                for m in -b..=b {
                    for n in -b..=b {
                        let v = 0.5 * (src.coeff(m, n) + src.coeff(-m, -n).conj());
                        *f.coeff_mut(m, n) = v;
                    }
                }
            }
        }
        Ok(f)
    }

    /// Cosine polynomial `Σ_j c_j cos(2π j x)` in the first variable.
    pub fn cosine_series_x(coeffs: &[f64], band: usize) -> Result<Self> {
        Self::cosine_series(coeffs, band, true)
    }

    /// Cosine polynomial `Σ_j c_j cos(2π j y)` in the second variable.
    pub fn cosine_series_y(coeffs: &[f64], band: usize) -> Result<Self> {
        Self::cosine_series(coeffs, band, false)
    }

    fn cosine_series(coeffs: &[f64], band: usize, along_x: bool) -> Result<Self> {
        let mut modes = Vec::with_capacity(2 * coeffs.len());
        for (j, &c) in coeffs.iter().enumerate() {
            let j = j as i64;
            let pair = |k: i64| if along_x { (k, 0) } else { (0, k) };
            if j == 0 {
                modes.push((0, 0, Complex64::new(c, 0.0)));
            } else {
                let (m, n) = pair(j);
                modes.push((m, n, Complex64::new(0.5 * c, 0.0)));
                modes.push((-m, -n, Complex64::new(0.5 * c, 0.0)));
            }
        }
        Self::from_modes(&modes, band, Symmetry::Exact)
    }

    pub fn band_limit(&self) -> usize {
        self.band
    }

    #[inline]
    fn index(&self, m: i64, n: i64) -> usize {
        let b = self.band as i64;
        ((m + b) * (2 * b + 1) + (n + b)) as usize
    }

    /// Coefficient `c_{mn}`; zero outside the band.
    pub fn coeff(&self, m: i64, n: i64) -> Complex64 {
        let b = self.band as i64;
        if m.abs() > b || n.abs() > b {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[self.index(m, n)]
        }
    }

    fn coeff_mut(&mut self, m: i64, n: i64) -> &mut Complex64 {
        let i = self.index(m, n);
        &mut self.coeffs[i]
    }

    /// Iterates `(m, n, c_{mn})` over the whole square.
    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        let b = self.band as i64;
        let side = 2 * b + 1;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(k, &c)| (k as i64 / side - b, k as i64 % side - b, c))
    }

    /// Largest `max(|m|, |n|)` carrying a nonzero coefficient.
    pub fn support_band(&self) -> usize {
        self.modes()
            .filter(|(_, _, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(m, n, _)| m.unsigned_abs().max(n.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc.max(c.norm()))
    }

    /// `max |c_{mn} - conj(c_{-m,-n})|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.modes()
            .map(|(m, n, c)| (c - self.coeff(-m, -n).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Projects onto the real subspace.
    pub fn symmetrize(&mut self) {
        let b = self.band as i64;
        for m in -b..=b {
            for n in -b..=b {
                let (i, j) = (self.index(m, n), self.index(-m, -n));
                if i < j {
                    let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
                    self.coeffs[i] = avg;
                    self.coeffs[j] = avg.conj();
                } else if i == j {
                    self.coeffs[i].im = 0.0;
                }
            }
        }
    }

    /// Copy with band limit `band`, zero padded or cut. Returns the L² mass
    /// (`sqrt Σ |c|²`) of the discarded coefficients.
    pub fn resized(&self, band: usize) -> (Self, f64) {
        let mut out = Self::zeros(band);
        let mut lost = 0.0;
        let b = band as i64;
        for (m, n, c) in self.modes() {
            if m.abs() <= b && n.abs() <= b {
                *out.coeff_mut(m, n) = c;
            } else {
                lost += c.norm_sqr();
            }
        }
        (out, lost.sqrt())
    }

    /// Zeroes every coefficient with `max(|m|, |n|) > keep`, leaving the band
    /// limit unchanged. Returns the discarded L² mass.
    pub fn zero_outside(&mut self, keep: usize) -> f64 {
        let keep = keep as i64;
        let b = self.band as i64;
        let mut lost = 0.0;
        for m in -b..=b {
            for n in -b..=b {
                if m.abs() > keep || n.abs() > keep {
                    let i = self.index(m, n);
                    lost += self.coeffs[i].norm_sqr();
                    self.coeffs[i] = Complex64::new(0.0, 0.0);
                }
            }
        }
        lost.sqrt()
    }

    /// Value at `(x, y)`; arguments are reduced mod 1.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        PointEvaluator::new(self).value(x, y)
    }

    pub fn dx(&self) -> Self {
        self.derivative(true)
    }

    pub fn dy(&self) -> Self {
        self.derivative(false)
    }

    fn derivative(&self, along_x: bool) -> Self {
        let mut out = self.clone();
        let b = self.band as i64;
        for m in -b..=b {
            for n in -b..=b {
                let k = if along_x { m } else { n };
                let i = self.index(m, n);
                out.coeffs[i] *= Complex64::new(0.0, TWO_PI * k as f64);
            }
        }
        out
    }

    /// Multiplies every coefficient by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            band: self.band,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `Σ s_i F_i`; the band limit of the result is the largest input band.
    pub fn linear_combine(terms: &[(f64, &Field2)]) -> Self {
        let band = terms.iter().map(|(_, f)| f.band).max().unwrap_or(0);
        let mut out = Self::zeros(band);
        for &(s, f) in terms {
            if s == 0.0 {
                continue;
            }
            if f.band == band {
                for (o, c) in out.coeffs.iter_mut().zip(&f.coeffs) {
                    *o += c * s;
                }
            } else {
                for (m, n, c) in f.modes() {
                    *out.coeff_mut(m, n) += c * s;
                }
            }
        }
        out
    }

    /// Exact product; the band limit grows to `N_a + N_b`.
    pub fn mul(&self, other: &Self) -> Self {
        let band = self.band + other.band;
        let m = fast_grid_size(2 * band + 1);
        let prod = self.sample(m).zip_with(&other.sample(m), |a, b| a * b);
        Self::from_grid(&prod, band).expect("grid sized for the product band")
    }

    /// Product cut back to `band`, with the L² mass of the discarded part.
    pub fn mul_truncated(&self, other: &Self, band: usize) -> (Self, f64) {
        self.mul(other).resized(band)
    }

    /// Values on the `M × M` grid. Exact for any `M`: modes above the
    /// grid's Nyquist limit fold onto their aliases, which is what point
    /// evaluation at the grid nodes gives.
    pub fn sample(&self, resolution: usize) -> GridSampling {
        let mm = resolution as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); resolution * resolution];
        for (m, n, c) in self.modes() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let i = m.rem_euclid(mm) as usize;
            let j = n.rem_euclid(mm) as usize;
            buf[i * resolution + j] += c;
        }
        fft2(&mut buf, resolution, true);
        GridSampling {
            resolution,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Trigonometric interpolant of grid samples, kept to band `band`.
    pub fn from_grid(grid: &GridSampling, band: usize) -> Result<Self> {
        let res = grid.resolution;
        if 2 * band + 1 > res {
            return Err(Error::GridTooSmall {
                resolution: res,
                band,
            });
        }
        let mut buf: Vec<Complex64> = grid.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut buf, res, false);
        let norm = 1.0 / (res * res) as f64;
        let mut out = Self::zeros(band);
        let b = band as i64;
        let mm = res as i64;
        for m in -b..=b {
            for n in -b..=b {
                let i = m.rem_euclid(mm) as usize;
                let j = n.rem_euclid(mm) as usize;
                *out.coeff_mut(m, n) = buf[i * res + j] * norm;
            }
        }
        out.symmetrize();
        Ok(out)
    }

    /// Square root by sampling on an `M × M` grid. The result carries band
    /// `M/2 - 1` (or `(M-1)/2` for odd `M`); the second value is the max
    /// norm of `root² - self` on the same grid.
    pub fn sqrt(&self, resolution: usize) -> Result<(Self, f64)> {
        let grid = self.sample(resolution);
        let (min, x, y) = grid.min_with_point();
        if min <= 0.0 || min.is_nan() {
            return Err(Error::PositivityViolation { x, y, value: min });
        }
        let band = if resolution % 2 == 0 {
            resolution / 2 - 1
        } else {
            (resolution - 1) / 2
        };
        let root = Self::from_grid(&grid.map(f64::sqrt), band)?;
        let residual = (&root.mul(&root) - self).max_norm(resolution);
        Ok((root, residual))
    }

    /// Mean over the torus, `c_{00}`.
    pub fn mean(&self) -> f64 {
        self.coeff(0, 0).re
    }

    /// `max |F|` over the `M × M` grid.
    pub fn max_norm(&self, resolution: usize) -> f64 {
        self.sample(resolution).max_abs()
    }

    /// Root mean square over the `M × M` grid.
    pub fn l2_norm(&self, resolution: usize) -> f64 {
        self.sample(resolution).rms()
    }

    /// `sqrt Σ |c|²` over all coefficients (Parseval norm).
    pub fn spectral_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Shift `F(x, y) -> F(x + dx, y + dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut out = self.clone();
        for (m, n, c) in self.modes() {
            let phase = Complex64::from_polar(1.0, TWO_PI * (m as f64 * dx + n as f64 * dy));
            *out.coeff_mut(m, n) = c * phase;
        }
        out
    }

    /// Nonzero coefficients as `{m, n, re, im}` records; omitted modes are zero.
    pub fn to_spectrum(&self) -> Vec<SpectralEntry> {
        self.modes()
            .filter(|(_, _, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(m, n, c)| SpectralEntry { m, n, re: c.re, im: c.im })
            .collect()
    }

    pub fn from_spectrum(entries: &[SpectralEntry], band: usize) -> Result<Self> {
        let modes: Vec<_> = entries
            .iter()
            .map(|e| (e.m, e.n, Complex64::new(e.re, e.im)))
            .collect();
        Self::from_modes(&modes, band, Symmetry::Exact)
    }
}

impl Add for &Field2 {
    type Output = Field2;
    fn add(self, rhs: &Field2) -> Field2 {
        Field2::linear_combine(&[(1.0, self), (1.0, rhs)])
    }
}

impl Sub for &Field2 {
    type Output = Field2;
    fn sub(self, rhs: &Field2) -> Field2 {
        Field2::linear_combine(&[(1.0, self), (-1.0, rhs)])
    }
}

impl Neg for &Field2 {
    type Output = Field2;
    fn neg(self) -> Field2 {
        self.scaled(-1.0)
    }
}

impl Mul for &Field2 {
    type Output = Field2;
    fn mul(self, rhs: &Field2) -> Field2 {
        Field2::mul(self, rhs)
    }
}

/// Repeated point evaluation of one field with its gradient.
///
/// Keeps only the square of modes that actually carry coefficients, so a
/// band-13 field stored at band 64 costs `27²` terms per call.
#[derive(Debug, Clone)]
pub struct PointEvaluator {
    band: i64,
    coeffs: Vec<Complex64>,
}

impl PointEvaluator {
    pub fn new(field: &Field2) -> Self {
        let support = field.support_band();
        let (trimmed, _) = field.resized(support);
        Self {
            band: support as i64,
            coeffs: trimmed.coeffs,
        }
    }

    fn powers(&self, t: f64) -> Vec<Complex64> {
        let b = self.band as usize;
        let mut out = vec![Complex64::new(1.0, 0.0); 2 * b + 1];
        let base = Complex64::from_polar(1.0, TWO_PI * t.rem_euclid(1.0));
        for k in 1..=b {
            out[b + k] = out[b + k - 1] * base;
            out[b - k] = out[b + k].conj();
        }
        out
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let ex = self.powers(x);
        let ey = self.powers(y);
        let side = ey.len();
        let mut acc = 0.0;
        for (row, ex_m) in self.coeffs.chunks_exact(side).zip(&ex) {
            let mut s = Complex64::new(0.0, 0.0);
            for (c, e) in row.iter().zip(&ey) {
                s += c * e;
            }
            acc += (s * ex_m).re;
        }
        acc
    }

    /// `(F, F_x, F_y)` at `(x, y)`.
    pub fn value_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let ex = self.powers(x);
        let ey = self.powers(y);
        let side = ey.len();
        let b = self.band;
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for (mi, (row, ex_m)) in self.coeffs.chunks_exact(side).zip(&ex).enumerate() {
            let m = mi as i64 - b;
            let mut s = Complex64::new(0.0, 0.0);
            let mut sn = Complex64::new(0.0, 0.0);
            for (ni, (c, e)) in row.iter().zip(&ey).enumerate() {
                let t = c * e;
                s += t;
                sn += t * (ni as i64 - b) as f64;
            }
            let s = s * ex_m;
            let sn = sn * ex_m;
            v += s.re;
            // d/dx of Re(c e^{iθ}) = Re(2πi m c e^{iθ}) = -2π m Im(·)
            gx -= TWO_PI * m as f64 * s.im;
            gy -= TWO_PI * sn.im;
        }
        (v, gx, gy)
    }
}
