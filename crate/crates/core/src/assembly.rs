//! Metric, magnetic field and first integral on `{H = 1/2}` built from a
//! state `U = (Λ, u₀, f, g)`, plus the residuals that must vanish when `U`
//! solves the stationary system.
//!
//! The integral is written in the angle `φ` of the momentum,
//! `p = √Λ (cos φ, sin φ)`:
//!
//! ```text
//! F(x, y, φ) = Σ_{k=-2..2} a_k e^{ikφ},  a_0 = u₀,  a_1 = √Λ (f + i g),  a_2 = Λ
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deformation::{LiouvilleData, StateU};
use crate::error::{Error, Result};
use crate::field::{fast_grid_size, Field2, GridSampling, PointEvaluator};

/// Default verification grid resolution.
pub const M_VERIFY: usize = 128;

/// Metric `Λ (dx² + dy²)` with magnetic form `Ω dx∧dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagneticSystem {
    pub lam: Field2,
    pub omega: Field2,
}

impl MagneticSystem {
    pub fn new(lam: Field2, omega: Field2) -> Result<Self> {
        let m = fast_grid_size((2 * lam.support_band() + 2).max(64));
        let (min, x, y) = lam.sample(m).min_with_point();
        if min <= 0.0 || min.is_nan() {
            return Err(Error::PositivityViolation { x, y, value: min });
        }
        Ok(Self { lam, omega })
    }

    pub fn from_state(u: &StateU) -> Result<Self> {
        Self::new(u.lam.clone(), magnetic_field(u))
    }

    pub fn flat() -> Self {
        Self {
            lam: Field2::constant(1.0, 0),
            omega: Field2::zeros(0),
        }
    }

    pub fn lam_min(&self, resolution: usize) -> f64 {
        self.lam.sample(resolution).min_with_point().0
    }
}

/// `Ω = ¼ (g_x − f_y)`.
pub fn magnetic_field(u: &StateU) -> Field2 {
    let omega = Field2::linear_combine(&[(0.25, &u.g.dx()), (-0.25, &u.f.dy())]);
    // a derivative has no zero mode; the form is exact
    debug_assert!(omega.mean().abs() < 1e-13);
    omega
}

/// Fourier-in-φ coefficients of the quadratic integral on `{H = 1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticIntegralOnLevel {
    pub a0: Field2,
    pub a1_re: Field2,
    pub a1_im: Field2,
    pub a2: Field2,
}

/// Resolution used to interpolate `√Λ f`, `√Λ g`: at least `M_VERIFY` and
/// fine enough for the support of the state.
fn assembly_grid(u: &StateU) -> usize {
    fast_grid_size((4 * u.support_band() + 2).max(M_VERIFY))
}

/// `a₀ = u₀`, `a₁ = √Λ (f + i g)`, `a₂ = Λ`.
pub fn assemble_integral(u: &StateU) -> Result<QuadraticIntegralOnLevel> {
    let m = assembly_grid(u);
    let lam = u.lam.sample(m);
    let (min, x, y) = lam.min_with_point();
    if min <= 0.0 || min.is_nan() {
        return Err(Error::PositivityViolation { x, y, value: min });
    }
    let root = lam.map(f64::sqrt);
    let band = m / 2 - 1;
    let a1_re = Field2::from_grid(&root.zip_with(&u.f.sample(m), |r, f| r * f), band)?;
    let a1_im = Field2::from_grid(&root.zip_with(&u.g.sample(m), |r, g| r * g), band)?;
    Ok(QuadraticIntegralOnLevel {
        a0: u.u0.clone(),
        a1_re,
        a1_im,
        a2: u.lam.clone(),
    })
}

impl QuadraticIntegralOnLevel {
    pub fn evaluator(&self) -> IntegralEvaluator {
        IntegralEvaluator {
            a0: PointEvaluator::new(&self.a0),
            a1_re: PointEvaluator::new(&self.a1_re),
            a1_im: PointEvaluator::new(&self.a1_im),
            a2: PointEvaluator::new(&self.a2),
        }
    }
}

/// `F(x, y, φ) = a₀ + 2(Re a₁ cos φ − Im a₁ sin φ) + 2 a₂ cos 2φ`.
pub fn eval_integral(q: &QuadraticIntegralOnLevel, x: f64, y: f64, phi: f64) -> f64 {
    q.a0.eval(x, y)
        + 2.0 * (q.a1_re.eval(x, y) * phi.cos() - q.a1_im.eval(x, y) * phi.sin())
        + 2.0 * q.a2.eval(x, y) * (2.0 * phi).cos()
}

/// Cached point evaluation of a [`QuadraticIntegralOnLevel`].
#[derive(Debug, Clone)]
pub struct IntegralEvaluator {
    a0: PointEvaluator,
    a1_re: PointEvaluator,
    a1_im: PointEvaluator,
    a2: PointEvaluator,
}

impl IntegralEvaluator {
    /// `F` at an angle-form phase point.
    pub fn on_level(&self, x: f64, y: f64, phi: f64) -> f64 {
        self.a0.value(x, y)
            + 2.0 * (self.a1_re.value(x, y) * phi.cos() - self.a1_im.value(x, y) * phi.sin())
            + 2.0 * self.a2.value(x, y) * (2.0 * phi).cos()
    }

    /// Quadratic polynomial in momenta that agrees with `F` on `{H = 1/2}`:
    /// `a₀|p|²/Λ + 2(Re a₁ p₁ − Im a₁ p₂)/√Λ + 2 a₂ (p₁² − p₂²)/Λ`.
    pub fn in_momenta(&self, lam: f64, x: f64, y: f64, p1: f64, p2: f64) -> f64 {
        let r2 = p1 * p1 + p2 * p2;
        self.a0.value(x, y) * r2 / lam
            + 2.0 * (self.a1_re.value(x, y) * p1 - self.a1_im.value(x, y) * p2) / lam.sqrt()
            + 2.0 * self.a2.value(x, y) * (p1 * p1 - p2 * p2) / lam
    }
}

/// Residuals of the stationary system, computed with exact products:
///
/// ```text
/// R1 = f_x + g_y
/// R2 = (fΛ)_x − (gΛ)_y
/// R3 =  u₀_x + 2Λ_x − ½ g (f_y − g_x)
/// R4 = −u₀_y + 2Λ_y + ½ f (f_y − g_x)
/// ```
pub fn system_residual(u: &StateU) -> [Field2; 4] {
    let curl = &u.f.dy() - &u.g.dx();
    let r1 = &u.f.dx() + &u.g.dy();
    let r2 = &u.f.mul(&u.lam).dx() - &u.g.mul(&u.lam).dy();
    let r3 = Field2::linear_combine(&[
        (1.0, &u.u0.dx()),
        (2.0, &u.lam.dx()),
        (-0.5, &u.g.mul(&curl)),
    ]);
    let r4 = Field2::linear_combine(&[
        (-1.0, &u.u0.dy()),
        (2.0, &u.lam.dy()),
        (0.5, &u.f.mul(&curl)),
    ]);
    [r1, r2, r3, r4]
}

/// Real and imaginary parts of the `e^{ikφ}` coefficient of `√Λ dF/dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierResidual {
    pub k: i32,
    pub re: Field2,
    pub im: Field2,
}

impl FourierResidual {
    /// Max of `|E_k|` over the `M × M` grid.
    pub fn max_norm(&self, resolution: usize) -> f64 {
        self.re
            .sample(resolution)
            .zip_with(&self.im.sample(resolution), f64::hypot)
            .max_abs()
    }

    pub fn l2_norm(&self, resolution: usize) -> f64 {
        self.re
            .sample(resolution)
            .zip_with(&self.im.sample(resolution), f64::hypot)
            .rms()
    }
}

/// Coefficients at `e^{ikφ}`, `k = 0..3`, of
///
/// ```text
/// F_x cos φ + F_y sin φ + F_φ (Λ_y cos φ/(2Λ) − Λ_x sin φ/(2Λ) − Ω/√Λ)
/// ```
///
/// for `F` from [`assemble_integral`] and `Ω` from [`magnetic_field`].
/// Products and divisions are taken pointwise on an oversampled grid.
pub fn fourier_condition_residual(u: &StateU) -> Result<[FourierResidual; 4]> {
    let q = assemble_integral(u)?;
    let omega = magnetic_field(u);
    let m = assembly_grid(u);
    let band = m / 2 - 1;

    let lam = u.lam.sample(m);
    let lam_x = u.lam.dx().sample(m);
    let lam_y = u.lam.dy().sample(m);
    let om = omega.sample(m);

    let cplx = |re: &Field2, im: Option<&Field2>| -> [Vec<Complex64>; 3] {
        let parts = |f: &Field2| [f.sample(m), f.dx().sample(m), f.dy().sample(m)];
        let r = parts(re);
        let i = im.map(parts);
        std::array::from_fn(|d| {
            r[d].values()
                .iter()
                .enumerate()
                .map(|(p, &v)| Complex64::new(v, i.as_ref().map_or(0.0, |i| i[d].values()[p])))
                .collect()
        })
    };
    // a_k with its x- and y-derivatives; a_{-k} = conj(a_k)
    let a0 = cplx(&q.a0, None);
    let a1 = cplx(&q.a1_re, Some(&q.a1_im));
    let a2 = cplx(&q.a2, None);
    let zero = vec![Complex64::new(0.0, 0.0); m * m];
    let conj = |v: &[Complex64]| v.iter().map(|c| c.conj()).collect::<Vec<_>>();
    let am1 = [conj(&a1[0]), conj(&a1[1]), conj(&a1[2])];
    let am2 = [conj(&a2[0]), conj(&a2[1]), conj(&a2[2])];
    let zeros = [zero.clone(), zero.clone(), zero];
    let coeff = |k: i32| -> &[Vec<Complex64>; 3] {
        match k {
            -2 => &am2,
            -1 => &am1,
            0 => &a0,
            1 => &a1,
            2 => &a2,
            _ => &zeros,
        }
    };

    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(4);
    for k in 0..4 {
        let (lo, mid, hi) = (coeff(k - 1), coeff(k), coeff(k + 1));
        let kf = k as f64;
        let mut re = vec![0.0; m * m];
        let mut im = vec![0.0; m * m];
        for p in 0..m * m {
            let l = lam.values()[p];
            let lx = lam_x.values()[p];
            let ly = lam_y.values()[p];
            let e = 0.5 * (lo[1][p] + hi[1][p]) - 0.5 * i * (lo[2][p] - hi[2][p])
                + i * ly / (4.0 * l) * ((kf - 1.0) * lo[0][p] + (kf + 1.0) * hi[0][p])
                - lx / (4.0 * l) * ((kf - 1.0) * lo[0][p] - (kf + 1.0) * hi[0][p])
                - i * kf * om.values()[p] * mid[0][p] / l.sqrt();
            re[p] = e.re;
            im[p] = e.im;
        }
        out.push(FourierResidual {
            k,
            re: Field2::from_grid(&GridSampling::new(m, re)?, band)?,
            im: Field2::from_grid(&GridSampling::new(m, im)?, band)?,
        });
    }
    Ok(out.try_into().expect("four orders"))
}

/// `(Λ₂ p₁² − Λ₁ p₂²)/(Λ₁ + Λ₂)` at `p = √Λ (cos φ, sin φ)`.
pub fn liouville_reference_integral(data: &LiouvilleData, x: f64, y: f64, phi: f64) -> f64 {
    let (l1, l2) = (data.lam1.value(x), data.lam2.value(y));
    let lam = l1 + l2;
    let (p1, p2) = (lam.sqrt() * phi.cos(), lam.sqrt() * phi.sin());
    (l2 * p1 * p1 - l1 * p2 * p2) / lam
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormPair {
    pub max: f64,
    pub l2: f64,
}

impl NormPair {
    pub fn of(field: &Field2, resolution: usize) -> Self {
        let s = field.sample(resolution);
        Self {
            max: s.max_abs(),
            l2: s.rms(),
        }
    }
}

/// Machine-readable summary of all stationary residuals at one `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub t: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub residual_norms: BTreeMap<String, NormPair>,
    pub omega_mean: f64,
    pub lam_min: f64,
}

impl VerifyReport {
    pub fn build(u: &StateU, t: f64, k: usize, resolution: usize) -> Result<Self> {
        let mut residual_norms = BTreeMap::new();
        for (i, r) in system_residual(u).iter().enumerate() {
            residual_norms.insert(format!("R{}", i + 1), NormPair::of(r, resolution));
        }
        for e in fourier_condition_residual(u)? {
            residual_norms.insert(
                format!("fourier_k{}", e.k),
                NormPair {
                    max: e.max_norm(resolution),
                    l2: e.l2_norm(resolution),
                },
            );
        }
        Ok(Self {
            t,
            k,
            residual_norms,
            omega_mean: magnetic_field(u).mean(),
            lam_min: u.lam.sample(resolution).min_with_point().0,
        })
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_norms.values().map(|n| n.max).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformation::{ck_jet, evaluate_jet, liouville_initial_state};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn preset() -> (LiouvilleData, StateU) {
        let data = LiouvilleData::default_preset();
        let u = liouville_initial_state(&data, 16).unwrap();
        (data, u)
    }

    fn max_over_residuals(r: &[Field2; 4]) -> f64 {
        r.iter().map(|f| f.max_norm(64)).fold(0.0, f64::max)
    }

    #[test]
    fn omega_vanishes_at_liouville_state() {
        let (_, u) = preset();
        assert_eq!(magnetic_field(&u).max_abs_coeff(), 0.0);
    }

    #[test]
    fn omega_first_order_coefficient() {
        let (data, u) = preset();
        let jet = ck_jet(&u, 2).unwrap();
        let om1 = magnetic_field(&jet.coeffs[1]);
        let g = om1.sample(32);
        for (p, v) in g.values().iter().enumerate() {
            let (x, y) = g.point(p);
            let want = data.lam1.derivative(x, 2) - data.lam2.derivative(y, 2);
            assert_abs_diff_eq!(*v, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn omega_of_sine_f() {
        // f = sin 2πy, g = 0  =>  Ω = −¼ ∂_y sin 2πy = −(π/2) cos 2πy
        let mut u = StateU::constant(1.0, 0.0, 0.0, 0.0, 2);
        u.f = Field2::from_modes(
            &[(0, 1, Complex64::new(0.0, -0.5)), (0, -1, Complex64::new(0.0, 0.5))],
            2,
            crate::field::Symmetry::Exact,
        )
        .unwrap();
        let om = magnetic_field(&u);
        for &y in &[0.0, 0.13, 0.5, 0.77] {
            assert_abs_diff_eq!(om.eval(0.3, y), -0.5 * PI * (2.0 * PI * y).cos(), epsilon = 1e-14);
        }
        assert_eq!(om.mean(), 0.0);
    }

    #[test]
    fn integral_at_liouville_state_is_four_times_reference() {
        let (data, u) = preset();
        let q = assemble_integral(&u).unwrap();
        assert_eq!(q.a2, u.lam);
        let mut worst: f64 = 0.0;
        for i in 0..7 {
            for j in 0..5 {
                for k in 0..8 {
                    let (x, y, phi) = (i as f64 / 7.0, 0.1 + j as f64 / 5.0, k as f64 * 0.8);
                    let direct = (2.0 * data.lam2.value(y) - 2.0 * data.lam1.value(x))
                        + 2.0 * data.lam(x, y) * (2.0 * phi).cos();
                    let f = eval_integral(&q, x, y, phi);
                    assert_abs_diff_eq!(f, direct, epsilon = 1e-12);
                    worst = worst.max((f - 4.0 * liouville_reference_integral(&data, x, y, phi)).abs());
                }
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn integral_of_constant_state() {
        let u = StateU::constant(3.0, -1.0, 0.0, 0.0, 2);
        let q = assemble_integral(&u).unwrap();
        for &phi in &[0.0, 0.4, 2.0] {
            assert_abs_diff_eq!(eval_integral(&q, 0.2, 0.9, phi), -1.0 + 6.0 * (2.0 * phi).cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn eval_integral_special_angles_and_complex_sum() {
        let (_, u0) = preset();
        let jet = ck_jet(&u0, 4).unwrap();
        let u = evaluate_jet(&jet, 0.01).unwrap();
        let q = assemble_integral(&u).unwrap();
        let (x, y) = (0.31, 0.58);
        let (a0, ar, ai, a2) = (q.a0.eval(x, y), q.a1_re.eval(x, y), q.a1_im.eval(x, y), q.a2.eval(x, y));
        assert_abs_diff_eq!(eval_integral(&q, x, y, 0.0), a0 + 2.0 * ar + 2.0 * a2, epsilon = 1e-13);
        assert_abs_diff_eq!(eval_integral(&q, x, y, PI / 2.0), a0 - 2.0 * ai - 2.0 * a2, epsilon = 1e-13);
        let phi = 1.234;
        let a = [Complex64::new(a2, 0.0), Complex64::new(ar, -ai), Complex64::new(a0, 0.0), Complex64::new(ar, ai), Complex64::new(a2, 0.0)];
        let sum: Complex64 = (-2..=2)
            .map(|k: i32| a[(k + 2) as usize] * Complex64::from_polar(1.0, k as f64 * phi))
            .sum();
        assert_abs_diff_eq!(eval_integral(&q, x, y, phi), sum.re, epsilon = 1e-13);
        assert!(sum.im.abs() < 1e-13);
        let ev = q.evaluator();
        assert_abs_diff_eq!(ev.on_level(x, y, phi), sum.re, epsilon = 1e-13);
        let lam = u.lam.eval(x, y);
        let (p1, p2) = (lam.sqrt() * phi.cos(), lam.sqrt() * phi.sin());
        assert_abs_diff_eq!(ev.in_momenta(lam, x, y, p1, p2), sum.re, epsilon = 1e-12);
    }

    #[test]
    fn reference_integral_special_angles() {
        let data = LiouvilleData::default_preset();
        let (x, y) = (0.2, 0.7);
        assert_abs_diff_eq!(liouville_reference_integral(&data, x, y, 0.0), data.lam2.value(y), epsilon = 1e-15);
        assert_abs_diff_eq!(liouville_reference_integral(&data, x, y, PI / 2.0), -data.lam1.value(x), epsilon = 1e-14);
    }

    #[test]
    fn residuals_vanish_at_liouville_and_constant_states() {
        let (_, u) = preset();
        assert!(max_over_residuals(&system_residual(&u)) < 1e-13);
        assert!(max_over_residuals(&system_residual(&StateU::constant(2.0, 1.0, 0.5, -0.3, 2))) < 1e-14);
        for e in fourier_condition_residual(&u).unwrap() {
            assert!(e.max_norm(64) < 1e-12, "k = {}: {}", e.k, e.max_norm(64));
        }
    }

    #[test]
    fn k3_condition_vanishes_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut u = StateU::constant(2.0, 0.0, 0.0, 0.0, 3);
        let mut rnd = |band: usize| {
            let modes: Vec<_> = (0..6)
                .map(|_| {
                    let m = rng.gen_range(-(band as i64)..=band as i64);
                    let n = rng.gen_range(-(band as i64)..=band as i64);
                    (m, n, Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
                })
                .collect();
            Field2::from_modes(&modes, band, crate::field::Symmetry::Symmetrize).unwrap()
        };
        u.lam = &u.lam + &rnd(3);
        u.u0 = rnd(3);
        u.f = rnd(3);
        u.g = rnd(3);
        let e = fourier_condition_residual(&u).unwrap();
        assert!(e[3].max_norm(64) < 1e-13);
        // a generic state is not a solution
        assert!(max_over_residuals(&system_residual(&u)) > 1e-3);
        assert!(e[..3].iter().map(|r| r.max_norm(64)).fold(0.0, f64::max) > 1e-3);
    }

    #[test]
    fn both_residual_formulations_agree_on_jet_solutions() {
        let (_, u0) = preset();
        let jet = ck_jet(&u0, 8).unwrap();
        for (k, t) in [(2, 0.02), (4, 0.02), (8, 0.01)] {
            let u = evaluate_jet(&jet.truncated(k).unwrap(), t).unwrap();
            let sys = max_over_residuals(&system_residual(&u));
            let f8 = fourier_condition_residual(&u)
                .unwrap()
                .iter()
                .map(|e| e.max_norm(64))
                .fold(0.0, f64::max);
            let ratio = sys / f8;
            assert!(ratio > 0.1 && ratio < 10.0, "K={k}: {sys:e} vs {f8:e}");
        }
    }

    #[test]
    fn residual_decreases_with_jet_order() {
        let (_, u0) = preset();
        let jet = ck_jet(&u0, 10).unwrap();
        let mut prev = f64::INFINITY;
        for k in [2, 4, 6, 8, 10] {
            let u = jet.truncated(k).unwrap().sum_at(0.01);
            let r = max_over_residuals(&system_residual(&u));
            assert!(r < prev, "K={k}: {r:e} !< {prev:e}");
            prev = r;
        }
    }

    #[test]
    fn residuals_are_translation_equivariant() {
        let (_, u0) = preset();
        let u = ck_jet(&u0, 3).unwrap().sum_at(0.05);
        let shifted = u.translated(0.5, 0.0);
        let r = system_residual(&u);
        let rs = system_residual(&shifted);
        for (a, b) in r.iter().zip(&rs) {
            let d = (&a.translated(0.5, 0.0) - b).max_abs_coeff();
            assert!(d < 1e-12 * a.max_abs_coeff().max(1.0));
        }
    }

    #[test]
    fn omega_is_exact_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let modes: Vec<_> = (0..5)
                .map(|_| (rng.gen_range(-3..=3), rng.gen_range(-3..=3), Complex64::new(rng.gen(), rng.gen())))
                .collect();
            let f = Field2::from_modes(&modes, 3, crate::field::Symmetry::Symmetrize).unwrap();
            let u = StateU { lam: Field2::constant(1.0, 3), u0: Field2::zeros(3), f: f.clone(), g: f.dx() };
            assert!(magnetic_field(&u).mean().abs() < 1e-13);
        }
    }

    #[test]
    fn verify_report_shape() {
        let (_, u) = preset();
        let rep = VerifyReport::build(&u, 0.0, 12, 64).unwrap();
        assert_eq!(rep.residual_norms.len(), 8);
        assert!(rep.residual_norms.contains_key("fourier_k3"));
        assert!(rep.max_residual() < 1e-12);
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json.get("K").is_some() && json.get("omega_mean").is_some());
    }
}
