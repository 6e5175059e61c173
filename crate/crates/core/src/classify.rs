//! Quadratic integrals on all energy levels.
//!
//! A polynomial `F₂ = a₀p₁² + 2a₁p₁p₂ + a₂p₂² + b₀p₁ + b₁p₂ + c₀` commutes
//! with `H = |p|²/(2Λ)` under the twisted bracket iff the following nine
//! fields vanish (`f = b₀/2`, `g = −b₁/2`):
//!
//! ```text
//! (a1)  a₀_x/Λ + (a₀Λ_x + a₁Λ_y)/Λ²
//! (a2)  (a₀_y + 2a₁_x)/Λ + (a₁Λ_x + a₂Λ_y)/Λ²
//! (a3)  (a₂_x + 2a₁_y)/Λ + (a₀Λ_x + a₁Λ_y)/Λ²
//! (a4)  a₂_y/Λ + (a₁Λ_x + a₂Λ_y)/Λ²
//! (b1') f_x + (Λ_x/2Λ) f − (Λ_y/2Λ) g − Ω a₁
//! (b2') f_x + g_y − 2Ω a₁
//! (b3') ¼ Ω (a₀ − a₂) − ¼ (g_x − f_y)
//! (c1)  c₀_x + 2Ω g
//! (c2)  c₀_y + 2Ω f
//! ```
//!
//! The cubic part of `{F₂, H}` gives the (a) group. The quadratic part has
//! coefficients on `p₁²`, `p₂²` and `p₁p₂`; `(b1')` is `Λ/2` times the
//! first, `(b2')` is the first minus the second, `(b3')` is `Λ/8` times the
//! third. The linear part gives the (c) group after multiplying by `Λ`. With
//! `a₁ = 0` and `a₀ − a₂ = 4`, the b-equations reduce to the usual
//! normalized form `Ω = ¼(g_x − f_y)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::assembly::MagneticSystem;
use crate::deformation::{CosineSeries, LiouvilleData, StateU};
use crate::dynamics::{
    conservation_report, integrate_batch, Monitor, PhasePointAngle, PhasePointCotangent, SystemEvaluator,
};
use crate::error::{Error, Result};
use crate::field::{fast_grid_size, Field2, GridSampling, Symmetry};
use crate::integrator::IntegratorSettings;
use num_complex::Complex64;

/// `Σ_j c_j cos(2πjy) + s_j sin(2πjy)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigSeries {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len()).saturating_sub(1)
    }

    pub fn value(&self, s: f64) -> f64 {
        self.derivative(s, 0)
    }

    pub fn derivative(&self, s: f64, order: u32) -> f64 {
        let sin_part: f64 = self
            .sin
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let w = 2.0 * PI * j as f64;
                c * w.powi(order as i32) * (w * s + order as f64 * PI / 2.0).sin()
            })
            .sum();
        CosineSeries(self.cos.clone()).derivative(s, order) + sin_part
    }

    /// The series as a field in the second variable.
    pub fn field_y(&self, band: usize) -> Result<Field2> {
        let mut modes = Vec::new();
        for (j, &c) in self.cos.iter().enumerate() {
            let j = j as i64;
            if j == 0 {
                modes.push((0, 0, Complex64::new(c, 0.0)));
            } else {
                modes.push((0, j, Complex64::new(0.5 * c, 0.0)));
                modes.push((0, -j, Complex64::new(0.5 * c, 0.0)));
            }
        }
        for (j, &s) in self.sin.iter().enumerate().skip(1) {
            let j = j as i64;
            // sin θ = (e^{iθ} − e^{−iθ}) / 2i
            modes.push((0, j, Complex64::new(0.0, -0.5 * s)));
            modes.push((0, -j, Complex64::new(0.0, 0.5 * s)));
        }
        Field2::from_modes(&modes, band, Symmetry::Exact)
    }
}

/// Metric `Λ(y)(dx² + dy²)` with `Ω = −u′(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOneData {
    pub lam_y: CosineSeries,
    pub u_y: TrigSeries,
}

impl ExampleOneData {
    /// `Λ = 1 + 0.2 cos 2πy`, `u = sin 2πy`.
    pub fn default_preset() -> Self {
        Self {
            lam_y: CosineSeries(vec![1.0, 0.2]),
            u_y: TrigSeries {
                cos: vec![0.0],
                sin: vec![0.0, 1.0],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lam_y.0.is_empty() || self.lam_y.0.iter().chain(&self.u_y.cos).chain(&self.u_y.sin).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("example one coefficients must be finite and non-empty".into()));
        }
        let min = self.lam_y.sampled_min();
        if min <= 0.0 {
            return Err(Error::PositivityViolation { x: 0.0, y: f64::NAN, value: min });
        }
        Ok(())
    }

    pub fn band(&self) -> usize {
        self.lam_y.degree().max(self.u_y.degree()).max(1)
    }
}

/// `F₁ = p₁ + u(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearIntegral {
    pub u: TrigSeries,
}

impl LinearIntegral {
    pub fn eval(&self, p: &PhasePointCotangent) -> f64 {
        p.p1 + self.u.value(p.y)
    }
}

pub fn example_one_system(d: &ExampleOneData) -> Result<(MagneticSystem, LinearIntegral)> {
    d.validate()?;
    let band = d.band();
    let lam = Field2::cosine_series_y(&d.lam_y.0, band)?;
    let omega = -&d.u_y.field_y(band)?.dy();
    let sys = MagneticSystem::new(lam, omega)?;
    Ok((sys, LinearIntegral { u: d.u_y.clone() }))
}

/// Coefficients of `F₂ = a₀p₁² + 2a₁p₁p₂ + a₂p₂² + b₀p₁ + b₁p₂ + c₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllLevelsQuadratic {
    pub a0: Field2,
    pub a1: Field2,
    pub a2: Field2,
    pub b0: Field2,
    pub b1: Field2,
    pub c0: Field2,
}

/// Default interpolation grid for candidates with non-polynomial entries.
pub const CANDIDATE_GRID: usize = 128;

impl AllLevelsQuadratic {
    pub fn coefficients(&self) -> [(&'static str, &Field2); 6] {
        [
            ("a0", &self.a0),
            ("a1", &self.a1),
            ("a2", &self.a2),
            ("b0", &self.b0),
            ("b1", &self.b1),
            ("c0", &self.c0),
        ]
    }

    /// `(Λ₂p₁² − Λ₁p₂²)/(Λ₁ + Λ₂)`, interpolated on an `m × m` grid.
    pub fn liouville(data: &LiouvilleData, m: usize) -> Result<Self> {
        data.validate()?;
        let band = m / 2 - 1;
        let a0 = Field2::from_grid(&GridSampling::from_fn(m, |x, y| data.lam2.value(y) / data.lam(x, y)), band)?;
        let a2 = Field2::from_grid(&GridSampling::from_fn(m, |x, y| -data.lam1.value(x) / data.lam(x, y)), band)?;
        let zero = Field2::zeros(band);
        Ok(Self {
            a0,
            a1: zero.clone(),
            a2,
            b0: zero.clone(),
            b1: zero.clone(),
            c0: zero,
        })
    }

    /// `F₁² + 2H = (1 + 1/Λ)p₁² + p₂²/Λ + 2u p₁ + u²`.
    pub fn example_one(d: &ExampleOneData, m: usize) -> Result<Self> {
        d.validate()?;
        let band = m / 2 - 1;
        let inv = Field2::from_grid(&GridSampling::from_fn(m, |_, y| 1.0 / d.lam_y.value(y)), band)?;
        let u = d.u_y.field_y(band)?;
        let (c0, _) = u.mul_truncated(&u, band);
        Ok(Self {
            a0: &inv + &Field2::constant(1.0, band),
            a1: Field2::zeros(band),
            a2: inv,
            b0: u.scaled(2.0),
            b1: Field2::zeros(band),
            c0,
        })
    }

    /// The one-level integral `F = u₀ + 2Re(a₁e^{iφ}) + 2Λcos2φ` read as a
    /// polynomial in `p = √Λ(cos φ, sin φ)`:
    /// `(u₀/Λ + 2)p₁² + (u₀/Λ − 2)p₂² + 2f p₁ − 2g p₂`.
    pub fn from_one_level(u: &StateU, m: usize) -> Result<Self> {
        let band = m / 2 - 1;
        let lam = u.lam.sample(m);
        let (min, x, y) = lam.min_with_point();
        if min <= 0.0 || min.is_nan() {
            return Err(Error::PositivityViolation { x, y, value: min });
        }
        let ratio = Field2::from_grid(&u.u0.sample(m).zip_with(&lam, |a, l| a / l), band)?;
        let two = Field2::constant(2.0, band);
        let (f, _) = u.f.resized(band);
        let (g, _) = u.g.resized(band);
        Ok(Self {
            a0: &ratio + &two,
            a1: Field2::zeros(band),
            a2: &ratio - &two,
            b0: f.scaled(2.0),
            b1: g.scaled(-2.0),
            c0: Field2::zeros(band),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a0: self.a0.scaled(s),
            a1: self.a1.scaled(s),
            a2: self.a2.scaled(s),
            b0: self.b0.scaled(s),
            b1: self.b1.scaled(s),
            c0: self.c0.scaled(s),
        }
    }

    pub fn evaluator(&self) -> QuadraticEvaluator {
        use crate::field::PointEvaluator as P;
        QuadraticEvaluator {
            a0: P::new(&self.a0),
            a1: P::new(&self.a1),
            a2: P::new(&self.a2),
            b0: P::new(&self.b0),
            b1: P::new(&self.b1),
            c0: P::new(&self.c0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticEvaluator {
    a0: crate::field::PointEvaluator,
    a1: crate::field::PointEvaluator,
    a2: crate::field::PointEvaluator,
    b0: crate::field::PointEvaluator,
    b1: crate::field::PointEvaluator,
    c0: crate::field::PointEvaluator,
}

impl QuadraticEvaluator {
    pub fn eval(&self, p: &PhasePointCotangent) -> f64 {
        let (x, y, p1, p2) = (p.x, p.y, p.p1, p.p2);
        self.a0.value(x, y) * p1 * p1
            + 2.0 * self.a1.value(x, y) * p1 * p2
            + self.a2.value(x, y) * p2 * p2
            + self.b0.value(x, y) * p1
            + self.b1.value(x, y) * p2
            + self.c0.value(x, y)
    }
}

pub const RESIDUAL_NAMES: [&str; 9] = ["a1", "a2", "a3", "a4", "b1p", "b2p", "b3p", "c1", "c2"];

#[derive(Debug, Clone, PartialEq)]
pub struct AllLevelsResiduals {
    pub resolution: usize,
    /// In the order of [`RESIDUAL_NAMES`].
    pub fields: Vec<(String, Field2)>,
    pub max_norms: BTreeMap<String, f64>,
}

impl AllLevelsResiduals {
    pub fn max(&self) -> f64 {
        self.max_norms.values().copied().fold(0.0, f64::max)
    }

    pub fn max_of(&self, prefix: char) -> f64 {
        self.max_norms
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }
}

struct Sampled {
    v: GridSampling,
    x: GridSampling,
    y: GridSampling,
}

fn sampled(f: &Field2, m: usize) -> Sampled {
    Sampled {
        v: f.sample(m),
        x: f.dx().sample(m),
        y: f.dy().sample(m),
    }
}

fn check_positive(lam: &GridSampling) -> Result<()> {
    let (min, x, y) = lam.min_with_point();
    if min <= 0.0 || min.is_nan() {
        return Err(Error::PositivityViolation { x, y, value: min });
    }
    Ok(())
}

/// The nine residual fields, evaluated pointwise on an `m × m` grid and
/// interpolated back to band `m/2 − 1`.
pub fn all_levels_residuals(sys: &MagneticSystem, q: &AllLevelsQuadratic, m: usize) -> Result<AllLevelsResiduals> {
    if m < 8 {
        return Err(Error::InvalidArgument(format!("residual grid {m} too small")));
    }
    let lam = sampled(&sys.lam, m);
    check_positive(&lam.v)?;
    let om = sys.omega.sample(m);
    let (a0, a1, a2) = (sampled(&q.a0, m), sampled(&q.a1, m), sampled(&q.a2, m));
    let f = sampled(&q.b0.scaled(0.5), m);
    let g = sampled(&q.b1.scaled(-0.5), m);
    let c0 = sampled(&q.c0, m);

    let n = m * m;
    let mut out: Vec<Vec<f64>> = (0..9).map(|_| Vec::with_capacity(n)).collect();
    for i in 0..n {
        let l = lam.v.values()[i];
        let (lx, ly) = (lam.x.values()[i], lam.y.values()[i]);
        let w = om.values()[i];
        let l2 = l * l;
        let a0v = a0.v.values()[i];
        let a1v = a1.v.values()[i];
        let a2v = a2.v.values()[i];
        let fv = f.v.values()[i];
        let gv = g.v.values()[i];
        out[0].push(a0.x.values()[i] / l + (a0v * lx + a1v * ly) / l2);
        out[1].push((a0.y.values()[i] + 2.0 * a1.x.values()[i]) / l + (a1v * lx + a2v * ly) / l2);
        out[2].push((a2.x.values()[i] + 2.0 * a1.y.values()[i]) / l + (a0v * lx + a1v * ly) / l2);
        out[3].push(a2.y.values()[i] / l + (a1v * lx + a2v * ly) / l2);
        out[4].push(f.x.values()[i] + lx * fv / (2.0 * l) - ly * gv / (2.0 * l) - w * a1v);
        out[5].push(f.x.values()[i] + g.y.values()[i] - 2.0 * w * a1v);
        out[6].push(0.25 * w * (a0v - a2v) - 0.25 * (g.x.values()[i] - f.y.values()[i]));
        out[7].push(c0.x.values()[i] + 2.0 * w * gv);
        out[8].push(c0.y.values()[i] + 2.0 * w * fv);
    }

    let band = m / 2 - 1;
    let mut fields = Vec::with_capacity(9);
    let mut max_norms = BTreeMap::new();
    for (name, vals) in RESIDUAL_NAMES.iter().zip(out) {
        let grid = GridSampling::new(m, vals)?;
        max_norms.insert(name.to_string(), grid.max_abs());
        fields.push((name.to_string(), Field2::from_grid(&grid, band)?));
    }
    Ok(AllLevelsResiduals {
        resolution: m,
        fields,
        max_norms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVariance {
    fn of(g: &GridSampling) -> Self {
        Self {
            mean: g.mean(),
            variance: g.variance(),
        }
    }
}

/// Grid statistics of the two quantities that are constant for a genuine
/// all-levels integral in the gauge `a₁ = 0`, `a₀ − a₂ = 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProofConsequenceReport {
    /// `c₀ + (g² − f²)/4`.
    pub k1: MeanVariance,
    /// `f g`.
    pub k2: MeanVariance,
    /// Factor applied to bring `a₀ − a₂` to mean 4.
    pub gauge_scale: f64,
    /// `max |a₁|` plus the spread of `a₀ − a₂`, after rescaling.
    pub gauge_defect: f64,
}

impl ProofConsequenceReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.k1.variance < threshold && self.k2.variance < threshold
    }
}

pub fn proof_consequence_checks(q: &AllLevelsQuadratic, m: usize) -> Result<ProofConsequenceReport> {
    let diff = (&q.a0 - &q.a2).sample(m);
    let mean = diff.mean();
    if mean.abs() < 1e-300 || !mean.is_finite() {
        return Err(Error::InvalidArgument("a0 - a2 has zero mean; gauge cannot be normalized".into()));
    }
    let s = 4.0 / mean;
    let spread = diff.map(|v| s * v - 4.0).max_abs();
    let a1_max = q.a1.sample(m).max_abs() * s.abs();
    let f = q.b0.scaled(0.5 * s).sample(m);
    let g = q.b1.scaled(-0.5 * s).sample(m);
    let c0 = q.c0.scaled(s).sample(m);
    let k2 = f.zip_with(&g, |a, b| a * b);
    let quad = g.zip_with(&f, |gv, fv| 0.25 * (gv * gv - fv * fv));
    let k1 = c0.zip_with(&quad, |a, b| a + b);
    Ok(ProofConsequenceReport {
        k1: MeanVariance::of(&k1),
        k2: MeanVariance::of(&k2),
        gauge_scale: s,
        gauge_defect: spread + a1_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDrift {
    pub energy: f64,
    /// Worst relative drift over the starts.
    pub max_relative_drift: f64,
    pub failed_starts: usize,
}

/// Transports `F₂` along the cotangent flow at each energy, from the
/// angle-form starts lifted to that level.
pub fn energy_drift_table(
    sys: &MagneticSystem,
    q: &AllLevelsQuadratic,
    starts: &[PhasePointAngle],
    energies: &[f64],
    duration: f64,
    settings: &IntegratorSettings,
) -> Result<Vec<EnergyDrift>> {
    let ev = SystemEvaluator::new(sys);
    let qe = q.evaluator();
    let monitors = [Monitor::new("F2", |p: &PhasePointCotangent| qe.eval(p))];
    energies
        .iter()
        .map(|&energy| {
            if !(energy > 0.0) {
                return Err(Error::InvalidArgument(format!("energy must be positive, got {energy}")));
            }
            let lifted = starts
                .iter()
                .map(|s| s.to_cotangent(&ev, energy))
                .collect::<Result<Vec<_>>>()?;
            let runs = integrate_batch(&ev, &lifted, duration, settings, &monitors);
            let mut worst: f64 = 0.0;
            let mut failed = 0;
            for r in runs {
                match r {
                    Ok(tr) => worst = worst.max(conservation_report(&tr).max_relative_drift()),
                    Err(_) => failed += 1,
                }
            }
            Ok(EnergyDrift {
                energy,
                max_relative_drift: worst,
                failed_starts: failed,
            })
        })
        .collect()
}

/// Grid resolution for residual checks on a candidate of this band.
pub fn residual_grid(q: &AllLevelsQuadratic, sys: &MagneticSystem) -> usize {
    let band = q
        .coefficients()
        .iter()
        .map(|(_, f)| f.support_band())
        .chain([sys.lam.support_band(), sys.omega.support_band()])
        .max()
        .unwrap_or(0);
    fast_grid_size((4 * band + 2).max(CANDIDATE_GRID))
}
