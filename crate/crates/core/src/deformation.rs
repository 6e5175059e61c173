//! Taylor-in-t construction of the symmetry flow
//!
//! ```text
//! Λ_t  = (gΛ)_x + (fΛ)_y
//! u0_t = g u0_x + f u0_y - 2 (gΛ)_x + 2 (fΛ)_y
//! f_t  =  2 u0_y
//! g_t  = -2 u0_x
//! ```
//!
//! started from the Liouville state `(Λ₁+Λ₂, 2Λ₂-2Λ₁, 0, 0)`. Its solutions
//! stay solutions of the stationary system checked in [`crate::assembly`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fast_grid_size, Field2, GridSampling};

/// `Σ_j c_j cos(2π j s)` in one variable, evaluated in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineSeries(pub Vec<f64>);

impl CosineSeries {
    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// `order`-th derivative at `s`.
    pub fn derivative(&self, s: f64, order: u32) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        self.0
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let w = tau * j as f64;
                // d^k/ds^k cos(w s) = w^k cos(w s + kπ/2)
                c * w.powi(order as i32)
                    * (w * s + order as f64 * std::f64::consts::FRAC_PI_2).cos()
            })
            .sum()
    }

    pub fn value(&self, s: f64) -> f64 {
        self.derivative(s, 0)
    }

    /// Minimum over a dense uniform sample of one period.
    pub fn sampled_min(&self) -> f64 {
        let n = 256 * (self.degree() + 1);
        (0..n)
            .map(|i| self.value(i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().skip(1).all(|&c| c == 0.0)
    }
}

/// The two profiles of a Liouville metric `(Λ₁(x) + Λ₂(y))(dx² + dy²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleData {
    pub lam1: CosineSeries,
    pub lam2: CosineSeries,
}

impl LiouvilleData {
    pub fn new(lam1: Vec<f64>, lam2: Vec<f64>) -> Result<Self> {
        let data = Self {
            lam1: CosineSeries(lam1),
            lam2: CosineSeries(lam2),
        };
        data.validate()?;
        Ok(data)
    }

    /// `Λ₁ = 1 + 0.1 cos 2πx`, `Λ₂ = 1 + 0.1 cos 2πy`.
    pub fn default_preset() -> Self {
        Self {
            lam1: CosineSeries(vec![1.0, 0.1]),
            lam2: CosineSeries(vec![1.0, 0.1]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("lam1", &self.lam1), ("lam2", &self.lam2)] {
            if s.0.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} has no coefficients")));
            }
            if s.0.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} has non-finite coefficients")));
            }
            let min = s.sampled_min();
            if min <= 0.0 {
                let n = 256 * (s.degree() + 1);
                let at = (0..n)
                    .map(|i| i as f64 / n as f64)
                    .min_by(|a, b| s.value(*a).total_cmp(&s.value(*b)))
                    .unwrap_or(0.0);
                let (x, y) = if name == "lam1" { (at, 0.0) } else { (0.0, at) };
                return Err(Error::PositivityViolation { x, y, value: min });
            }
        }
        Ok(())
    }

    pub fn band(&self) -> usize {
        self.lam1.degree().max(self.lam2.degree())
    }

    /// Both profiles constant: the flow is stationary and the metric flat.
    pub fn is_flat(&self) -> bool {
        self.lam1.is_constant() && self.lam2.is_constant()
    }

    /// Λ = Λ₁ + Λ₂ at a point.
    pub fn lam(&self, x: f64, y: f64) -> f64 {
        self.lam1.value(x) + self.lam2.value(y)
    }
}

/// `U = (Λ, u₀, f, g)` on a common band limit.
#[derive(Debug, Clone, PartialEq)]
pub struct StateU {
    pub lam: Field2,
    pub u0: Field2,
    pub f: Field2,
    pub g: Field2,
}

impl StateU {
    pub fn zeros(band: usize) -> Self {
        Self {
            lam: Field2::zeros(band),
            u0: Field2::zeros(band),
            f: Field2::zeros(band),
            g: Field2::zeros(band),
        }
    }

    pub fn constant(lam: f64, u0: f64, f: f64, g: f64, band: usize) -> Self {
        Self {
            lam: Field2::constant(lam, band),
            u0: Field2::constant(u0, band),
            f: Field2::constant(f, band),
            g: Field2::constant(g, band),
        }
    }

    pub fn components(&self) -> [&Field2; 4] {
        [&self.lam, &self.u0, &self.f, &self.g]
    }

    pub fn band_limit(&self) -> usize {
        self.components().iter().map(|c| c.band_limit()).max().unwrap_or(0)
    }

    pub fn support_band(&self) -> usize {
        self.components().iter().map(|c| c.support_band()).max().unwrap_or(0)
    }

    pub fn map(&self, op: impl Fn(&Field2) -> Field2) -> Self {
        Self {
            lam: op(&self.lam),
            u0: op(&self.u0),
            f: op(&self.f),
            g: op(&self.g),
        }
    }

    /// Componentwise `Σ s_i U_i`.
    pub fn linear_combine(terms: &[(f64, &StateU)]) -> Self {
        let pick = |sel: fn(&StateU) -> &Field2| {
            let t: Vec<_> = terms.iter().map(|(s, u)| (*s, sel(u))).collect();
            Field2::linear_combine(&t)
        };
        Self {
            lam: pick(|u| &u.lam),
            u0: pick(|u| &u.u0),
            f: pick(|u| &u.f),
            g: pick(|u| &u.g),
        }
    }

    /// Largest max-norm of the four components on an `M × M` grid.
    pub fn max_norm(&self, resolution: usize) -> f64 {
        self.components()
            .iter()
            .map(|c| c.max_norm(resolution))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| c.max_abs_coeff())
            .fold(0.0, f64::max)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        self.map(|c| c.translated(dx, dy))
    }
}

/// `(Λ₁+Λ₂, 2Λ₂−2Λ₁, 0, 0)` at band limit `n_work`.
pub fn liouville_initial_state(data: &LiouvilleData, n_work: usize) -> Result<StateU> {
    data.validate()?;
    if data.band() > n_work {
        return Err(Error::InvalidArgument(format!(
            "Liouville profiles of degree {} exceed working band limit {n_work}",
            data.band()
        )));
    }
    let l1 = Field2::cosine_series_x(data.lam1.coeffs(), n_work)?;
    let l2 = Field2::cosine_series_y(data.lam2.coeffs(), n_work)?;
    Ok(StateU {
        lam: &l1 + &l2,
        u0: Field2::linear_combine(&[(2.0, &l2), (-2.0, &l1)]),
        f: Field2::zeros(n_work),
        g: Field2::zeros(n_work),
    })
}

/// Right-hand side `A₁(U)U_x + B₁(U)U_y` with exact (untruncated) products.
pub fn symmetry_rhs(u: &StateU) -> StateU {
    let gl = u.g.mul(&u.lam);
    let fl = u.f.mul(&u.lam);
    let (glx, fly) = (gl.dx(), fl.dy());
    let advect = &u.g.mul(&u.u0.dx()) + &u.f.mul(&u.u0.dy());
    StateU {
        lam: &glx + &fly,
        u0: Field2::linear_combine(&[(1.0, &advect), (-2.0, &glx), (2.0, &fly)]),
        f: u.u0.dy().scaled(2.0),
        g: u.u0.dx().scaled(-2.0),
    }
}

/// Taylor coefficients `U_0 … U_K` of the symmetry flow.
#[derive(Debug, Clone, PartialEq)]
pub struct StateJet {
    pub order: usize,
    pub band_limit: usize,
    pub coeffs: Vec<StateU>,
    /// Accumulated L² mass cut off by truncation back to `band_limit`.
    pub discarded_mass: f64,
}

/// Grid values of one Taylor coefficient needed by later orders.
struct OrderGrids {
    lam: GridSampling,
    f: GridSampling,
    g: GridSampling,
    u0x: GridSampling,
    u0y: GridSampling,
}

impl OrderGrids {
    fn new(u: &StateU, m: usize) -> Self {
        Self {
            lam: u.lam.sample(m),
            f: u.f.sample(m),
            g: u.g.sample(m),
            u0x: u.u0.dx().sample(m),
            u0y: u.u0.dy().sample(m),
        }
    }
}

/// `Σ_{i+j=k} a_i b_j` on the grid.
fn cauchy_product(
    grids: &[OrderGrids],
    k: usize,
    a: fn(&OrderGrids) -> &GridSampling,
    b: fn(&OrderGrids) -> &GridSampling,
) -> Vec<f64> {
    let len = a(&grids[0]).values().len();
    let mut acc = vec![0.0; len];
    for i in 0..=k {
        let (ai, bj) = (a(&grids[i]).values(), b(&grids[k - i]).values());
        for ((s, x), y) in acc.iter_mut().zip(ai).zip(bj) {
            *s += x * y;
        }
    }
    acc
}

/// Builds the order-`order` jet from `u0`.
///
/// Each order solves `(k+1) U_{k+1} = [RHS(U)]_k`, where the bracket is the
/// `t^k` coefficient of the bilinear right-hand side. Products are formed
/// on a grid of at least `4N+1` points per axis, which keeps every mode up to
/// `2N` alias free, so the mass cut by truncating back to `N` is measured
/// exactly. A coefficient that is zero by the support bound (`U_k` can only
/// occupy modes reachable from the initial band) is stored as an exact zero.
pub fn ck_jet(u0: &StateU, order: usize) -> Result<StateJet> {
    if order < 1 {
        return Err(Error::InvalidArgument("jet order must be at least 1".into()));
    }
    let band = u0.band_limit();
    if u0.components().iter().any(|c| c.band_limit() != band) {
        return Err(Error::InvalidArgument(
            "all components of the initial state must share one band limit".into(),
        ));
    }
    let m = fast_grid_size(4 * band + 1);
    let mut coeffs = vec![u0.clone()];
    let mut supports = vec![u0.support_band()];
    let mut grids = vec![OrderGrids::new(u0, m)];
    let mut discarded_sq = 0.0;

    for k in 0..order {
        let reach = (0..=k)
            .map(|i| supports[i] + supports[k - i])
            .max()
            .unwrap_or(0)
            .max(supports[k]);
        let keep = reach.min(band);

        let mut transform = |vals: Vec<f64>| -> Result<Field2> {
            let mut full = Field2::from_grid(&GridSampling::new(m, vals)?, 2 * band)?;
            // modes past the reachable support hold only rounding noise
            full.zero_outside(reach);
            let (cut, lost) = full.resized(band);
            discarded_sq += lost * lost;
            Ok(cut)
        };
        let gl = transform(cauchy_product(&grids, k, |o| &o.g, |o| &o.lam))?;
        let fl = transform(cauchy_product(&grids, k, |o| &o.f, |o| &o.lam))?;
        let gux = transform(cauchy_product(&grids, k, |o| &o.g, |o| &o.u0x))?;
        let fuy = transform(cauchy_product(&grids, k, |o| &o.f, |o| &o.u0y))?;

        let inv = 1.0 / (k + 1) as f64;
        let (glx, fly) = (gl.dx(), fl.dy());
        let prev_u0 = &coeffs[k].u0;
        let next = StateU {
            lam: Field2::linear_combine(&[(inv, &glx), (inv, &fly)]),
            u0: Field2::linear_combine(&[
                (inv, &gux),
                (inv, &fuy),
                (-2.0 * inv, &glx),
                (2.0 * inv, &fly),
            ]),
            f: prev_u0.dy().scaled(2.0 * inv),
            g: prev_u0.dx().scaled(-2.0 * inv),
        };
        grids.push(OrderGrids::new(&next, m));
        supports.push(keep);
        coeffs.push(next);
    }

    Ok(StateJet {
        order,
        band_limit: band,
        coeffs,
        discarded_mass: discarded_sq.sqrt(),
    })
}

impl StateJet {
    /// Horner summation `Σ U_k t^k` with no positivity check.
    pub fn sum_at(&self, t: f64) -> StateU {
        let mut acc = self.coeffs[self.order].clone();
        for k in (0..self.order).rev() {
            acc = StateU::linear_combine(&[(t, &acc), (1.0, &self.coeffs[k])]);
        }
        acc
    }

    /// `d/dt Σ U_k t^k`, exact for the polynomial.
    pub fn time_derivative_at(&self, t: f64) -> StateU {
        let mut acc = self.coeffs[self.order].map(|c| c.scaled(self.order as f64));
        for k in (1..self.order).rev() {
            let term = self.coeffs[k].map(|c| c.scaled(k as f64));
            acc = StateU::linear_combine(&[(t, &acc), (1.0, &term)]);
        }
        acc
    }

    /// Max norm of each coefficient over a grid that resolves its support.
    pub fn coefficient_norms(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|u| u.max_norm(fast_grid_size(2 * u.support_band() + 2)))
            .collect()
    }

    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order < 1 || order > self.order {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a jet of order {} to order {order}",
                self.order
            )));
        }
        Ok(Self {
            order,
            band_limit: self.band_limit,
            coeffs: self.coeffs[..=order].to_vec(),
            discarded_mass: self.discarded_mass,
        })
    }
}

fn positivity_grid(jet: &StateJet) -> usize {
    fast_grid_size((2 * jet.band_limit + 2).max(64))
}

/// Evaluates the jet at `t` and checks that `Λ(·, t)` stays positive.
pub fn evaluate_jet(jet: &StateJet, t: f64) -> Result<StateU> {
    let u = jet.sum_at(t);
    let (min, x, y) = u.lam.sample(positivity_grid(jet)).min_with_point();
    if min <= 0.0 || min.is_nan() {
        return Err(Error::PositivityViolation { x, y, value: min });
    }
    Ok(u)
}

/// Acceptance policy for the deformation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustPolicy {
    /// Largest admissible max-norm of the last retained term `U_K t^K`.
    pub tail_tol: f64,
    /// `Λ(·, t)` must stay above this fraction of `min Λ(·, 0)`.
    pub min_lam_fraction: f64,
}

impl Default for TrustPolicy {
    fn default() -> Self {
        Self {
            tail_tol: 1e-9,
            min_lam_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustAssessment {
    pub t: f64,
    pub tail: f64,
    pub lam_min: f64,
    pub lam_floor: f64,
    pub suggested_max_t: f64,
}

impl TrustPolicy {
    /// Largest `t` passing both tests, found by bisection on the
    /// positivity margin below the tail bound.
    pub fn suggested_max_t(&self, jet: &StateJet) -> f64 {
        let norms = jet.coefficient_norms();
        let last = norms[jet.order];
        let mut hi = if last == 0.0 {
            1.0
        } else {
            (self.tail_tol / last).powf(1.0 / jet.order as f64)
        };
        let m = positivity_grid(jet);
        let floor = self.min_lam_fraction * jet.coeffs[0].lam.sample(m).min_with_point().0;
        let ok = |t: f64| jet.sum_at(t).lam.sample(m).min_with_point().0 >= floor;
        if ok(hi) {
            return hi;
        }
        let mut lo = 0.0;
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn assess(&self, jet: &StateJet, t: f64) -> Result<TrustAssessment> {
        let norms = jet.coefficient_norms();
        let tail = norms[jet.order] * t.abs().powi(jet.order as i32);
        let m = positivity_grid(jet);
        let lam0_min = jet.coeffs[0].lam.sample(m).min_with_point().0;
        let lam_floor = self.min_lam_fraction * lam0_min;
        let lam_min = jet.sum_at(t).lam.sample(m).min_with_point().0;
        let reason = if tail >= self.tail_tol && tail > 0.0 {
            Some(format!("last term {tail:.3e} exceeds {:.1e}", self.tail_tol))
        } else if lam_min < lam_floor {
            Some(format!("min Λ = {lam_min:.4e} fell below {lam_floor:.4e}"))
        } else {
            None
        };
        let suggested_max_t = self.suggested_max_t(jet);
        match reason {
            Some(reason) => Err(Error::TrustRadiusExceeded {
                t,
                reason,
                suggested_max_t,
            }),
            None => Ok(TrustAssessment {
                t,
                tail,
                lam_min,
                lam_floor,
                suggested_max_t,
            }),
        }
    }
}

/// Per-order magnitudes of the jet at a given `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetConvergenceReport {
    pub t: f64,
    /// `‖U_k‖` (max over components of the grid max-norm).
    pub coefficient_norms: Vec<f64>,
    /// `‖U_k‖ t^k`.
    pub terms: Vec<f64>,
    /// `sqrt(‖U_{K-2}‖ / ‖U_K‖)`; two-step ratio so that even/odd orders
    /// of different size do not bias it. `None` when undefined.
    pub radius_estimate: Option<f64>,
    pub tail: f64,
    pub discarded_mass: f64,
}

pub fn jet_convergence_report(jet: &StateJet, t: f64) -> JetConvergenceReport {
    let norms = jet.coefficient_norms();
    let terms: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(k, n)| n * t.abs().powi(k as i32))
        .collect();
    let k = jet.order;
    let radius_estimate = if k >= 2 && norms[k] > 0.0 && norms[k - 2] > 0.0 {
        Some((norms[k - 2] / norms[k]).sqrt())
    } else {
        None
    };
    JetConvergenceReport {
        t,
        tail: terms[k],
        coefficient_norms: norms,
        terms,
        radius_estimate,
        discarded_mass: jet.discarded_mass,
    }
}
