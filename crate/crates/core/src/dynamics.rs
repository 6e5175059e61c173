//! Magnetic geodesic flow of `H = |p|²/(2Λ)` with the twisted bracket
//! `{p₁, p₂} = Ω`.
//!
//! Two formulations are integrated:
//!
//! * angle form on the unit-speed level `{H = 1/2}`, state `(x, y, φ)` with
//!   `p = √Λ (cos φ, sin φ)`;
//! * cotangent form on any level, state `(x, y, p₁, p₂)`.
//!
//! Positions are stored reduced to `[0, 1)` with integer winding numbers
//! kept beside them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::MagneticSystem;
use crate::error::{Error, Result};
use crate::field::PointEvaluator;
use crate::integrator::{self, IntegratorSettings, OdeState};

/// Point evaluation of `Λ`, `∇Λ` and `Ω` by direct spectral summation.
#[derive(Debug, Clone)]
pub struct SystemEvaluator {
    lam: PointEvaluator,
    omega: PointEvaluator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGeometry {
    pub lam: f64,
    pub lam_x: f64,
    pub lam_y: f64,
    pub omega: f64,
}

impl SystemEvaluator {
    pub fn new(sys: &MagneticSystem) -> Self {
        Self {
            lam: PointEvaluator::new(&sys.lam),
            omega: PointEvaluator::new(&sys.omega),
        }
    }

    pub fn at(&self, x: f64, y: f64) -> Result<LocalGeometry> {
        let (lam, lam_x, lam_y) = self.lam.value_and_gradient(x, y);
        if !(lam > 0.0) {
            return Err(Error::PositivityViolation { x, y, value: lam });
        }
        Ok(LocalGeometry {
            lam,
            lam_x,
            lam_y,
            omega: self.omega.value(x, y),
        })
    }

    pub fn lam(&self, x: f64, y: f64) -> f64 {
        self.lam.value(x, y)
    }

    pub fn hamiltonian(&self, p: &PhasePointCotangent) -> Result<f64> {
        let g = self.at(p.x, p.y)?;
        Ok(0.5 * (p.p1 * p.p1 + p.p2 * p.p2) / g.lam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePointAngle {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePointCotangent {
    pub x: f64,
    pub y: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PhasePointAngle {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self { x, y, phi }
    }

    /// Momentum lift onto the level `{H = energy}`.
    pub fn to_cotangent(&self, sys: &SystemEvaluator, energy: f64) -> Result<PhasePointCotangent> {
        let lam = sys.at(self.x, self.y)?.lam;
        let r = (2.0 * energy * lam).sqrt();
        Ok(PhasePointCotangent {
            x: self.x,
            y: self.y,
            p1: r * self.phi.cos(),
            p2: r * self.phi.sin(),
        })
    }
}

impl PhasePointCotangent {
    pub fn new(x: f64, y: f64, p1: f64, p2: f64) -> Self {
        Self { x, y, p1, p2 }
    }

    pub fn to_angle(&self) -> PhasePointAngle {
        PhasePointAngle {
            x: self.x,
            y: self.y,
            phi: self.p2.atan2(self.p1),
        }
    }
}

/// `(ẋ, ẏ, φ̇)` of the unit-speed flow.
pub fn angle_flow_rhs(sys: &SystemEvaluator, p: &PhasePointAngle) -> Result<[f64; 3]> {
    let g = sys.at(p.x, p.y)?;
    let (s, c) = p.phi.sin_cos();
    let root = g.lam.sqrt();
    Ok([
        c / root,
        s / root,
        (g.lam_y * c - g.lam_x * s) / (2.0 * g.lam * root) - g.omega / g.lam,
    ])
}

/// `(ẋ, ẏ, ṗ₁, ṗ₂)` of Hamilton's equations with the twisted bracket.
pub fn hamiltonian_flow_rhs(sys: &SystemEvaluator, p: &PhasePointCotangent) -> Result<[f64; 4]> {
    let g = sys.at(p.x, p.y)?;
    let r2 = p.p1 * p.p1 + p.p2 * p.p2;
    let lam2 = g.lam * g.lam;
    let h_x = -r2 * g.lam_x / (2.0 * lam2);
    let h_y = -r2 * g.lam_y / (2.0 * lam2);
    Ok([
        p.p1 / g.lam,
        p.p2 / g.lam,
        -h_x + g.omega * p.p2 / g.lam,
        -h_y - g.omega * p.p1 / g.lam,
    ])
}

/// State of one of the two flow formulations.
pub trait PhasePoint: Copy + std::fmt::Debug + Send + Sync {
    type Repr: OdeState + Send + Sync;
    const COLUMNS: &'static [&'static str];

    fn to_repr(&self) -> Self::Repr;
    fn from_repr(r: &Self::Repr) -> Self;
    fn velocity(&self, sys: &SystemEvaluator) -> Result<Self::Repr>;
    fn position(&self) -> (f64, f64);
    fn with_position(&self, x: f64, y: f64) -> Self;
}

impl PhasePoint for PhasePointAngle {
    type Repr = [f64; 3];
    const COLUMNS: &'static [&'static str] = &["x", "y", "phi"];

    fn to_repr(&self) -> [f64; 3] {
        [self.x, self.y, self.phi]
    }
    fn from_repr(r: &[f64; 3]) -> Self {
        Self::new(r[0], r[1], r[2])
    }
    fn velocity(&self, sys: &SystemEvaluator) -> Result<[f64; 3]> {
        angle_flow_rhs(sys, self)
    }
    fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
    fn with_position(&self, x: f64, y: f64) -> Self {
        Self { x, y, ..*self }
    }
}

impl PhasePoint for PhasePointCotangent {
    type Repr = [f64; 4];
    const COLUMNS: &'static [&'static str] = &["x", "y", "p1", "p2"];

    fn to_repr(&self) -> [f64; 4] {
        [self.x, self.y, self.p1, self.p2]
    }
    fn from_repr(r: &[f64; 4]) -> Self {
        Self::new(r[0], r[1], r[2], r[3])
    }
    fn velocity(&self, sys: &SystemEvaluator) -> Result<[f64; 4]> {
        hamiltonian_flow_rhs(sys, self)
    }
    fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
    fn with_position(&self, x: f64, y: f64) -> Self {
        Self { x, y, ..*self }
    }
}

/// Named scalar function of the phase point, evaluated on unfolded states.
pub struct Monitor<'a, P> {
    pub name: String,
    eval: Box<dyn Fn(&P) -> f64 + Send + Sync + 'a>,
}

impl<'a, P> Monitor<'a, P> {
    pub fn new(name: impl Into<String>, eval: impl Fn(&P) -> f64 + Send + Sync + 'a) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(eval),
        }
    }

    pub fn eval(&self, p: &P) -> f64 {
        (self.eval)(p)
    }
}

impl<P> std::fmt::Debug for Monitor<'_, P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor").field("name", &self.name).finish()
    }
}

/// `H = |p|²/(2Λ)` on cotangent states.
pub fn energy_monitor<'a>(sys: &'a SystemEvaluator) -> Monitor<'a, PhasePointCotangent> {
    Monitor::new("H", move |p: &PhasePointCotangent| {
        sys.hamiltonian(p).unwrap_or(f64::NAN)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<P> {
    pub times: Vec<f64>,
    /// States with positions reduced to `[0, 1)`.
    pub states: Vec<P>,
    pub windings: Vec<[i64; 2]>,
    /// Monitor values at each recorded time, in monitor order.
    pub invariant_samples: Vec<(String, Vec<f64>)>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub richardson_error: Option<f64>,
}

impl<P: PhasePoint> Trajectory<P> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State `i` on the universal cover.
    pub fn unfolded(&self, i: usize) -> P {
        let (x, y) = self.states[i].position();
        let [wx, wy] = self.windings[i];
        self.states[i].with_position(x + wx as f64, y + wy as f64)
    }

    pub fn last_unfolded(&self) -> P {
        self.unfolded(self.len() - 1)
    }

    /// CSV with columns `t`, the state columns, then one per monitor.
    pub fn to_csv(&self, unfold: bool) -> String {
        let mut out = String::from("t");
        for c in P::COLUMNS {
            out.push(',');
            out.push_str(c);
        }
        for (name, _) in &self.invariant_samples {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.len() {
            let state = if unfold { self.unfolded(i) } else { self.states[i] };
            out.push_str(&format!("{:.16e}", self.times[i]));
            for v in state.to_repr().as_ref() {
                out.push_str(&format!(",{v:.16e}"));
            }
            for (_, vals) in &self.invariant_samples {
                out.push_str(&format!(",{:.16e}", vals[i]));
            }
            out.push('\n');
        }
        out
    }
}

fn reduce(v: f64) -> (f64, i64) {
    let w = v.floor();
    let r = v - w;
    // v slightly below an integer can round to exactly 1.0
    if r >= 1.0 {
        (0.0, w as i64 + 1)
    } else {
        (r, w as i64)
    }
}

/// Integrates either formulation over `[0, duration]`, sampling `monitors`
/// at every recorded time.
pub fn integrate<P: PhasePoint>(
    sys: &SystemEvaluator,
    start: P,
    duration: f64,
    settings: &IntegratorSettings,
    monitors: &[Monitor<'_, P>],
) -> Result<Trajectory<P>> {
    let sol = integrator::solve(
        |r: &P::Repr| P::from_repr(r).velocity(sys),
        start.to_repr(),
        duration,
        settings,
    )?;
    let mut states = Vec::with_capacity(sol.states.len());
    let mut windings = Vec::with_capacity(sol.states.len());
    let mut samples: Vec<(String, Vec<f64>)> = monitors
        .iter()
        .map(|m| (m.name.clone(), Vec::with_capacity(sol.states.len())))
        .collect();
    for r in &sol.states {
        let p = P::from_repr(r);
        for (m, (_, vals)) in monitors.iter().zip(samples.iter_mut()) {
            vals.push(m.eval(&p));
        }
        let (x, y) = p.position();
        let (xr, wx) = reduce(x);
        let (yr, wy) = reduce(y);
        states.push(p.with_position(xr, yr));
        windings.push([wx, wy]);
    }
    Ok(Trajectory {
        times: sol.times,
        states,
        windings,
        invariant_samples: samples,
        accepted_steps: sol.accepted,
        rejected_steps: sol.rejected,
        richardson_error: sol.richardson_error,
    })
}

/// Integrates independent starts in parallel. A failing start does not
/// stop the others.
pub fn integrate_batch<P: PhasePoint>(
    sys: &SystemEvaluator,
    starts: &[P],
    duration: f64,
    settings: &IntegratorSettings,
    monitors: &[Monitor<'_, P>],
) -> Vec<Result<Trajectory<P>>> {
    starts
        .par_iter()
        .map(|s| integrate(sys, *s, duration, settings, monitors))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub name: String,
    pub initial: f64,
    pub max_abs_drift: f64,
    /// `max |F(t) − F(0)| / max(1, |F(0)|)`.
    pub relative_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub monitors: Vec<DriftStats>,
}

impl ConservationReport {
    pub fn get(&self, name: &str) -> Option<&DriftStats> {
        self.monitors.iter().find(|d| d.name == name)
    }

    pub fn max_relative_drift(&self) -> f64 {
        self.monitors.iter().map(|d| d.relative_drift).fold(0.0, f64::max)
    }
}

pub fn conservation_report<P>(traj: &Trajectory<P>) -> ConservationReport {
    let monitors = traj
        .invariant_samples
        .iter()
        .map(|(name, vals)| {
            let initial = vals.first().copied().unwrap_or(f64::NAN);
            let max_abs_drift = vals.iter().map(|v| (v - initial).abs()).fold(0.0, f64::max);
            DriftStats {
                name: name.clone(),
                initial,
                max_abs_drift,
                relative_drift: max_abs_drift / initial.abs().max(1.0),
            }
        })
        .collect();
    ConservationReport { monitors }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSlope {
    pub name: String,
    pub tol_coarse: f64,
    pub tol_fine: f64,
    pub drift_coarse: f64,
    pub drift_fine: f64,
    /// `Δ log(drift) / Δ log(tol)`.
    pub slope: f64,
}

/// Runs the same start at two tolerances and reports how each monitor's
/// drift scales.
pub fn drift_tolerance_slope<P: PhasePoint>(
    sys: &SystemEvaluator,
    start: P,
    duration: f64,
    settings: &IntegratorSettings,
    tol_fine: f64,
    monitors: &[Monitor<'_, P>],
) -> Result<Vec<ToleranceSlope>> {
    let coarse = conservation_report(&integrate(sys, start, duration, settings, monitors)?);
    let fine_settings = settings.with_tol(tol_fine);
    let fine = conservation_report(&integrate(sys, start, duration, &fine_settings, monitors)?);
    Ok(coarse
        .monitors
        .iter()
        .zip(&fine.monitors)
        .map(|(c, f)| ToleranceSlope {
            name: c.name.clone(),
            tol_coarse: settings.tol,
            tol_fine,
            drift_coarse: c.max_abs_drift,
            drift_fine: f.max_abs_drift,
            slope: (c.max_abs_drift / f.max_abs_drift).ln() / (settings.tol / tol_fine).ln(),
        })
        .collect())
}

/// Integrates both formulations from matched starts on `{H = 1/2}` and
/// returns the largest position deviation at the common sample times.
pub fn cross_check(
    sys: &SystemEvaluator,
    start: PhasePointAngle,
    duration: f64,
    settings: &IntegratorSettings,
) -> Result<f64> {
    let mut s = *settings;
    if s.sample_interval.is_none() {
        s.sample_interval = Some((duration / 200.0).max(1e-3));
    }
    let a = integrate(sys, start, duration, &s, &[])?;
    let c = integrate(sys, start.to_cotangent(sys, 0.5)?, duration, &s, &[])?;
    if a.len() != c.len() {
        return Err(Error::InvalidArgument(format!(
            "sample counts differ: {} vs {}",
            a.len(),
            c.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        let (xa, ya) = a.unfolded(i).position();
        let (xc, yc) = c.unfolded(i).position();
        worst = worst.max((xa - xc).abs()).max((ya - yc).abs());
    }
    Ok(worst)
}

/// `nx × nphi` lattice of angle-form starts on the slice `y = y0`, each
/// jittered uniformly by up to `jitter` cells in `x` and `φ`.
pub fn start_lattice(nx: usize, nphi: usize, y0: f64, jitter: f64, seed: u64) -> Vec<PhasePointAngle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(nx * nphi);
    for i in 0..nx {
        for j in 0..nphi {
            let jx: f64 = if jitter > 0.0 { rng.gen_range(-jitter..jitter) } else { 0.0 };
            let jp: f64 = if jitter > 0.0 { rng.gen_range(-jitter..jitter) } else { 0.0 };
            let x = ((i as f64 + 0.5 + jx) / nx as f64).rem_euclid(1.0);
            let phi = 2.0 * PI * (j as f64 + 0.5 + jp) / nphi as f64;
            out.push(PhasePointAngle::new(x, y0, phi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_integral, liouville_reference_integral};
    use crate::deformation::{ck_jet, evaluate_jet, liouville_initial_state, LiouvilleData};
    use crate::field::Field2;
    use approx::assert_abs_diff_eq;

    fn circle_system(c: f64) -> SystemEvaluator {
        SystemEvaluator::new(&MagneticSystem::new(Field2::constant(1.0, 0), Field2::constant(c, 0)).unwrap())
    }

    fn liouville() -> (LiouvilleData, MagneticSystem) {
        let data = LiouvilleData::default_preset();
        let u = liouville_initial_state(&data, 16).unwrap();
        (data, MagneticSystem::from_state(&u).unwrap())
    }

    fn deformed(t: f64, k: usize) -> (crate::deformation::StateU, MagneticSystem) {
        let data = LiouvilleData::default_preset();
        let u0 = liouville_initial_state(&data, 32).unwrap();
        let jet = ck_jet(&u0, k).unwrap();
        let u = evaluate_jet(&jet, t).unwrap();
        let sys = MagneticSystem::from_state(&u).unwrap();
        (u, sys)
    }

    #[test]
    fn flat_rhs_is_straight_line() {
        let sys = SystemEvaluator::new(&MagneticSystem::flat());
        let v = angle_flow_rhs(&sys, &PhasePointAngle::new(0.3, 0.1, 0.7)).unwrap();
        assert_abs_diff_eq!(v[0], 0.7f64.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.7f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 0.0);
    }

    #[test]
    fn constant_field_rotates_momentum() {
        let sys = circle_system(1.5);
        let v = angle_flow_rhs(&sys, &PhasePointAngle::new(0.3, 0.1, 0.7)).unwrap();
        assert_abs_diff_eq!(v[2], -1.5, epsilon = 1e-15);
        let w = hamiltonian_flow_rhs(&sys, &PhasePointCotangent::new(0.2, 0.4, 0.6, -0.8)).unwrap();
        assert_abs_diff_eq!(w[2], 1.5 * -0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(w[3], -1.5 * 0.6, epsilon = 1e-15);
    }

    #[test]
    fn liouville_symmetry_line_has_no_turning() {
        // Λ₂ = 1 + 0.1 cos 2πy has Λ_y = 0 at y = 0
        let (_, sys) = liouville();
        let sys = SystemEvaluator::new(&sys);
        let v = angle_flow_rhs(&sys, &PhasePointAngle::new(0.37, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn flat_flow_is_exact_line() {
        let sys = SystemEvaluator::new(&MagneticSystem::flat());
        let start = PhasePointAngle::new(0.1, 0.2, 0.9);
        let tr = integrate(&sys, start, 10.0, &IntegratorSettings::adaptive(1e-10), &[]).unwrap();
        let end = tr.last_unfolded();
        assert_abs_diff_eq!(end.x, 0.1 + 10.0 * 0.9f64.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, 0.2 + 10.0 * 0.9f64.sin(), epsilon = 1e-9);
        assert_eq!(tr.windings.last().unwrap(), &[6, 8]);
        for s in &tr.states {
            assert!((0.0..1.0).contains(&s.x) && (0.0..1.0).contains(&s.y));
        }
    }

    #[test]
    fn circle_closes_after_one_period() {
        let c = 1.0;
        let sys = circle_system(c);
        let start = PhasePointAngle::new(0.25, 0.5, 0.3);
        let s = IntegratorSettings::adaptive(1e-11);
        let tr = integrate(&sys, start, 2.0 * PI / c, &s, &[]).unwrap();
        let end = tr.last_unfolded();
        assert!((end.x - start.x).abs() < 1e-7 && (end.y - start.y).abs() < 1e-7, "{end:?}");
        // radius 1/|c|: the centre sits at distance 1 to the right of the heading
        let half = integrate(&sys, start, PI / c, &s, &[]).unwrap().last_unfolded();
        let d = ((half.x - start.x).powi(2) + (half.y - start.y).powi(2)).sqrt();
        assert_abs_diff_eq!(d, 2.0 / c, epsilon = 1e-8);
    }

    #[test]
    fn energy_conserved_along_cotangent_flow() {
        let (_, sys) = deformed(0.01, 8);
        let ev = SystemEvaluator::new(&sys);
        let start = PhasePointAngle::new(0.2, 0.37, 1.1).to_cotangent(&ev, 0.5).unwrap();
        let tr = integrate(&ev, start, 10.0, &IntegratorSettings::adaptive(1e-10), &[energy_monitor(&ev)]).unwrap();
        let rep = conservation_report(&tr);
        assert_abs_diff_eq!(rep.get("H").unwrap().initial, 0.5, epsilon = 1e-14);
        assert!(rep.get("H").unwrap().relative_drift < 1e-9, "{rep:?}");
    }

    #[test]
    fn energy_derivative_vanishes_pointwise() {
        let (_, sys) = deformed(0.01, 6);
        let ev = SystemEvaluator::new(&sys);
        let p = PhasePointCotangent::new(0.31, 0.77, 0.9, -0.4);
        let v = hamiltonian_flow_rhs(&ev, &p).unwrap();
        let h = 1e-5;
        let shift = |s: f64| {
            let q = PhasePointCotangent::new(p.x + s * v[0], p.y + s * v[1], p.p1 + s * v[2], p.p2 + s * v[3]);
            ev.hamiltonian(&q).unwrap()
        };
        let dh = (shift(h) - shift(-h)) / (2.0 * h);
        assert!(dh.abs() < 1e-10, "{dh:e}");
    }

    #[test]
    fn time_reversal_with_flipped_field() {
        let (u, sys) = deformed(0.01, 8);
        let fwd = SystemEvaluator::new(&sys);
        let bwd = SystemEvaluator::new(&MagneticSystem::new(u.lam.clone(), -&sys.omega).unwrap());
        let start = PhasePointAngle::new(0.6, 0.37, 2.0);
        let s = IntegratorSettings::adaptive(1e-11);
        let end = integrate(&fwd, start, 5.0, &s, &[]).unwrap().last_unfolded();
        let back = PhasePointAngle::new(end.x, end.y, end.phi + PI);
        let ret = integrate(&bwd, back, 5.0, &s, &[]).unwrap().last_unfolded();
        assert!((ret.x - start.x).abs() < 1e-8 && (ret.y - start.y).abs() < 1e-8, "{ret:?}");
        let dphi = (ret.phi - PI - start.phi).rem_euclid(2.0 * PI);
        assert!(dphi.min(2.0 * PI - dphi) < 1e-8);
    }

    #[test]
    fn liouville_integral_is_transported() {
        let (data, sys) = liouville();
        let u = liouville_initial_state(&data, 16).unwrap();
        let q = assemble_integral(&u).unwrap().evaluator();
        let ev = SystemEvaluator::new(&sys);
        let tr = integrate(
            &ev,
            PhasePointAngle::new(0.13, 0.37, 0.4),
            10.0,
            &IntegratorSettings::adaptive(1e-11).sampled_every(0.5),
            &[Monitor::new("F", |p: &PhasePointAngle| q.on_level(p.x, p.y, p.phi))],
        )
        .unwrap();
        let f = &tr.invariant_samples[0].1;
        for (i, v) in f.iter().enumerate() {
            let p = tr.unfolded(i);
            assert_abs_diff_eq!(*v, 4.0 * liouville_reference_integral(&data, p.x, p.y, p.phi), epsilon = 1e-12);
        }
        assert!(conservation_report(&tr).max_relative_drift() < 1e-9);
    }

    #[test]
    fn cross_check_formulations() {
        let flat = SystemEvaluator::new(&MagneticSystem::flat());
        let s = IntegratorSettings::adaptive(1e-11);
        assert!(cross_check(&flat, PhasePointAngle::new(0.1, 0.2, 0.3), 10.0, &s).unwrap() < 1e-10);
        let (_, sys) = deformed(0.01, 8);
        let ev = SystemEvaluator::new(&sys);
        let d = cross_check(&ev, PhasePointAngle::new(0.4, 0.37, 0.8), 10.0, &s).unwrap();
        assert!(d < 1e-6, "{d:e}");
    }

    #[test]
    fn drift_slope_on_energy() {
        let (_, sys) = deformed(0.01, 8);
        let ev = SystemEvaluator::new(&sys);
        let start = PhasePointAngle::new(0.2, 0.37, 1.1).to_cotangent(&ev, 0.5).unwrap();
        let s = IntegratorSettings::adaptive(1e-6);
        let slopes = drift_tolerance_slope(&ev, start, 10.0, &s, 1e-8, &[energy_monitor(&ev)]).unwrap();
        assert!(slopes[0].slope >= 0.8, "{slopes:?}");
    }

    #[test]
    fn lattice_is_seeded_and_on_slice() {
        let a = start_lattice(4, 4, 0.37, 0.25, 7);
        let b = start_lattice(4, 4, 0.37, 0.25, 7);
        let c = start_lattice(4, 4, 0.37, 0.25, 8);
        assert_eq!(a.len(), 16);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|p| p.y == 0.37 && (0.0..1.0).contains(&p.x)));
    }

    #[test]
    fn batch_matches_serial_and_isolates_failures() {
        let sys = SystemEvaluator::new(&MagneticSystem::flat());
        let starts = start_lattice(2, 2, 0.37, 0.0, 0);
        let s = IntegratorSettings::fixed(0.01);
        let batch = integrate_batch(&sys, &starts, 1.0, &s, &[]);
        for (st, r) in starts.iter().zip(&batch) {
            assert_eq!(r.as_ref().unwrap(), &integrate(&sys, *st, 1.0, &s, &[]).unwrap());
        }
        let bad = IntegratorSettings { max_steps: 3, ..s };
        assert!(integrate_batch(&sys, &starts, 1.0, &bad, &[]).iter().all(|r| r.is_err()));
    }

    #[test]
    fn reduce_handles_edge() {
        assert_eq!(reduce(-1e-18), (0.0, 0));
        assert_eq!(reduce(2.5), (0.5, 2));
        assert_eq!(reduce(-0.25), (0.75, -1));
    }
}
