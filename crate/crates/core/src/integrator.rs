//! Explicit Runge–Kutta solvers for small autonomous systems.
//!
//! The default is the Dormand–Prince 5(4) pair with a PI step-size
//! controller; classical RK4 at a fixed step is kept for runs whose output
//! must be reproducible byte for byte.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Dopri45,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// Initial step (adaptive) or the step (fixed).
    pub step: f64,
    /// Absolute bound on the local error per unit time, in every component.
    /// Unwrapped angle coordinates grow without bound, so no relative part.
    pub tol: f64,
    pub scheme: Scheme,
    /// Record the state only at multiples of this interval. Steps are
    /// shortened to land on them exactly.
    pub sample_interval: Option<f64>,
    pub max_steps: usize,
}

impl IntegratorSettings {
    pub fn adaptive(tol: f64) -> Self {
        Self {
            step: 1e-3,
            tol,
            scheme: Scheme::Dopri45,
            sample_interval: None,
            max_steps: 10_000_000,
        }
    }

    pub fn fixed(step: f64) -> Self {
        Self {
            step,
            tol: f64::INFINITY,
            scheme: Scheme::Rk4,
            sample_interval: None,
            max_steps: 10_000_000,
        }
    }

    pub fn sampled_every(mut self, interval: f64) -> Self {
        self.sample_interval = Some(interval);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(s) = self.sample_interval {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("sample interval must be positive, got {s}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Recorded solution of an autonomous ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<R> {
    pub times: Vec<f64>,
    pub states: Vec<R>,
    pub accepted: usize,
    pub rejected: usize,
    /// Fixed-step runs only: `|y_h − y_{h/2}| / 15` at the end point.
    pub richardson_error: Option<f64>,
}

pub trait OdeState: Copy + Default + AsRef<[f64]> + AsMut<[f64]> {}
impl<T: Copy + Default + AsRef<[f64]> + AsMut<[f64]>> OdeState for T {}

/// `y + Σ w_i k_i`
fn combine<R: OdeState>(y: &R, terms: &[(f64, &R)]) -> R {
    let mut out = *y;
    for (w, k) in terms {
        if *w == 0.0 {
            continue;
        }
        for (o, v) in out.as_mut().iter_mut().zip(k.as_ref()) {
            *o += w * v;
        }
    }
    out
}

fn scale<R: OdeState>(k: &R, h: f64) -> R {
    let mut out = *k;
    out.as_mut().iter_mut().for_each(|v| *v *= h);
    out
}

// Dormand–Prince 5(4)
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth- minus fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller (Hairer, Nørsett & Wanner II, IV.2)
// the error per unit time of the embedded pair scales like h⁴
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.25 - 0.75 * BETA;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Recorder<R> {
    interval: Option<f64>,
    next_index: u64,
    times: Vec<f64>,
    states: Vec<R>,
}

impl<R: OdeState> Recorder<R> {
    fn new(interval: Option<f64>, y0: R) -> Self {
        Self {
            interval,
            next_index: 1,
            times: vec![0.0],
            states: vec![y0],
        }
    }

    /// Next time the integrator must hit exactly, if any.
    fn target(&self, t_end: f64) -> f64 {
        match self.interval {
            Some(s) => (self.next_index as f64 * s).min(t_end),
            None => t_end,
        }
    }

    fn push(&mut self, t: f64, y: R, t_end: f64) {
        match self.interval {
            None => {
                self.times.push(t);
                self.states.push(y);
            }
            Some(s) => {
                let target = (self.next_index as f64 * s).min(t_end);
                if t >= target {
                    self.times.push(t);
                    self.states.push(y);
                    self.next_index += 1;
                }
            }
        }
    }
}

/// Integrates `y' = rhs(y)` on `[0, t_end]`.
pub fn solve<R, F>(mut rhs: F, y0: R, t_end: f64, settings: &IntegratorSettings) -> Result<Solution<R>>
where
    R: OdeState,
    F: FnMut(&R) -> Result<R>,
{
    settings.validate()?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration must be non-negative, got {t_end}")));
    }
    match settings.scheme {
        Scheme::Dopri45 => dopri45(&mut rhs, y0, t_end, settings),
        Scheme::Rk4 => {
            let coarse = rk4(&mut rhs, y0, t_end, settings.step, settings)?;
            let fine = rk4(&mut rhs, y0, t_end, 0.5 * settings.step, settings)?;
            let (a, b) = (coarse.states.last().unwrap(), fine.states.last().unwrap());
            let diff = a
                .as_ref()
                .iter()
                .zip(b.as_ref())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            Ok(Solution {
                richardson_error: Some(diff / 15.0),
                ..coarse
            })
        }
    }
}

fn dopri45<R, F>(rhs: &mut F, y0: R, t_end: f64, settings: &IntegratorSettings) -> Result<Solution<R>>
where
    R: OdeState,
    F: FnMut(&R) -> Result<R>,
{
    let tol = settings.tol;
    let mut rec = Recorder::new(settings.sample_interval, y0);
    let (mut t, mut y) = (0.0, y0);
    let mut h = settings.step.min(t_end.max(f64::MIN_POSITIVE));
    let mut k1 = rhs(&y)?;
    let mut err_old: f64 = 1e-4;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_rejected = false;

    while t < t_end {
        if accepted + rejected >= settings.max_steps {
            return Err(Error::StepLimit {
                t,
                max_steps: settings.max_steps,
            });
        }
        let target = rec.target(t_end);
        let mut h_step = h;
        let mut lands = false;
        if t + h_step >= target * (1.0 - 4.0 * f64::EPSILON) {
            h_step = target - t;
            lands = true;
        }
        if h_step < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h: h_step });
        }

        let k2 = rhs(&combine(&y, &[(h_step * A21, &k1)]))?;
        let k3 = rhs(&combine(&y, &[(h_step * A31, &k1), (h_step * A32, &k2)]))?;
        let k4 = rhs(&combine(&y, &[(h_step * A41, &k1), (h_step * A42, &k2), (h_step * A43, &k3)]))?;
        let k5 = rhs(&combine(
            &y,
            &[(h_step * A51, &k1), (h_step * A52, &k2), (h_step * A53, &k3), (h_step * A54, &k4)],
        ))?;
        let k6 = rhs(&combine(
            &y,
            &[
                (h_step * A61, &k1),
                (h_step * A62, &k2),
                (h_step * A63, &k3),
                (h_step * A64, &k4),
                (h_step * A65, &k5),
            ],
        ))?;
        let y_new = combine(
            &y,
            &[(h_step * B1, &k1), (h_step * B3, &k3), (h_step * B4, &k4), (h_step * B5, &k5), (h_step * B6, &k6)],
        );
        let k7 = rhs(&y_new)?;
        let err_vec = combine(
            &R::default(),
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let err_vec = scale(&err_vec, h_step);
        let err = err_vec
            .as_ref()
            .iter()
            .map(|e| e.abs() / (h_step * tol))
            .fold(0.0, f64::max);

        if err <= 1.0 {
            accepted += 1;
            t = if lands { target } else { t + h_step };
            y = y_new;
            k1 = k7;
            rec.push(t, y, t_end);
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                SAFETY * err.powf(-ALPHA) * err_old.powf(BETA)
            };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            // a step shortened to hit a sample point does not set the pace
            let base = if lands { h.max(h_step) } else { h_step };
            h = base * fac;
            err_old = err.max(1e-4);
            last_rejected = false;
        } else {
            rejected += 1;
            let fac = (SAFETY * err.powf(-ALPHA)).max(FAC_MIN);
            h = h_step * fac;
            last_rejected = true;
        }
    }

    Ok(Solution {
        times: rec.times,
        states: rec.states,
        accepted,
        rejected,
        richardson_error: None,
    })
}

fn rk4<R, F>(rhs: &mut F, y0: R, t_end: f64, step: f64, settings: &IntegratorSettings) -> Result<Solution<R>>
where
    R: OdeState,
    F: FnMut(&R) -> Result<R>,
{
    // steps per recorded sample, so that samples fall on grid points
    let (h, per_sample, n_samples) = match settings.sample_interval {
        Some(s) => {
            let per = (s / step).ceil().max(1.0) as u64;
            let n = (t_end / s).ceil() as u64;
            (s / per as f64, per, n)
        }
        None => {
            let n = (t_end / step).ceil().max(1.0) as u64;
            (t_end / n as f64, 1, n)
        }
    };
    let total = per_sample * n_samples;
    if total as usize > settings.max_steps {
        return Err(Error::StepLimit {
            t: 0.0,
            max_steps: settings.max_steps,
        });
    }
    let mut times = vec![0.0];
    let mut states = vec![y0];
    let mut y = y0;
    for i in 1..=total {
        let t0 = (i - 1) as f64 * h;
        let h_i = if i == total { t_end - t0 } else { h };
        let k1 = rhs(&y)?;
        let k2 = rhs(&combine(&y, &[(0.5 * h_i, &k1)]))?;
        let k3 = rhs(&combine(&y, &[(0.5 * h_i, &k2)]))?;
        let k4 = rhs(&combine(&y, &[(h_i, &k3)]))?;
        y = combine(&y, &[(h_i / 6.0, &k1), (h_i / 3.0, &k2), (h_i / 3.0, &k3), (h_i / 6.0, &k4)]);
        if i % per_sample == 0 || i == total {
            times.push(if i == total { t_end } else { i as f64 * h });
            states.push(y);
        }
    }
    Ok(Solution {
        times,
        states,
        accepted: total as usize,
        rejected: 0,
        richardson_error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn oscillator(y: &[f64; 2]) -> Result<[f64; 2]> {
        Ok([y[1], -y[0]])
    }

    #[test]
    fn dopri_harmonic_oscillator() {
        let sol = solve(oscillator, [1.0, 0.0], 10.0, &IntegratorSettings::adaptive(1e-10)).unwrap();
        let end = sol.states.last().unwrap();
        assert_abs_diff_eq!(*sol.times.last().unwrap(), 10.0);
        assert_abs_diff_eq!(end[0], 10f64.cos(), epsilon = 1e-8);
        assert_abs_diff_eq!(end[1], -10f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn dopri_error_shrinks_with_tolerance() {
        let err = |tol: f64| {
            let sol = solve(oscillator, [1.0, 0.0], 10.0, &IntegratorSettings::adaptive(tol)).unwrap();
            (sol.states.last().unwrap()[0] - 10f64.cos()).abs()
        };
        let (e1, e2) = (err(1e-6), err(1e-9));
        assert!(e2 < e1 / 50.0, "{e1:e} {e2:e}");
    }

    #[test]
    fn sampled_output_lands_on_grid() {
        let s = IntegratorSettings::adaptive(1e-9).sampled_every(0.25);
        let sol = solve(oscillator, [1.0, 0.0], 2.0, &s).unwrap();
        assert_eq!(sol.times.len(), 9);
        for (i, t) in sol.times.iter().enumerate() {
            assert_abs_diff_eq!(*t, 0.25 * i as f64, epsilon = 1e-14);
            assert_abs_diff_eq!(sol.states[i][0], t.cos(), epsilon = 1e-8);
        }
    }

    #[test]
    fn rk4_fixed_step_is_fourth_order() {
        let err = |h: f64| {
            let sol = solve(oscillator, [1.0, 0.0], 1.0, &IntegratorSettings::fixed(h)).unwrap();
            (sol.states.last().unwrap()[0] - 1f64.cos()).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio.log2() - 4.0).abs() < 0.2, "{ratio}");
        let sol = solve(oscillator, [1.0, 0.0], 1.0, &IntegratorSettings::fixed(0.01)).unwrap();
        let rich = sol.richardson_error.unwrap();
        assert!(rich > 0.0 && rich < 1e-9);
    }

    #[test]
    fn rk4_is_deterministic() {
        let s = IntegratorSettings::fixed(0.013).sampled_every(0.1);
        let a = solve(oscillator, [0.3, 0.2], 3.0, &s).unwrap();
        let b = solve(oscillator, [0.3, 0.2], 3.0, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 31);
    }

    #[test]
    fn blow_up_underflows() {
        // y' = y², y(0) = 1 blows up at t = 1
        let s = IntegratorSettings::adaptive(1e-8);
        let r = solve(|y: &[f64; 1]| Ok([y[0] * y[0]]), [1.0], 2.0, &s);
        assert!(matches!(r, Err(Error::StepUnderflow { .. }) | Err(Error::StepLimit { .. })), "{r:?}");
    }

    #[test]
    fn invalid_settings() {
        let mut s = IntegratorSettings::adaptive(1e-8);
        s.tol = 0.0;
        assert!(solve(oscillator, [1.0, 0.0], 1.0, &s).is_err());
        assert!(solve(oscillator, [1.0, 0.0], -1.0, &IntegratorSettings::adaptive(1e-8)).is_err());
    }
}
