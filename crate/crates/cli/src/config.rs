//! Run configuration: one JSON file per run, with presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use magtorus::classify::{ExampleOneData, TrigSeries};
use magtorus::deformation::{CosineSeries, LiouvilleData};
use magtorus::integrator::{IntegratorSettings, Scheme};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Default,
    Flat,
    Example1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub nx: usize,
    pub nphi: usize,
    pub y0: f64,
    /// Jitter in units of one lattice cell.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleOneConfig {
    pub lam_y: Vec<f64>,
    #[serde(default)]
    pub u_cos: Vec<f64>,
    #[serde(default)]
    pub u_sin: Vec<f64>,
}

impl ExampleOneConfig {
    pub fn data(&self) -> ExampleOneData {
        ExampleOneData {
            lam_y: CosineSeries(self.lam_y.clone()),
            u_y: TrigSeries {
                cos: self.u_cos.clone(),
                sin: self.u_sin.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Largest stationary residual accepted by `verify`.
    pub residual: f64,
    /// Largest relative drift of the integral accepted by `simulate`.
    pub drift: f64,
    /// Largest all-levels residual for a PASS verdict.
    pub all_levels: f64,
    /// Largest variance of the proof constants for a PASS verdict.
    pub consequence_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lam1_coeffs: Vec<f64>,
    pub lam2_coeffs: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_work")]
    pub n_work: usize,
    pub t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tol: f64,
    pub integrator: Scheme,
    /// Initial step (adaptive) or step (fixed).
    pub step: f64,
    pub sample_interval: f64,
    pub seed: u64,
    pub lattice: Lattice,
    pub m_verify: usize,
    pub energies: Vec<f64>,
    /// Jet orders for the drift-vs-K table.
    pub k_sweep: Vec<usize>,
    /// When set, `simulate` runs the shear-field system `Λ(y)`, `Ω = −u′(y)`
    /// instead of the deformed one.
    pub example_one: Option<ExampleOneConfig>,
    pub thresholds: Thresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lam1_coeffs: vec![1.0, 0.1],
            lam2_coeffs: vec![1.0, 0.1],
            k: 12,
            n_work: 64,
            t: 0.01,
            horizon: 20.0,
            tol: 1e-10,
            integrator: Scheme::Dopri45,
            step: 1e-3,
            sample_interval: 0.05,
            seed: 20240601,
            lattice: Lattice {
                nx: 4,
                nphi: 4,
                y0: 0.37,
                jitter: 0.25,
            },
            m_verify: 128,
            energies: vec![0.25, 0.5, 1.0],
            k_sweep: vec![4, 8, 12],
            example_one: None,
            thresholds: Thresholds {
                residual: 1e-8,
                drift: 1e-6,
                all_levels: 1e-10,
                consequence_variance: 1e-10,
            },
        }
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Default => Self::default(),
            Preset::Flat => Self {
                lam1_coeffs: vec![1.0],
                lam2_coeffs: vec![1.0],
                ..Self::default()
            },
            Preset::Example1 => {
                let d = ExampleOneData::default_preset();
                Self {
                    example_one: Some(ExampleOneConfig {
                        lam_y: d.lam_y.0,
                        u_cos: d.u_y.cos,
                        u_sin: d.u_y.sin,
                    }),
                    ..Self::default()
                }
            }
        }
    }

    /// Parses a config file; missing fields take the default preset value.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&compact))
    }

    pub fn liouville(&self) -> Result<LiouvilleData, CliError> {
        LiouvilleData::new(self.lam1_coeffs.clone(), self.lam2_coeffs.clone())
            .map_err(|e| CliError::Config(format!("lam1_coeffs/lam2_coeffs: {e}")))
    }

    pub fn integrator_settings(&self) -> IntegratorSettings {
        let base = match self.integrator {
            Scheme::Dopri45 => IntegratorSettings::adaptive(self.tol),
            Scheme::Rk4 => IntegratorSettings::fixed(self.step),
        };
        IntegratorSettings {
            step: self.step,
            ..base
        }
        .sampled_every(self.sample_interval)
    }

    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let finite_list = |name: &str, v: &[f64]| -> Result<(), CliError> {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(CliError::Config(format!("{name} must be finite")));
            }
            Ok(())
        };
        finite_list("lam1_coeffs", &self.lam1_coeffs)?;
        finite_list("lam2_coeffs", &self.lam2_coeffs)?;
        let data = self.liouville()?;
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.n_work < 2 || self.n_work < data.band() {
            return bad(format!(
                "N_work = {} must be at least 2 and cover the profile degree {}",
                self.n_work,
                data.band()
            ));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return bad(format!("t must be non-negative, got {}", self.t));
        }
        for (name, v) in [
            ("T", self.horizon),
            ("tol", self.tol),
            ("step", self.step),
            ("sample_interval", self.sample_interval),
            ("thresholds.residual", self.thresholds.residual),
            ("thresholds.drift", self.thresholds.drift),
            ("thresholds.all_levels", self.thresholds.all_levels),
            ("thresholds.consequence_variance", self.thresholds.consequence_variance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.m_verify < 16 || self.m_verify % 2 != 0 {
            return bad(format!("m_verify must be even and at least 16, got {}", self.m_verify));
        }
        let l = &self.lattice;
        if l.nx == 0 || l.nphi == 0 {
            return bad("lattice needs at least one start in each direction".into());
        }
        if !(0.0..1.0).contains(&l.y0) {
            return bad(format!("lattice.y0 must lie in [0, 1), got {}", l.y0));
        }
        if !(0.0..=0.5).contains(&l.jitter) {
            return bad(format!("lattice.jitter must lie in [0, 0.5], got {}", l.jitter));
        }
        if self.energies.is_empty() || self.energies.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("energies must be a non-empty list of positive numbers".into());
        }
        if self.k_sweep.contains(&0) {
            return bad("k_sweep orders must be at least 1".into());
        }
        if let Some(ex) = &self.example_one {
            finite_list("example_one.lam_y", &ex.lam_y)?;
            finite_list("example_one.u_cos", &ex.u_cos)?;
            finite_list("example_one.u_sin", &ex.u_sin)?;
            ex.data().validate().map_err(|e| CliError::Config(format!("example_one: {e}")))?;
        }
        self.integrator_settings()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
