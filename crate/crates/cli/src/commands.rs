//! The five verbs. Each one validates the config, computes everything in
//! memory, and only then writes its artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use magtorus::assembly::{assemble_integral, magnetic_field, MagneticSystem, VerifyReport};
use magtorus::classify::{
    all_levels_residuals, energy_drift_table, example_one_system, proof_consequence_checks, AllLevelsQuadratic,
    EnergyDrift, ExampleOneData, ProofConsequenceReport,
};
use magtorus::deformation::{
    ck_jet, evaluate_jet, jet_convergence_report, liouville_initial_state, JetConvergenceReport, StateJet, StateU,
    TrustAssessment, TrustPolicy,
};
use magtorus::dynamics::{
    conservation_report, drift_tolerance_slope, integrate_batch, start_lattice, Monitor, PhasePoint,
    PhasePointAngle, PhasePointCotangent, SystemEvaluator, ToleranceSlope, Trajectory,
};
use magtorus::field::{Field2, SpectralEntry};
use magtorus::integrator::Scheme;
use magtorus::Error;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{Artifact, RunDir};

pub const JET_FILE: &str = "jet.json";
pub const LAM_GRID: &str = "lam_grid.csv";
pub const OMEGA_GRID: &str = "omega_grid.csv";
pub const VERIFY_FILE: &str = "verify.json";
pub const DRIFT_FILE: &str = "drift.json";
pub const CLASSIFY_FILE: &str = "classify.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const PLOT_DIR: &str = "plots";

pub const FLAT_WARNING: &str = "flat/stationary case: constant profiles give Ω ≡ 0";

/// What a command hands back to the dispatcher.
#[derive(Debug)]
pub struct CommandOutput {
    pub command: &'static str,
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    pub warnings: Vec<String>,
    /// Set when the run completed but a configured threshold was missed.
    pub threshold_failure: Option<String>,
    /// Set when some independent sub-runs failed numerically.
    pub partial_failure: Option<Error>,
}

/// Runs a command and commits its artifacts. Returns the stdout summary.
pub fn execute(
    command: &'static str,
    cfg: &RunConfig,
    out: &Path,
    extra: &ClassifyOptions,
) -> Result<Value, CliError> {
    cfg.validate()?;
    let run = RunDir::locate(out, cfg);
    let output = match command {
        "deform" => deform(cfg)?,
        "verify" => verify(cfg)?,
        "simulate" => simulate(cfg)?,
        "classify-check" => classify_check(cfg, extra)?,
        "export-plots" => export_plots(cfg, &run)?,
        other => return Err(CliError::Config(format!("unknown command {other}"))),
    };
    let written = run.commit(cfg, output.command, &output.artifacts)?;
    let summary = json!({
        "command": output.command,
        "status": if output.threshold_failure.is_some() || output.partial_failure.is_some() { "failed" } else { "ok" },
        "run_dir": run.path().display().to_string(),
        "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "warnings": output.warnings,
        "summary": output.summary,
    });
    if let Some(e) = output.partial_failure {
        return Err(CliError::Numerical(e));
    }
    if let Some(msg) = output.threshold_failure {
        return Err(CliError::Threshold(msg));
    }
    Ok(summary)
}

fn numerical_with_trust(e: Error, jet: &StateJet) -> CliError {
    match e {
        Error::PositivityViolation { .. } => CliError::OutsideTrust {
            source: e,
            suggested_max_t: TrustPolicy::default().suggested_max_t(jet),
        },
        other => CliError::Numerical(other),
    }
}

pub struct Deformed {
    pub jet: StateJet,
    pub state: StateU,
    pub trust: TrustAssessment,
}

fn require_liouville_run(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    if cfg.example_one.is_some() {
        return Err(CliError::Config(format!(
            "{command} works on the Liouville profiles; remove example_one from the config"
        )));
    }
    Ok(())
}

/// Jet of order `cfg.k`, evaluated at `cfg.t` inside the trust radius.
pub fn deformed(cfg: &RunConfig, k: usize) -> Result<Deformed, CliError> {
    let data = cfg.liouville()?;
    let u0 = liouville_initial_state(&data, cfg.n_work)?;
    let jet = ck_jet(&u0, k)?;
    let state = evaluate_jet(&jet, cfg.t).map_err(|e| numerical_with_trust(e, &jet))?;
    let trust = TrustPolicy::default().assess(&jet, cfg.t)?;
    Ok(Deformed { jet, state, trust })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateSpectra {
    pub lam: Vec<SpectralEntry>,
    pub u0: Vec<SpectralEntry>,
    pub f: Vec<SpectralEntry>,
    pub g: Vec<SpectralEntry>,
}

impl StateSpectra {
    fn of(u: &StateU) -> Self {
        Self {
            lam: u.lam.to_spectrum(),
            u0: u.u0.to_spectrum(),
            f: u.f.to_spectrum(),
            g: u.g.to_spectrum(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JetOrder {
    pub k: usize,
    #[serde(flatten)]
    pub spectra: StateSpectra,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JetFile {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_work")]
    pub n_work: usize,
    pub t: f64,
    pub discarded_mass: f64,
    pub orders: Vec<JetOrder>,
    pub state_at_t: StateSpectra,
    pub omega_at_t: Vec<SpectralEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OmegaStats {
    pub max_abs: f64,
    pub mean: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyFile {
    #[serde(flatten)]
    pub report: VerifyReport,
    pub max_residual: f64,
    pub trust: TrustAssessment,
    pub convergence: JetConvergenceReport,
    pub omega: OmegaStats,
    pub warnings: Vec<String>,
}

fn flat_warnings(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    Ok(if cfg.liouville()?.is_flat() {
        vec![FLAT_WARNING.to_string()]
    } else {
        Vec::new()
    })
}

fn verify_file(cfg: &RunConfig, d: &Deformed, warnings: &[String]) -> Result<VerifyFile, CliError> {
    let report = VerifyReport::build(&d.state, cfg.t, cfg.k, cfg.m_verify)?;
    let omega = magnetic_field(&d.state);
    Ok(VerifyFile {
        max_residual: report.max_residual(),
        report,
        trust: d.trust,
        convergence: jet_convergence_report(&d.jet, cfg.t),
        omega: OmegaStats {
            max_abs: omega.max_norm(cfg.m_verify),
            mean: omega.mean(),
        },
        warnings: warnings.to_vec(),
    })
}

pub fn deform(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    require_liouville_run(cfg, "deform")?;
    let warnings = flat_warnings(cfg)?;
    let d = deformed(cfg, cfg.k)?;
    let omega = magnetic_field(&d.state);
    let jet_file = JetFile {
        k: cfg.k,
        n_work: cfg.n_work,
        t: cfg.t,
        discarded_mass: d.jet.discarded_mass,
        orders: d
            .jet
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, u)| JetOrder {
                k,
                spectra: StateSpectra::of(u),
            })
            .collect(),
        state_at_t: StateSpectra::of(&d.state),
        omega_at_t: omega.to_spectrum(),
    };
    let verify = verify_file(cfg, &d, &warnings)?;
    let summary = json!({
        "omega_max_abs": verify.omega.max_abs,
        "omega_mean": verify.omega.mean,
        "lam_min": verify.report.lam_min,
        "max_residual": verify.max_residual,
        "suggested_max_t": d.trust.suggested_max_t,
    });
    Ok(CommandOutput {
        command: "deform",
        artifacts: vec![
            Artifact::json(JET_FILE, &jet_file),
            Artifact::text(LAM_GRID, d.state.lam.sample(cfg.m_verify).to_csv()),
            Artifact::text(OMEGA_GRID, omega.sample(cfg.m_verify).to_csv()),
            Artifact::json(VERIFY_FILE, &verify),
        ],
        summary,
        warnings,
        threshold_failure: None,
        partial_failure: None,
    })
}

pub fn verify(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    require_liouville_run(cfg, "verify")?;
    let warnings = flat_warnings(cfg)?;
    let d = deformed(cfg, cfg.k)?;
    let v = verify_file(cfg, &d, &warnings)?;
    let threshold_failure = (v.max_residual > cfg.thresholds.residual).then(|| {
        format!(
            "max stationary residual {:.3e} exceeds {:.3e}",
            v.max_residual, cfg.thresholds.residual
        )
    });
    let summary = json!({
        "max_residual": v.max_residual,
        "threshold": cfg.thresholds.residual,
        "omega_mean": v.omega.mean,
    });
    Ok(CommandOutput {
        command: "verify",
        artifacts: vec![Artifact::json(VERIFY_FILE, &v)],
        summary,
        warnings,
        threshold_failure,
        partial_failure: None,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartDrift {
    pub index: usize,
    pub energy: f64,
    pub start: PhasePointAngle,
    pub relative_drift: Option<f64>,
    pub max_abs_drift: Option<f64>,
    pub steps: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KSweepEntry {
    #[serde(rename = "K")]
    pub k: usize,
    pub max_relative_drift: f64,
    pub failed_starts: usize,
    pub within_trust: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DriftFile {
    pub system: String,
    pub monitor: String,
    pub seed: u64,
    pub lattice: crate::config::Lattice,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tol: f64,
    pub integrator: Scheme,
    pub starts: Vec<StartDrift>,
    pub max_relative_drift: f64,
    pub k_sweep: Vec<KSweepEntry>,
    pub tolerance_slope: Vec<ToleranceSlope>,
}

fn lattice(cfg: &RunConfig) -> Vec<PhasePointAngle> {
    let l = &cfg.lattice;
    start_lattice(l.nx, l.nphi, l.y0, l.jitter, cfg.seed)
}

/// `t,<state>,F,H,wx,wy`, positions reduced mod 1.
fn trajectory_csv<P: PhasePoint>(tr: &Trajectory<P>, h: impl Fn(&P) -> f64) -> String {
    let mut out = String::from("t");
    for c in P::COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",F,H,wx,wy\n");
    let f = &tr.invariant_samples[0].1;
    for i in 0..tr.len() {
        out.push_str(&format!("{:.16e}", tr.times[i]));
        for v in tr.states[i].to_repr().as_ref() {
            out.push_str(&format!(",{v:.16e}"));
        }
        let [wx, wy] = tr.windings[i];
        out.push_str(&format!(",{:.16e},{:.16e},{wx},{wy}\n", f[i], h(&tr.unfolded(i))));
    }
    out
}

fn max_drift(results: &[Option<f64>]) -> f64 {
    results.iter().flatten().copied().fold(0.0, f64::max)
}

/// Drift of the integral built from the jet truncated at order `k`. Lower
/// orders may lie outside the trust radius; that is reported, not enforced.
fn truncated_drift(cfg: &RunConfig, jet: &StateJet, k: usize, starts: &[PhasePointAngle]) -> Result<KSweepEntry, CliError> {
    let jet_k = if k <= jet.order { jet.truncated(k)? } else { ck_jet(&jet.coeffs[0], k)? };
    let state = evaluate_jet(&jet_k, cfg.t).map_err(|e| numerical_with_trust(e, &jet_k))?;
    let within_trust = TrustPolicy::default().assess(&jet_k, cfg.t).is_ok();
    let sys = MagneticSystem::from_state(&state)?;
    let q = assemble_integral(&state)?.evaluator();
    let ev = SystemEvaluator::new(&sys);
    let monitors = [Monitor::new("F", |p: &PhasePointAngle| q.on_level(p.x, p.y, p.phi))];
    let runs = integrate_batch(&ev, starts, cfg.horizon, &cfg.integrator_settings(), &monitors);
    let drifts: Vec<Option<f64>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|tr| conservation_report(tr).max_relative_drift()))
        .collect();
    Ok(KSweepEntry {
        k,
        max_relative_drift: max_drift(&drifts),
        failed_starts: drifts.iter().filter(|d| d.is_none()).count(),
        within_trust,
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    if let Some(ex) = &cfg.example_one {
        return simulate_example_one(cfg, &ex.data());
    }
    let warnings = flat_warnings(cfg)?;
    let d = deformed(cfg, cfg.k)?;
    let sys = MagneticSystem::from_state(&d.state)?;
    let q = assemble_integral(&d.state)?.evaluator();
    let ev = SystemEvaluator::new(&sys);
    let monitors = [Monitor::new("F", |p: &PhasePointAngle| q.on_level(p.x, p.y, p.phi))];
    let starts = lattice(cfg);
    let settings = cfg.integrator_settings();
    let runs = integrate_batch(&ev, &starts, cfg.horizon, &settings, &monitors);

    let mut artifacts = Vec::new();
    let mut records = Vec::new();
    let mut first_error = None;
    for (i, (start, r)) in starts.iter().zip(&runs).enumerate() {
        match r {
            Ok(tr) => {
                let rep = conservation_report(tr);
                artifacts.push(Artifact::text(
                    format!("{TRAJECTORY_DIR}/start_{i:02}.csv"),
                    trajectory_csv(tr, |_| 0.5),
                ));
                records.push(StartDrift {
                    index: i,
                    energy: 0.5,
                    start: *start,
                    relative_drift: Some(rep.monitors[0].relative_drift),
                    max_abs_drift: Some(rep.monitors[0].max_abs_drift),
                    steps: Some(tr.accepted_steps),
                    error: None,
                });
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.clone());
                records.push(StartDrift {
                    index: i,
                    energy: 0.5,
                    start: *start,
                    relative_drift: None,
                    max_abs_drift: None,
                    steps: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let max_relative_drift = max_drift(&records.iter().map(|r| r.relative_drift).collect::<Vec<_>>());

    let mut k_sweep = Vec::new();
    for &k in &cfg.k_sweep {
        k_sweep.push(if k == cfg.k {
            KSweepEntry {
                k,
                max_relative_drift,
                failed_starts: records.iter().filter(|r| r.error.is_some()).count(),
                within_trust: true,
            }
        } else {
            truncated_drift(cfg, &d.jet, k, &starts)?
        });
    }
    let tolerance_slope = if cfg.integrator == Scheme::Dopri45 {
        drift_tolerance_slope(&ev, starts[0], cfg.horizon, &settings, cfg.tol * 1e-2, &monitors)?
    } else {
        Vec::new()
    };

    let drift_file = DriftFile {
        system: if warnings.is_empty() { "deformed" } else { "flat" }.into(),
        monitor: "F".into(),
        seed: cfg.seed,
        lattice: cfg.lattice.clone(),
        horizon: cfg.horizon,
        tol: cfg.tol,
        integrator: cfg.integrator,
        starts: records,
        max_relative_drift,
        k_sweep,
        tolerance_slope,
    };
    let threshold_failure = (max_relative_drift > cfg.thresholds.drift).then(|| {
        format!(
            "max relative drift {max_relative_drift:.3e} exceeds {:.3e}",
            cfg.thresholds.drift
        )
    });
    let summary = json!({
        "max_relative_drift": max_relative_drift,
        "threshold": cfg.thresholds.drift,
        "k_sweep": drift_file.k_sweep,
        "starts": starts.len(),
    });
    artifacts.push(Artifact::json(DRIFT_FILE, &drift_file));
    Ok(CommandOutput {
        command: "simulate",
        artifacts,
        summary,
        warnings,
        threshold_failure,
        partial_failure: first_error,
    })
}

fn simulate_example_one(cfg: &RunConfig, data: &ExampleOneData) -> Result<CommandOutput, CliError> {
    let (sys, f1) = example_one_system(data)?;
    let ev = SystemEvaluator::new(&sys);
    let monitors = [Monitor::new("F1", |p: &PhasePointCotangent| f1.eval(p))];
    let starts = lattice(cfg);
    let settings = cfg.integrator_settings();
    let mut artifacts = Vec::new();
    let mut records = Vec::new();
    let mut first_error = None;
    for (ei, &energy) in cfg.energies.iter().enumerate() {
        let lifted = starts
            .iter()
            .map(|s| s.to_cotangent(&ev, energy))
            .collect::<magtorus::Result<Vec<_>>>()?;
        let runs = integrate_batch(&ev, &lifted, cfg.horizon, &settings, &monitors);
        for (i, (start, r)) in starts.iter().zip(&runs).enumerate() {
            let mut rec = StartDrift {
                index: i,
                energy,
                start: *start,
                relative_drift: None,
                max_abs_drift: None,
                steps: None,
                error: None,
            };
            match r {
                Ok(tr) => {
                    let rep = conservation_report(tr);
                    rec.relative_drift = Some(rep.monitors[0].relative_drift);
                    rec.max_abs_drift = Some(rep.monitors[0].max_abs_drift);
                    rec.steps = Some(tr.accepted_steps);
                    artifacts.push(Artifact::text(
                        format!("{TRAJECTORY_DIR}/energy_{ei}_start_{i:02}.csv"),
                        trajectory_csv(tr, |p| ev.hamiltonian(p).unwrap_or(f64::NAN)),
                    ));
                }
                Err(e) => {
                    first_error.get_or_insert_with(|| e.clone());
                    rec.error = Some(e.to_string());
                }
            }
            records.push(rec);
        }
    }
    let max_relative_drift = max_drift(&records.iter().map(|r| r.relative_drift).collect::<Vec<_>>());
    let drift_file = DriftFile {
        system: "shear".into(),
        monitor: "F1".into(),
        seed: cfg.seed,
        lattice: cfg.lattice.clone(),
        horizon: cfg.horizon,
        tol: cfg.tol,
        integrator: cfg.integrator,
        starts: records,
        max_relative_drift,
        k_sweep: Vec::new(),
        tolerance_slope: Vec::new(),
    };
    let threshold_failure = (max_relative_drift > cfg.thresholds.drift).then(|| {
        format!(
            "max relative drift {max_relative_drift:.3e} exceeds {:.3e}",
            cfg.thresholds.drift
        )
    });
    artifacts.push(Artifact::json(DRIFT_FILE, &drift_file));
    Ok(CommandOutput {
        command: "simulate",
        artifacts,
        summary: json!({
            "max_relative_drift": max_relative_drift,
            "threshold": cfg.thresholds.drift,
            "energies": cfg.energies,
            "starts": starts.len(),
        }),
        warnings: Vec::new(),
        threshold_failure,
        partial_failure: first_error,
    })
}

/// Candidate for the all-levels check, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub name: String,
    pub band: usize,
    /// `"pass"` or `"fail"` for bundled candidates.
    #[serde(default)]
    pub expected: Option<String>,
    pub lam: Vec<SpectralEntry>,
    #[serde(default)]
    pub omega: Vec<SpectralEntry>,
    #[serde(default)]
    pub a0: Vec<SpectralEntry>,
    #[serde(default)]
    pub a1: Vec<SpectralEntry>,
    #[serde(default)]
    pub a2: Vec<SpectralEntry>,
    #[serde(default)]
    pub b0: Vec<SpectralEntry>,
    #[serde(default)]
    pub b1: Vec<SpectralEntry>,
    #[serde(default)]
    pub c0: Vec<SpectralEntry>,
}

impl CandidateFile {
    fn pack(name: &str, expected: &str, sys: &MagneticSystem, q: &AllLevelsQuadratic) -> Self {
        let band = q
            .coefficients()
            .iter()
            .map(|(_, f)| f.band_limit())
            .chain([sys.lam.band_limit(), sys.omega.band_limit()])
            .max()
            .unwrap_or(0);
        Self {
            name: name.into(),
            band,
            expected: Some(expected.into()),
            lam: sys.lam.to_spectrum(),
            omega: sys.omega.to_spectrum(),
            a0: q.a0.to_spectrum(),
            a1: q.a1.to_spectrum(),
            a2: q.a2.to_spectrum(),
            b0: q.b0.to_spectrum(),
            b1: q.b1.to_spectrum(),
            c0: q.c0.to_spectrum(),
        }
    }

    pub fn unpack(&self) -> Result<(MagneticSystem, AllLevelsQuadratic), CliError> {
        let field = |name: &str, entries: &[SpectralEntry]| {
            Field2::from_spectrum(entries, self.band)
                .map_err(|e| CliError::Config(format!("candidate {}: {name}: {e}", self.name)))
        };
        let sys = MagneticSystem::new(field("lam", &self.lam)?, field("omega", &self.omega)?)?;
        let q = AllLevelsQuadratic {
            a0: field("a0", &self.a0)?,
            a1: field("a1", &self.a1)?,
            a2: field("a2", &self.a2)?,
            b0: field("b0", &self.b0)?,
            b1: field("b1", &self.b1)?,
            c0: field("c0", &self.c0)?,
        };
        Ok((sys, q))
    }
}

#[derive(Debug, Default, Clone)]
pub struct ClassifyOptions {
    pub candidates: Vec<PathBuf>,
    /// Skip the bundled candidates.
    pub no_bundled: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidateReport {
    pub name: String,
    pub verdict: String,
    pub expected: Option<String>,
    pub residual_max_norms: std::collections::BTreeMap<String, f64>,
    pub max_residual: f64,
    pub proof_consequences: ProofConsequenceReport,
    pub energy_drift: Vec<EnergyDrift>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyFile {
    pub resolution: usize,
    pub residual_threshold: f64,
    pub variance_threshold: f64,
    pub candidates: Vec<CandidateReport>,
}

fn bundled_candidates(cfg: &RunConfig) -> Result<Vec<CandidateFile>, CliError> {
    let m = cfg.m_verify;
    let data = cfg.liouville()?;
    let liou_sys = MagneticSystem::from_state(&liouville_initial_state(&data, data.band().max(1))?)?;
    let liou = AllLevelsQuadratic::liouville(&data, m)?;

    let ex_data = cfg
        .example_one
        .as_ref()
        .map(|e| e.data())
        .unwrap_or_else(ExampleOneData::default_preset);
    let (ex_sys, _) = example_one_system(&ex_data)?;
    let ex = AllLevelsQuadratic::example_one(&ex_data, m)?;

    let mut out = vec![
        CandidateFile::pack("liouville", "pass", &liou_sys, &liou),
        CandidateFile::pack("shear", "pass", &ex_sys, &ex),
    ];
    if !data.is_flat() && cfg.t > 0.0 {
        let d = deformed(cfg, cfg.k)?;
        let sys = MagneticSystem::from_state(&d.state)?;
        let q = AllLevelsQuadratic::from_one_level(&d.state, m)?;
        out.push(CandidateFile::pack("deformed", "fail", &sys, &q));
    }
    Ok(out)
}

pub fn classify_check(cfg: &RunConfig, opts: &ClassifyOptions) -> Result<CommandOutput, CliError> {
    let mut candidates = if opts.no_bundled {
        Vec::new()
    } else {
        bundled_candidates(cfg)?
    };
    let bundled = candidates.len();
    for path in &opts.candidates {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let c: CandidateFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("candidate {}: {e}", path.display())))?;
        candidates.push(c);
    }
    if candidates.is_empty() {
        return Err(CliError::Config("no candidates to check".into()));
    }
    // all inputs are parsed before any integration starts
    let unpacked = candidates
        .iter()
        .map(|c| c.unpack())
        .collect::<Result<Vec<_>, _>>()?;

    let starts = lattice(cfg);
    let settings = cfg.integrator_settings();
    let mut reports = Vec::new();
    let mut mismatches = Vec::new();
    for (c, (sys, q)) in candidates.iter().zip(&unpacked) {
        let res = all_levels_residuals(sys, q, cfg.m_verify)?;
        let pc = proof_consequence_checks(q, cfg.m_verify)?;
        let drift = energy_drift_table(sys, q, &starts, &cfg.energies, cfg.horizon, &settings)?;
        let pass = res.max() < cfg.thresholds.all_levels && pc.passes(cfg.thresholds.consequence_variance);
        let verdict = if pass { "pass" } else { "fail" };
        if let Some(exp) = &c.expected {
            if exp != verdict {
                mismatches.push(format!("{} expected {exp}, got {verdict}", c.name));
            }
        }
        reports.push(CandidateReport {
            name: c.name.clone(),
            verdict: verdict.into(),
            expected: c.expected.clone(),
            max_residual: res.max(),
            residual_max_norms: res.max_norms,
            proof_consequences: pc,
            energy_drift: drift,
        });
    }
    let file = ClassifyFile {
        resolution: cfg.m_verify,
        residual_threshold: cfg.thresholds.all_levels,
        variance_threshold: cfg.thresholds.consequence_variance,
        candidates: reports,
    };
    let mut artifacts: Vec<Artifact> = candidates[..bundled]
        .iter()
        .map(|c| Artifact::json(format!("candidates/{}.json", c.name), c))
        .collect();
    let summary = json!({
        "verdicts": file.candidates.iter().map(|c| json!({
            "name": c.name,
            "verdict": c.verdict,
            "max_residual": c.max_residual,
        })).collect::<Vec<_>>(),
    });
    artifacts.push(Artifact::json(CLASSIFY_FILE, &file));
    Ok(CommandOutput {
        command: "classify-check",
        artifacts,
        summary,
        warnings: Vec::new(),
        threshold_failure: (!mismatches.is_empty()).then(|| mismatches.join("; ")),
        partial_failure: None,
    })
}

pub fn export_plots(cfg: &RunConfig, run: &RunDir) -> Result<CommandOutput, CliError> {
    let omega = run.read(OMEGA_GRID, "deform")?;
    let mut artifacts = Vec::new();
    let mut heat = String::from("x,y,omega\n");
    for line in omega.lines().skip(1) {
        heat.push_str(line);
        heat.push('\n');
    }
    artifacts.push(Artifact::text(format!("{PLOT_DIR}/omega_heatmap.csv"), heat));

    let mut skipped = Vec::new();
    match run.read(DRIFT_FILE, "simulate") {
        Ok(text) => {
            let drift: DriftFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("corrupt {DRIFT_FILE}: {e}")))?;
            if !drift.k_sweep.is_empty() {
                let mut table = String::from("K,max_relative_drift\n");
                for e in &drift.k_sweep {
                    table.push_str(&format!("{},{:.16e}\n", e.k, e.max_relative_drift));
                }
                artifacts.push(Artifact::text(format!("{PLOT_DIR}/drift_vs_k.csv"), table));
            }
        }
        Err(CliError::MissingArtifact { .. }) => skipped.push("drift_vs_k (run simulate)"),
        Err(e) => return Err(e),
    }

    let manifest = run.manifest()?;
    let trajectories: Vec<String> = manifest
        .map(|m| {
            m.files
                .keys()
                .filter(|k| k.starts_with(&format!("{TRAJECTORY_DIR}/")))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    if trajectories.is_empty() {
        skipped.push("unfolded trajectories (run simulate)");
    }
    for name in &trajectories {
        let text = run.read(name, "simulate")?;
        artifacts.push(Artifact::text(
            format!("{PLOT_DIR}/unfolded_{}", name.trim_start_matches(&format!("{TRAJECTORY_DIR}/"))),
            unfold_csv(&text).map_err(|msg| CliError::Config(format!("{name}: {msg}")))?,
        ));
    }
    let _ = cfg;
    Ok(CommandOutput {
        command: "export-plots",
        summary: json!({ "plots": artifacts.len(), "skipped": skipped }),
        artifacts,
        warnings: Vec::new(),
        threshold_failure: None,
        partial_failure: None,
    })
}

/// `t,x,y` on the universal cover from a trajectory CSV.
fn unfold_csv(text: &str) -> Result<String, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
    let col = |n: &str| header.iter().position(|h| *h == n).ok_or(format!("missing column {n}"));
    let (ct, cx, cy, cwx, cwy) = (col("t")?, col("x")?, col("y")?, col("wx")?, col("wy")?);
    let mut out = String::from("t,x,y\n");
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| f.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or(format!("bad row {line}"));
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            num(ct)?,
            num(cx)? + num(cwx)?,
            num(cy)? + num(cwy)?
        ));
    }
    Ok(out)
}
