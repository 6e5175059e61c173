use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("missing artifact {path}; run `magtorus {producer}` first")]
    MissingArtifact { path: String, producer: &'static str },

    #[error(transparent)]
    Numerical(#[from] magtorus::Error),

    /// A numerical failure with a suggested remedy attached.
    #[error("{source}; suggested max t = {suggested_max_t:.6e}")]
    OutsideTrust {
        source: magtorus::Error,
        suggested_max_t: f64,
    },

    #[error("verification threshold failed: {0}")]
    Threshold(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingArtifact { .. } => 2,
            CliError::Numerical(e) if !e.is_numerical() => 2,
            CliError::Numerical(_) | CliError::OutsideTrust { .. } => 3,
            CliError::Threshold(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Numerical(e) => numerical_kind(e),
            CliError::OutsideTrust { source, .. } => numerical_kind(source),
            CliError::Threshold(_) => "threshold",
            CliError::Io { .. } => "io",
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        });
        let detail = &mut v["error"];
        match self {
            CliError::OutsideTrust { source, suggested_max_t } => {
                detail["suggested_max_t"] = json!(suggested_max_t);
                add_numerical_detail(detail, source);
            }
            CliError::Numerical(e) => add_numerical_detail(detail, e),
            CliError::MissingArtifact { path, .. } => detail["path"] = json!(path),
            _ => {}
        }
        v
    }
}

fn numerical_kind(e: &magtorus::Error) -> &'static str {
    use magtorus::Error as E;
    match e {
        E::PositivityViolation { .. } => "positivity_violation",
        E::TrustRadiusExceeded { .. } => "trust_radius_exceeded",
        E::StepUnderflow { .. } => "step_underflow",
        E::StepLimit { .. } => "step_limit",
        E::InvalidArgument(_) => "invalid_argument",
        E::ModeOutOfBand { .. } => "mode_out_of_band",
        E::NonHermitian { .. } => "non_hermitian",
        E::GridTooSmall { .. } => "grid_too_small",
    }
}

fn add_numerical_detail(detail: &mut Value, e: &magtorus::Error) {
    use magtorus::Error as E;
    match e {
        E::PositivityViolation { x, y, value } => {
            detail["at"] = json!([x, y]);
            detail["value"] = json!(value);
        }
        E::TrustRadiusExceeded { t, suggested_max_t, .. } => {
            detail["t"] = json!(t);
            detail["suggested_max_t"] = json!(suggested_max_t);
        }
        _ => {}
    }
}
