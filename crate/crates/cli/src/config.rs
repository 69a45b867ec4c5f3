//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thdsim::analysis::{MleSettings, DEFAULT_HISTOGRAM_BINS, DEFAULT_HISTOGRAM_RANGE};
use thdsim::io::read_state_json;
use thdsim::modes::DEFAULT_BINS;
use thdsim::state::DEFAULT_DIM;
use thdsim::{make_mode, ErrorModel, ModeShape, Parity, QuadratureGrid, QuantumState, TemporalMode, ThetaSchedule, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateSpec,
    pub mode: ModeSpec,
    #[serde(default = "vacuum_spec")]
    pub background: StateSpec,
    #[serde(default)]
    pub theta: ThetaSchedule,
    pub traces: usize,
    #[serde(default)]
    pub error_model: ErrorModel,
    #[serde(default = "unit_gain")]
    pub gain: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quadrature_grid: QuadratureGrid,
    #[serde(default)]
    pub analyses: Vec<AnalysisRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn vacuum_spec() -> StateSpec {
    StateSpec::Vacuum { dim: DEFAULT_DIM }
}

fn unit_gain() -> f64 {
    1.0
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Vacuum {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Fock {
        n: usize,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Amplitude α = alpha · e^{i phase}.
    Coherent {
        alpha: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Squeezing ξ = r e^{i phi}.
    Squeezed {
        r: f64,
        #[serde(default)]
        phi: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Cat {
        alpha: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "even")]
        parity: Parity,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Thermal {
        nbar: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Density matrix in the state JSON format.
    File { path: PathBuf },
}

fn even() -> Parity {
    Parity::Even
}

impl StateSpec {
    pub fn build(&self) -> thdsim::Result<QuantumState> {
        match self {
            StateSpec::Vacuum { dim } => QuantumState::vacuum(*dim),
            StateSpec::Fock { n, dim } => QuantumState::fock(*n, *dim),
            StateSpec::Coherent { alpha, phase, dim } => QuantumState::coherent(Complex64::from_polar(*alpha, *phase), *dim),
            StateSpec::Squeezed { r, phi, dim } => QuantumState::squeezed(Complex64::from_polar(*r, *phi), *dim),
            StateSpec::Cat { alpha, phase, parity, dim } => {
                QuantumState::cat(Complex64::from_polar(*alpha, *phase), *parity, *dim)
            }
            StateSpec::Thermal { nbar, dim } => QuantumState::thermal(*nbar, *dim),
            StateSpec::File { path } => read_state_json(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub shape: ModeShape,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Bin width in seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Time of the first bin; by default the grid is centred on t = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_dt() -> f64 {
    1e-9
}

impl ModeSpec {
    pub fn grid(&self) -> thdsim::Result<TimeGrid> {
        match self.start {
            Some(start) => TimeGrid::new(start, self.dt, self.bins),
            None => TimeGrid::centered(self.dt, self.bins),
        }
    }

    pub fn build(&self) -> thdsim::Result<TemporalMode> {
        make_mode(self.shape.clone(), self.grid()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisRequest {
    /// Per-bin photocurrent variance across traces.
    VarianceMap,
    /// Recovered (θ, q) records.
    Quadratures,
    /// Histogram of recovered quadratures next to the analytic marginal.
    Marginal {
        #[serde(default)]
        histogram: HistogramSpec,
    },
    /// B between the recovered histogram and a reference marginal, per phase.
    Bhattacharyya {
        #[serde(default)]
        reference: Reference,
        #[serde(default)]
        histogram: HistogramSpec,
    },
    PrincipalMode {
        #[serde(default = "vacuum_variance")]
        background_variance: f64,
    },
    Mle {
        #[serde(default)]
        settings: MleSettings,
    },
    /// Raw traces with a JSON sidecar.
    Traces {
        #[serde(default)]
        format: TraceFormat,
        /// Export only the first `limit` traces.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

impl AnalysisRequest {
    /// File stem and summary key; unique within one config.
    pub fn key(&self) -> String {
        match self {
            AnalysisRequest::VarianceMap => "variance_map".into(),
            AnalysisRequest::Quadratures => "quadratures".into(),
            AnalysisRequest::Marginal { .. } => "marginal".into(),
            AnalysisRequest::Bhattacharyya { reference, .. } => {
                let name = match reference {
                    Reference::Ideal => "ideal",
                    Reference::ModeMismatch => "mode_mismatch",
                    Reference::PhaseAveraged => "phase_averaged",
                };
                format!("bhattacharyya_{name}")
            }
            AnalysisRequest::PrincipalMode { .. } => "principal_mode".into(),
            AnalysisRequest::Mle { .. } => "mle".into(),
            AnalysisRequest::Traces { .. } => "traces".into(),
        }
    }
}

fn vacuum_variance() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub bins: usize,
    pub range: (f64, f64),
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec { bins: DEFAULT_HISTOGRAM_BINS, range: DEFAULT_HISTOGRAM_RANGE }
    }
}

/// Analytic marginal a recovered histogram is compared with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The error-free marginal of the state.
    #[default]
    Ideal,
    /// The state mixed with vacuum at the overlap implied by the analysis offset.
    ModeMismatch,
    /// The state marginal averaged over the configured phase jitter.
    PhaseAveraged,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    #[default]
    Csv,
    Binary,
}

/// A field that failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
    #[error("{0}")]
    Other(String),
}

pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads a config file. A relative state-file path is taken relative to the
/// config's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let mut config = parse_config(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new(""));
    for spec in [&mut config.state, &mut config.background] {
        if let StateSpec::File { path } = spec {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
    Ok(config)
}

impl ExperimentConfig {
    /// Checks every field against the preconditions of the operations it
    /// feeds, before anything is computed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut push = |field: &str, message: String| issues.push(ConfigIssue { field: field.into(), message });

        if let Err(e) = self.state.build() {
            push("state", e.to_string());
        }
        if let Err(e) = self.background.build() {
            push("background", e.to_string());
        }
        if !matches!(self.background, StateSpec::Vacuum { .. } | StateSpec::Thermal { .. }) {
            push("background", "must be vacuum or thermal".into());
        }
        let mode = self.mode.build();
        match &mode {
            Err(e) => push("mode", e.to_string()),
            Ok(m) if m.grid().bins < 2 => push("mode.bins", "need at least two bins".into()),
            Ok(_) => {}
        }
        if let Err(e) = self.theta.validate() {
            push("theta", e.to_string());
        }
        if self.traces == 0 {
            push("traces", "must be at least 1".into());
        }
        if let Err(e) = self.error_model.validate() {
            push("error_model", e.to_string());
        }
        if let Ok(m) = &mode {
            if self.error_model.measurement_mode_offset.abs() >= m.grid().span() {
                push("error_model.measurement_mode_offset", "moves the analysis mode off the time grid".into());
            }
        }
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            push("gain", format!("must be positive, got {}", self.gain));
        }
        if let Err(e) = self.quadrature_grid.validate() {
            push("quadrature_grid", e.to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.analyses.iter().enumerate() {
            let field = |name: &str| format!("analyses[{i}].{name}");
            if !seen.insert(a.key()) {
                push(&format!("analyses[{i}]"), format!("duplicate {} request", a.key()));
            }
            match a {
                AnalysisRequest::VarianceMap | AnalysisRequest::PrincipalMode { .. } if self.traces < 2 => {
                    push(&format!("analyses[{i}]"), "needs at least two traces".into());
                }
                AnalysisRequest::PrincipalMode { background_variance } if !(*background_variance >= 0.0) => {
                    push(&field("background_variance"), "must be non-negative".into());
                }
                AnalysisRequest::Marginal { histogram } | AnalysisRequest::Bhattacharyya { histogram, .. } => {
                    if histogram.bins == 0 {
                        push(&field("histogram.bins"), "must be at least 1".into());
                    }
                    let (lo, hi) = histogram.range;
                    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                        push(&field("histogram.range"), "needs lo < hi".into());
                    }
                }
                AnalysisRequest::Mle { settings } => {
                    if settings.dim == 0 {
                        push(&field("settings.dim"), "must be at least 1".into());
                    }
                    if settings.bins_per_phase == 0 {
                        push(&field("settings.bins_per_phase"), "must be at least 1".into());
                    }
                    if !(settings.tol > 0.0) {
                        push(&field("settings.tol"), "must be positive".into());
                    }
                }
                AnalysisRequest::Traces { limit: Some(0), .. } => push(&field("limit"), "must be at least 1".into()),
                _ => {}
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "state": {"kind": "fock", "n": 1},
        "mode": {"shape": {"kind": "gaussian", "center": 0.0, "width": 8e-9}},
        "traces": 100
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(MINIMAL, "inline").unwrap();
        assert_eq!(c.mode.bins, DEFAULT_BINS);
        assert_eq!(c.background, StateSpec::Vacuum { dim: DEFAULT_DIM });
        assert_eq!(c.gain, 1.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn round_trip() {
        let mut c = parse_config(MINIMAL, "inline").unwrap();
        c.analyses = vec![
            AnalysisRequest::Mle { settings: MleSettings::default() },
            AnalysisRequest::Bhattacharyya { reference: Reference::ModeMismatch, histogram: HistogramSpec::default() },
            AnalysisRequest::Traces { format: TraceFormat::Binary, limit: Some(3) },
        ];
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text, "again").unwrap(), c);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_config("{\n  \"state\": {\"kind\": \"fock\", \"n\": 1},\n  \"bogus\": 1\n}", "x.json").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut c = parse_config(MINIMAL, "inline").unwrap();
        c.state = StateSpec::Fock { n: 5, dim: 3 };
        c.gain = -1.0;
        c.analyses = vec![AnalysisRequest::Marginal { histogram: HistogramSpec { bins: 0, range: (1.0, 0.0) } }];
        let ConfigError::Invalid(issues) = c.validate().unwrap_err() else { panic!() };
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, ["state", "gain", "analyses[0].histogram.bins", "analyses[0].histogram.range"]);
    }
}
