//! Executes one experiment and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thdsim::analysis::{
    bhattacharyya, estimate_principal_mode_with_background, histogram_marginal, mle_reconstruct,
    phase_averaged_marginal, pointwise_variance, quadrature_moments, recover_quadratures, EmpiricalMarginal,
    QuadratureRecord,
};
use thdsim::io::{write_records_csv, write_sidecar, write_state_json, write_table, write_traces_binary, write_traces_csv};
use thdsim::phase_space::MarginalDistribution;
use thdsim::sim::mode_mismatch_marginal;
use thdsim::state::StateMetadata;
use thdsim::{fidelity, marginal, overlap, shift_mode, simulate_ensemble, EnsembleSpec, QuantumState, TemporalMode, TraceEnsemble};

use crate::config::{AnalysisRequest, ConfigError, ExperimentConfig, HistogramSpec, Reference, TraceFormat};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "THDSIM_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "thdsim-out";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(#[from] thdsim::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for configuration problems, 3 for anything raised while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// "complete" or "partial".
    pub status: String,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Value,
}

/// --out, then the config's output_dir, then $THDSIM_OUT_DIR, then ./thdsim-out.
pub fn resolve_out_dir(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the config as it affects results (the output directory does not).
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output_dir = None;
    sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
}

/// Runs `config` on a pool of `threads` workers (all cores when `None`).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunReport, RunError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| ConfigError::Other(format!("thread pool: {e}")))?;
    pool.install(|| execute(config, out_dir))
}

/// Tracks every file written so the manifest can list it.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn manifest(&self, config: &ExperimentConfig, error: Option<String>) -> Result<Manifest, RunError> {
        let mut names = self.files.clone();
        names.sort();
        names.dedup();
        let mut files = Vec::new();
        for name in names {
            let path = self.dir.join(&name);
            if let Ok(bytes) = fs::read(&path) {
                files.push(FileEntry { bytes: bytes.len() as u64, sha256: sha256_hex(&bytes), name });
            }
        }
        let manifest = Manifest {
            status: if error.is_some() { "partial" } else { "complete" }.to_string(),
            config_sha256: config_hash(config),
            files,
            error,
        };
        fs::write(self.dir.join(MANIFEST), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
        Ok(manifest)
    }
}

fn execute(config: &ExperimentConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), files: Vec::new() };
    let mut summary = Map::new();
    match produce(config, &mut out, &mut summary) {
        Ok(()) => {
            let manifest = out.manifest(config, None)?;
            Ok(RunReport { out_dir: out_dir.to_path_buf(), manifest, summary: Value::Object(summary) })
        }
        Err(e) => {
            // whatever was written stays, flagged as partial
            out.manifest(config, Some(e.to_string()))?;
            Err(e)
        }
    }
}

fn produce(config: &ExperimentConfig, out: &mut Outputs, summary: &mut Map<String, Value>) -> Result<(), RunError> {
    let state = config.state.build()?;
    let background = config.background.build()?;
    let mode = config.mode.build()?;
    let mut spec = EnsembleSpec::new(&state, &mode, &background);
    spec.schedule = config.theta.clone();
    spec.gain = config.gain;
    spec.error_model = config.error_model;
    spec.traces = config.traces;
    spec.seed = config.seed;
    spec.grid = config.quadrature_grid;
    let ensemble = simulate_ensemble(&spec)?;

    let offset = config.error_model.measurement_mode_offset;
    let analysis_mode = if offset != 0.0 { shift_mode(&mode, offset)? } else { mode.clone() };
    let records = recover_quadratures(&ensemble, &analysis_mode)?;
    let (mean, variance) = quadrature_moments(&records);

    summary.insert("state".into(), json!(state.label()));
    summary.insert("background".into(), json!(background.label()));
    summary.insert("traces".into(), json!(config.traces));
    summary.insert("bins".into(), json!(mode.len()));
    summary.insert("seed".into(), json!(config.seed));
    summary.insert("mode_overlap".into(), json!(overlap(&mode, &analysis_mode)?));
    summary.insert(
        "recovered".into(),
        json!({ "mean": mean, "variance": variance, "variance_over_vacuum": variance / 0.5 }),
    );
    let warnings = ensemble.provenance().map(|p| p.warnings.clone()).unwrap_or_default();
    summary.insert("warnings".into(), json!(warnings));

    let ctx = Context { config, state: &state, mode: &mode, analysis_mode: &analysis_mode, ensemble: &ensemble, records: &records };
    for request in &config.analyses {
        let (key, value) = ctx.analyse(request, out)?;
        summary.insert(key, value);
    }
    let path = out.path(SUMMARY);
    fs::write(path, serde_json::to_string_pretty(&Value::Object(summary.clone())).expect("summary serializes") + "\n")?;
    Ok(())
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    state: &'a QuantumState,
    mode: &'a TemporalMode,
    analysis_mode: &'a TemporalMode,
    ensemble: &'a TraceEnsemble,
    records: &'a [QuadratureRecord],
}

impl Context<'_> {
    fn analyse(&self, request: &AnalysisRequest, out: &mut Outputs) -> Result<(String, Value), RunError> {
        let key = request.key();
        let value = match request {
            AnalysisRequest::VarianceMap => {
                let v = pointwise_variance(self.ensemble)?;
                let sq: Vec<f64> = self.mode.amplitude().iter().map(|a| a * a).collect();
                write_table(&out.path("variance_map.csv"), &[], &["t", "variance", "mode_squared"], &[&self.mode.times(), &v, &sq])?;
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                json!({ "mean": mean, "max": max })
            }
            AnalysisRequest::Quadratures => {
                write_records_csv(&out.path("quadratures.csv"), self.records)?;
                json!({ "records": self.records.len() })
            }
            AnalysisRequest::Marginal { histogram } => {
                let mut cols: [Vec<f64>; 6] = Default::default();
                let mut phases = Vec::new();
                for theta in self.config.theta.distinct() {
                    let h = self.histogram(theta, histogram)?;
                    let m = marginal(self.state, theta, self.config.quadrature_grid)?;
                    for (i, c) in h.centers().iter().enumerate() {
                        cols[0].push(theta);
                        cols[1].push(h.bin_edges[i]);
                        cols[2].push(h.bin_edges[i + 1]);
                        cols[3].push(h.counts[i] as f64);
                        cols[4].push(h.normalized_pdf[i]);
                        cols[5].push(m.pdf_at(*c));
                    }
                    phases.push(json!({ "theta": theta, "in_range": h.in_range(), "underflow": h.underflow, "overflow": h.overflow }));
                }
                let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
                write_table(&out.path("marginal.csv"), &[("state", self.state.label().to_string())], &["theta", "bin_lo", "bin_hi", "count", "pdf", "analytic_pdf"], &refs)?;
                json!({ "phases": phases })
            }
            AnalysisRequest::Bhattacharyya { reference, histogram } => {
                let eta = overlap(self.mode, self.analysis_mode)?.clamp(0.0, 1.0);
                let (mut thetas, mut counts, mut bs) = (Vec::new(), Vec::new(), Vec::new());
                for theta in self.config.theta.distinct() {
                    let h = self.histogram(theta, histogram)?;
                    let r = self.reference(*reference, theta, eta)?;
                    thetas.push(theta);
                    counts.push(h.in_range() as f64);
                    bs.push(bhattacharyya(&h, &r)?);
                }
                write_table(&out.path(&format!("{key}.csv")), &[], &["theta", "records", "b"], &[&thetas, &counts, &bs])?;
                let mean = bs.iter().sum::<f64>() / bs.len() as f64;
                let mut v = json!({ "per_phase": bs, "theta": thetas, "mean": mean });
                if *reference == Reference::ModeMismatch {
                    v["eta"] = json!(eta);
                }
                v
            }
            AnalysisRequest::PrincipalMode { background_variance } => {
                match estimate_principal_mode_with_background(self.ensemble, *background_variance) {
                    Ok(p) => {
                        let times = self.mode.times();
                        write_table(&out.path("principal_mode.csv"), &[], &["t", "estimate", "true"], &[&times, p.mode.amplitude(), self.mode.amplitude()])?;
                        let idx: Vec<f64> = (0..p.eigenvalues.len()).map(|i| i as f64).collect();
                        write_table(&out.path("spectrum.csv"), &[], &["index", "eigenvalue"], &[&idx, &p.eigenvalues])?;
                        json!({
                            "overlap": overlap(&p.mode, self.mode)?.abs(),
                            "ratio": p.ratio(),
                            "leading": &p.eigenvalues[..p.eigenvalues.len().min(5)],
                            "noise_edge": p.noise_edge,
                            "warnings": p.warnings,
                        })
                    }
                    Err(thdsim::Error::NoSignal { eigenvalue, threshold }) => {
                        json!({ "no_signal": true, "eigenvalue": eigenvalue, "threshold": threshold })
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            AnalysisRequest::Mle { settings } => {
                let outcome = mle_reconstruct(self.records, *settings)?;
                write_state_json(&out.path("mle_state.json"), &outcome.state)?;
                let it: Vec<f64> = (0..outcome.log_likelihood.len()).map(|i| i as f64).collect();
                write_table(&out.path("mle_likelihood.csv"), &[], &["iteration", "log_likelihood"], &[&it, &outcome.log_likelihood])?;
                let dim = outcome.state.dim().max(self.state.dim());
                let rec = embed(&outcome.state, dim)?;
                let truth = embed(self.state, dim)?;
                json!({
                    "fidelity_true": fidelity(&rec, &truth)?,
                    "fidelity_vacuum": fidelity(&rec, &QuantumState::vacuum(dim)?)?,
                    "iterations": outcome.iterations,
                    "converged": outcome.converged,
                    "mean_photon_number": outcome.state.mean_photon_number(),
                    "warnings": outcome.warnings,
                })
            }
            AnalysisRequest::Traces { format, limit } => {
                let k = limit.unwrap_or(self.ensemble.len()).min(self.ensemble.len());
                let sub = subset(self.ensemble, k)?;
                match format {
                    TraceFormat::Csv => write_traces_csv(&out.path("traces.csv"), &sub)?,
                    TraceFormat::Binary => write_traces_binary(&out.path("traces.bin"), &sub)?,
                }
                write_sidecar(&out.path("traces.json"), &sub)?;
                json!({ "exported": k })
            }
        };
        Ok((key, value))
    }

    fn histogram(&self, theta: f64, spec: &HistogramSpec) -> thdsim::Result<EmpiricalMarginal> {
        histogram_marginal(self.records, Some((theta - 1e-9, theta + 1e-9)), spec.bins, spec.range)
    }

    fn reference(&self, reference: Reference, theta: f64, eta: f64) -> thdsim::Result<MarginalDistribution> {
        let grid = self.config.quadrature_grid;
        match reference {
            Reference::Ideal => marginal(self.state, theta, grid),
            Reference::ModeMismatch => mode_mismatch_marginal(self.state, eta, theta, grid),
            Reference::PhaseAveraged => {
                phase_averaged_marginal(self.state, theta, self.config.error_model.phase_jitter_sigma, grid)
            }
        }
    }
}

/// `state` on a Fock space of dimension `dim` ≥ its own, padded with zeros.
fn embed(state: &QuantumState, dim: usize) -> thdsim::Result<QuantumState> {
    let d = state.dim();
    if d == dim {
        return Ok(state.clone());
    }
    let rho = DMatrix::from_fn(dim, dim, |i, j| if i < d && j < d { state.rho()[(i, j)] } else { Complex64::new(0.0, 0.0) });
    QuantumState::from_density(rho, StateMetadata { label: state.label().to_string(), ..Default::default() })
}

fn subset(e: &TraceEnsemble, k: usize) -> thdsim::Result<TraceEnsemble> {
    let sub = TraceEnsemble::from_traces(e.grid(), e.traces()[..k * e.bins()].to_vec(), e.theta()[..k].to_vec(), e.gain(), e.seed())?;
    Ok(match e.provenance() {
        Some(p) => sub.with_provenance(p.clone()),
        None => sub,
    })
}
