//! One sub-run per value of a single config parameter.

use std::fs;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};
use thdsim::io::write_table;

use crate::config::{ConfigError, ExperimentConfig};
use crate::run::{config_hash, run_experiment, sha256_hex, FileEntry, Manifest, RunError, RunReport, MANIFEST};

pub const SWEEP_TABLE: &str = "sweep.csv";

/// Sub-run seed: the master seed XOR the first 8 bytes (LE) of
/// sha256("<path>#<index>").
pub fn sub_seed(seed: u64, path: &str, index: usize) -> u64 {
    let digest = Sha256::digest(format!("{path}#{index}").as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Returns `config` with the dotted `path` (array elements by index, e.g.
/// `analyses.0.settings.dim`) set to `value`. The field must already be
/// present in the serialized config.
pub fn with_parameter(config: &ExperimentConfig, path: &str, value: f64) -> Result<ExperimentConfig, ConfigError> {
    let mut root = serde_json::to_value(config).map_err(|e| ConfigError::Other(e.to_string()))?;
    let mut node = &mut root;
    for segment in path.split('.') {
        let next = match node {
            Value::Object(map) => map.get_mut(segment),
            Value::Array(items) => segment.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        };
        node = next.ok_or_else(|| ConfigError::Other(format!("sweep parameter {path:?}: no field {segment:?}")))?;
    }
    *node = if (node.is_u64() || node.is_i64()) && value.fract() == 0.0 {
        Value::from(value as i64)
    } else if node.is_number() {
        Value::from(value)
    } else {
        return Err(ConfigError::Other(format!("sweep parameter {path:?} is not numeric")));
    };
    serde_json::from_value(root).map_err(|e| ConfigError::Other(format!("sweep parameter {path:?}: {e}")))
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<(f64, RunReport)>,
    pub manifest: Manifest,
}

/// Runs every point into `out_dir/point_NNN` and writes `sweep.csv` with one
/// row per value: value, quadrature variance, mean B per requested
/// reference, and MLE fidelities when requested.
pub fn sweep(
    config: &ExperimentConfig,
    path: &str,
    values: &[f64],
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<SweepReport, RunError> {
    if values.is_empty() {
        return Err(ConfigError::Other("sweep needs at least one value".into()).into());
    }
    let mut configs = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let mut c = with_parameter(config, path, v)?;
        c.seed = sub_seed(config.seed, path, i);
        c.output_dir = None;
        c.validate()?;
        configs.push(c);
    }
    fs::create_dir_all(out_dir)?;

    let mut points = Vec::new();
    for (i, (c, &v)) in configs.iter().zip(values).enumerate() {
        let report = run_experiment(c, &out_dir.join(format!("point_{i:03}")), threads)?;
        points.push((v, report));
    }

    let keys: Vec<String> = config.analyses.iter().map(|a| a.key()).collect();
    let mut header = vec!["value".to_string(), "variance".to_string()];
    let mut metrics: Vec<(String, &str)> = Vec::new();
    for key in &keys {
        if key.starts_with("bhattacharyya") {
            metrics.push((key.clone(), "mean"));
        } else if key == "mle" {
            metrics.push((key.clone(), "fidelity_true"));
            metrics.push((key.clone(), "fidelity_vacuum"));
        } else if key == "principal_mode" {
            metrics.push((key.clone(), "overlap"));
        }
    }
    header.extend(metrics.iter().map(|(k, f)| format!("{k}.{f}")));
    let mut columns = vec![Vec::new(); header.len()];
    for (v, report) in &points {
        columns[0].push(*v);
        columns[1].push(report.summary["recovered"]["variance"].as_f64().unwrap_or(f64::NAN));
        for (j, (k, f)) in metrics.iter().enumerate() {
            columns[2 + j].push(report.summary[k][f].as_f64().unwrap_or(f64::NAN));
        }
    }
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    write_table(&out_dir.join(SWEEP_TABLE), &[("parameter", path.to_string())], &names, &refs)?;

    let mut files = Vec::new();
    let bytes = fs::read(out_dir.join(SWEEP_TABLE))?;
    files.push(FileEntry { name: SWEEP_TABLE.into(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
    for (i, (_, report)) in points.iter().enumerate() {
        for f in &report.manifest.files {
            files.push(FileEntry { name: format!("point_{i:03}/{}", f.name), ..f.clone() });
        }
    }
    let manifest = Manifest { status: "complete".into(), config_sha256: config_hash(config), files, error: None };
    fs::write(out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(SweepReport { points, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn base() -> ExperimentConfig {
        parse_config(
            r#"{"state": {"kind": "fock", "n": 1, "dim": 10},
                "mode": {"shape": {"kind": "gaussian", "center": 0.0, "width": 4e-9}, "bins": 32},
                "traces": 10,
                "analyses": [{"kind": "mle", "settings": {"dim": 6}}]}"#,
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn sets_nested_and_integer_fields() {
        let c = with_parameter(&base(), "error_model.timing_jitter_sigma", 2e-9).unwrap();
        assert_eq!(c.error_model.timing_jitter_sigma, 2e-9);
        let c = with_parameter(&base(), "analyses.0.settings.dim", 9.0).unwrap();
        match &c.analyses[0] {
            crate::config::AnalysisRequest::Mle { settings } => assert_eq!(settings.dim, 9),
            _ => unreachable!(),
        }
        assert!(with_parameter(&base(), "error_model.nope", 1.0).is_err());
        assert!(with_parameter(&base(), "state.kind", 1.0).is_err());
    }

    #[test]
    fn sub_seeds_differ_and_repeat() {
        let a = sub_seed(7, "gain", 0);
        assert_eq!(a, sub_seed(7, "gain", 0));
        assert_ne!(a, sub_seed(7, "gain", 1));
        assert_ne!(a, sub_seed(7, "seed", 0));
    }

    #[test]
    fn empty_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = sweep(&base(), "gain", &[], dir.path(), Some(1)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
