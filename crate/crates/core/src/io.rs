//! File formats: JSON for states and trace metadata, CSV for tables, and a
//! raw little-endian binary layout for large trace matrices.
//!
//! Binary traces: the 8 ASCII bytes `THDSIM01`, row count and column count as
//! u32 LE, then rows × cols f64 LE in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::QuadratureRecord;
use crate::error::{Error, Result};
use crate::modes::{make_mode, Completion, ModeShape, TemporalMode, TimeGrid};
use crate::phase_space::MarginalDistribution;
use crate::sim::{Provenance, TraceEnsemble};
use crate::state::{QuantumState, StateMetadata};

pub const BINARY_MAGIC: &[u8; 8] = b"THDSIM01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub dim: usize,
    pub rho_real: Vec<Vec<f64>>,
    pub rho_imag: Vec<Vec<f64>>,
    #[serde(default)]
    pub metadata: StateMetadata,
}

impl StateFile {
    pub fn from_state(state: &QuantumState) -> Self {
        let d = state.dim();
        let rho = state.rho();
        StateFile {
            dim: d,
            rho_real: (0..d).map(|i| (0..d).map(|j| rho[(i, j)].re).collect()).collect(),
            rho_imag: (0..d).map(|i| (0..d).map(|j| rho[(i, j)].im).collect()).collect(),
            metadata: state.metadata().clone(),
        }
    }

    pub fn into_state(self) -> Result<QuantumState> {
        let d = self.dim;
        let square = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
        if d == 0 || !square(&self.rho_real) || !square(&self.rho_imag) {
            return Err(Error::Format(format!("density matrix is not {d}×{d}")));
        }
        let rho = DMatrix::from_fn(d, d, |i, j| Complex64::new(self.rho_real[i][j], self.rho_imag[i][j]));
        QuantumState::from_density(rho, self.metadata)
    }
}

pub fn write_state_json(path: &Path, state: &QuantumState) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &StateFile::from_state(state))?;
    Ok(())
}

pub fn read_state_json(path: &Path) -> Result<QuantumState> {
    let f: StateFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    f.into_state()
}

/// Writes `# key=value` comment lines followed by a CSV table.
pub fn write_table(path: &Path, comments: &[(&str, String)], header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if header.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Format("ragged table".into()));
    }
    let mut file = BufWriter::new(File::create(path)?);
    for (k, v) in comments {
        writeln!(file, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| format_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Reads a CSV table, skipping `#` comments. Returns the header and columns.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Format(format!("row {} has {} fields, expected {}", line + 1, rec.len(), header.len())));
        }
        for (c, field) in columns.iter_mut().zip(rec.iter()) {
            c.push(field.parse().map_err(|_| Error::Format(format!("row {}: not a number: {field:?}", line + 1)))?);
        }
    }
    Ok((header, columns))
}

fn column<'a>(header: &[String], columns: &'a [Vec<f64>], name: &str) -> Result<&'a [f64]> {
    header
        .iter()
        .position(|h| h == name)
        .map(|i| columns[i].as_slice())
        .ok_or_else(|| Error::Format(format!("missing column {name:?}")))
}

pub fn write_marginal_csv(path: &Path, m: &MarginalDistribution) -> Result<()> {
    let comments = [("theta", format!("{}", m.theta())), ("state", m.label().to_string())];
    if m.has_cdf() {
        write_table(path, &comments, &["q", "pdf", "cdf"], &[m.q(), m.pdf(), m.cdf()])
    } else {
        write_table(path, &comments, &["q", "pdf"], &[m.q(), m.pdf()])
    }
}

pub fn write_mode_csv(path: &Path, mode: &TemporalMode) -> Result<()> {
    write_table(path, &[], &["t", "amplitude"], &[&mode.times(), mode.amplitude()])
}

/// Reads a (t, amplitude) table. The times must be uniformly spaced; the
/// amplitude is normalized on import.
pub fn read_mode_csv(path: &Path) -> Result<TemporalMode> {
    let (h, c) = read_table(path)?;
    let t = column(&h, &c, "t")?;
    let a = column(&h, &c, "amplitude")?;
    let grid = uniform_grid(t)?;
    make_mode(ModeShape::Custom { samples: a.to_vec() }, grid)
}

fn uniform_grid(t: &[f64]) -> Result<TimeGrid> {
    if t.len() < 2 {
        return Err(Error::Format("a time axis needs at least two samples".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let uniform = t
        .iter()
        .enumerate()
        .all(|(k, &v)| (v - (t[0] + k as f64 * dt)).abs() <= 1e-6 * dt.abs());
    if !uniform || !(dt > 0.0) {
        return Err(Error::Format("time samples are not uniformly increasing".into()));
    }
    TimeGrid::new(t[0], dt, t.len())
}

/// The first `count` basis modes as columns t, f0, f1, ...
pub fn write_basis_csv(path: &Path, grid: TimeGrid, basis: &impl Completion, count: usize) -> Result<()> {
    let count = count.min(basis.bins());
    let cols: Vec<Vec<f64>> = std::iter::once(grid.times()).chain((0..count).map(|j| basis.column(j))).collect();
    let names: Vec<String> = std::iter::once("t".to_string()).chain((0..count).map(|j| format!("f{j}"))).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_table(path, &[], &names, &refs)
}

pub fn write_records_csv(path: &Path, records: &[QuadratureRecord]) -> Result<()> {
    let theta: Vec<f64> = records.iter().map(|r| r.theta).collect();
    let q: Vec<f64> = records.iter().map(|r| r.q).collect();
    write_table(path, &[], &["theta", "q"], &[&theta, &q])
}

pub fn read_records_csv(path: &Path) -> Result<Vec<QuadratureRecord>> {
    let (h, c) = read_table(path)?;
    let theta = column(&h, &c, "theta")?;
    let q = column(&h, &c, "q")?;
    Ok(theta.iter().zip(q).map(|(&theta, &q)| QuadratureRecord { theta, q }).collect())
}

/// Metadata stored next to a trace matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSidecar {
    pub t_grid: TimeGrid,
    pub theta_per_trace: Vec<f64>,
    pub gain: f64,
    pub seed: u64,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl TraceSidecar {
    pub fn from_ensemble(e: &TraceEnsemble) -> Self {
        TraceSidecar {
            t_grid: e.grid(),
            theta_per_trace: e.theta().to_vec(),
            gain: e.gain(),
            seed: e.seed(),
            provenance: e.provenance().cloned(),
        }
    }

    fn into_ensemble(self, traces: Vec<f64>) -> Result<TraceEnsemble> {
        let e = TraceEnsemble::from_traces(self.t_grid, traces, self.theta_per_trace, self.gain, self.seed)?;
        Ok(match self.provenance {
            Some(p) => e.with_provenance(p),
            None => e,
        })
    }
}

pub fn write_sidecar(path: &Path, e: &TraceEnsemble) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &TraceSidecar::from_ensemble(e))?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<TraceSidecar> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One trace per row, one time bin per column, no header.
pub fn write_traces_csv(path: &Path, e: &TraceEnsemble) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in e.rows() {
        w.write_record(row.iter().map(|&v| format_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless row-per-trace CSV (`#` comments allowed).
pub fn read_trace_matrix_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let (mut rows, mut cols) = (0usize, 0usize);
    for rec in r.records() {
        let rec = rec?;
        if rows == 0 {
            cols = rec.len();
        } else if rec.len() != cols {
            return Err(Error::Format(format!("trace {rows} has {} samples, expected {cols}", rec.len())));
        }
        for field in rec.iter() {
            data.push(field.parse().map_err(|_| Error::Format(format!("trace {rows}: not a number: {field:?}")))?);
        }
        rows += 1;
    }
    Ok((rows, cols, data))
}

pub fn read_traces_csv(path: &Path, sidecar: TraceSidecar) -> Result<TraceEnsemble> {
    let (rows, cols, data) = read_trace_matrix_csv(path)?;
    check_shape(rows, cols, &sidecar)?;
    sidecar.into_ensemble(data)
}

fn check_shape(rows: usize, cols: usize, s: &TraceSidecar) -> Result<()> {
    if cols != s.t_grid.bins {
        return Err(Error::DimensionMismatch(cols, s.t_grid.bins));
    }
    if rows != s.theta_per_trace.len() {
        return Err(Error::DimensionMismatch(rows, s.theta_per_trace.len()));
    }
    Ok(())
}

pub fn write_traces_binary(path: &Path, e: &TraceEnsemble) -> Result<()> {
    let rows = u32::try_from(e.len()).map_err(|_| Error::Format("too many traces for the binary format".into()))?;
    let cols = u32::try_from(e.bins()).map_err(|_| Error::Format("too many bins for the binary format".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in e.traces() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_matrix_binary(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| Error::Format("truncated header".into()))?;
    if &header[..8] != BINARY_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format(format!("expected {} data bytes, found {}", rows * cols * 8, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((rows, cols, data))
}

pub fn read_traces_binary(path: &Path, sidecar: TraceSidecar) -> Result<TraceEnsemble> {
    let (rows, cols, data) = read_trace_matrix_binary(path)?;
    check_shape(rows, cols, &sidecar)?;
    sidecar.into_ensemble(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::complete_basis;
    use crate::phase_space::{build_cdf, marginal, QuadratureGrid};
    use crate::sim::{simulate_ensemble, EnsembleSpec, ThetaSchedule};
    use tempfile::tempdir;

    fn ensemble() -> TraceEnsemble {
        let g = TimeGrid::centered(1e-9, 16).unwrap();
        let mode = make_mode(ModeShape::Gaussian { center: 0.0, width: 2e-9 }, g).unwrap();
        let s = QuantumState::fock(1, 10).unwrap();
        let v = QuantumState::vacuum(10).unwrap();
        let mut spec = EnsembleSpec::new(&s, &mode, &v);
        spec.traces = 7;
        spec.seed = 99;
        spec.schedule = ThetaSchedule::UniformScan { phases: 3 };
        simulate_ensemble(&spec).unwrap()
    }

    #[test]
    fn state_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = QuantumState::squeezed(Complex64::new(0.3, 0.2), 12).unwrap();
        write_state_json(&p, &s).unwrap();
        let back = read_state_json(&p).unwrap();
        assert_eq!(back.rho(), s.rho());
        assert_eq!(back.label(), s.label());
    }

    #[test]
    fn malformed_state_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"{"dim": 2, "rho_real": [[1.0, 0.0]], "rho_imag": [[0.0, 0.0], [0.0, 0.0]]}"#).unwrap();
        assert!(matches!(read_state_json(&p), Err(Error::Format(_))));
        std::fs::write(&p, r#"{"dim": 1, "rho_real": [[2.0]], "rho_imag": [[0.0]]}"#).unwrap();
        assert!(read_state_json(&p).is_err());
    }

    #[test]
    fn traces_round_trip_both_formats() {
        let dir = tempdir().unwrap();
        let e = ensemble();
        let side = dir.path().join("t.json");
        write_sidecar(&side, &e).unwrap();

        let csv_path = dir.path().join("t.csv");
        write_traces_csv(&csv_path, &e).unwrap();
        let back = read_traces_csv(&csv_path, read_sidecar(&side).unwrap()).unwrap();
        assert_eq!(back.traces(), e.traces());
        assert_eq!(back.theta(), e.theta());
        assert_eq!(back.provenance(), e.provenance());

        let bin = dir.path().join("t.bin");
        write_traces_binary(&bin, &e).unwrap();
        assert_eq!(std::fs::metadata(&bin).unwrap().len(), 16 + 7 * 16 * 8);
        let back = read_traces_binary(&bin, read_sidecar(&side).unwrap()).unwrap();
        assert_eq!(back.traces(), e.traces());
    }

    #[test]
    fn binary_rejects_corruption() {
        let dir = tempdir().unwrap();
        let bin = dir.path().join("t.bin");
        write_traces_binary(&bin, &ensemble()).unwrap();
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.pop();
        std::fs::write(&bin, &bytes).unwrap();
        assert!(matches!(read_trace_matrix_binary(&bin), Err(Error::Format(_))));
        bytes[0] = b'X';
        std::fs::write(&bin, &bytes).unwrap();
        assert!(matches!(read_trace_matrix_binary(&bin), Err(Error::Format(_))));
    }

    #[test]
    fn sidecar_shape_checked() {
        let dir = tempdir().unwrap();
        let e = ensemble();
        let p = dir.path().join("t.csv");
        write_traces_csv(&p, &e).unwrap();
        let mut s = TraceSidecar::from_ensemble(&e);
        s.theta_per_trace.pop();
        assert!(matches!(read_traces_csv(&p, s), Err(Error::DimensionMismatch(7, 6))));
    }

    #[test]
    fn mode_and_records_round_trip() {
        let dir = tempdir().unwrap();
        let g = TimeGrid::centered(1e-9, 32).unwrap();
        let mode = make_mode(ModeShape::DoubleExponential { center: 0.0, rate: 3e8 }, g).unwrap();
        let p = dir.path().join("m.csv");
        write_mode_csv(&p, &mode).unwrap();
        let back = read_mode_csv(&p).unwrap();
        for (a, b) in back.amplitude().iter().zip(mode.amplitude()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(back.grid().matches(&g));

        let r = vec![QuadratureRecord { theta: 0.5, q: -1.25 }, QuadratureRecord { theta: 1.0, q: 3.0 }];
        let p = dir.path().join("r.csv");
        write_records_csv(&p, &r).unwrap();
        assert_eq!(read_records_csv(&p).unwrap(), r);
    }

    #[test]
    fn marginal_and_basis_tables() {
        let dir = tempdir().unwrap();
        let m = build_cdf(marginal(&QuantumState::vacuum(5).unwrap(), 0.25, QuadratureGrid::default()).unwrap()).unwrap();
        let p = dir.path().join("m.csv");
        write_marginal_csv(&p, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# theta=0.25\n# state=vacuum"));
        let (h, c) = read_table(&p).unwrap();
        assert_eq!(h, ["q", "pdf", "cdf"]);
        assert_eq!(c[1], m.pdf());

        let g = TimeGrid::centered(1.0, 8).unwrap();
        let mode = make_mode(ModeShape::Gaussian { center: 0.0, width: 1.5 }, g).unwrap();
        let p = dir.path().join("b.csv");
        write_basis_csv(&p, g, &complete_basis(&mode), 3).unwrap();
        let (h, c) = read_table(&p).unwrap();
        assert_eq!(h, ["t", "f0", "f1", "f2"]);
        for (a, b) in c[1].iter().zip(mode.amplitude()) {
            assert!((a.abs() - b.abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn non_uniform_mode_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "t,amplitude\n0,1\n1,2\n3,1\n").unwrap();
        assert!(matches!(read_mode_csv(&p), Err(Error::Format(_))));
    }
}
