//! File formats: datasets and traces as CSV, models and run manifests as JSON.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::DataGenConfig;
use crate::error::{Error, Result};
use crate::evaluation::{CvOptions, CvResult};
use crate::model::{Dataset, IterRecord, ModelParams, RegConfig, Role, SolveReport, SolverConfig};

pub const TRACE_HEADER: &str = "iter,objective,iterate_change,dist_to_symmetry,elapsed_seconds";

pub const CV_HEADER: &str =
    "lambda,train_mean,train_std,val_mean,val_std,test_mean,test_std,n_ok,failures,best_lambda";

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_finite(path: &Path, line: usize, column: &str, token: &str) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("column {column}: cannot parse {token:?}"),
        )
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("column {column}: non-finite value {token:?}"),
        ));
    }
    Ok(v)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Reads a CSV with header `y,x1,...,xN`. Line numbers in errors are 1-based file lines.
pub fn read_dataset(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() || header.get(0).map(str::trim) != Some("y") {
        return Err(parse_err(path, 1, "header must start with column \"y\""));
    }
    let n = header.len() - 1;
    for (j, name) in header.iter().skip(1).enumerate() {
        if name.trim() != format!("x{}", j + 1) {
            return Err(parse_err(
                path,
                1,
                format!("expected column x{} in header, found {name:?}", j + 1),
            ));
        }
    }

    let mut y = Vec::new();
    let mut x = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != n + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", n + 1, record.len()),
            ));
        }
        y.push(parse_finite(path, line, "y", &record[0])?);
        for j in 0..n {
            x.push(parse_finite(
                path,
                line,
                &format!("x{}", j + 1),
                &record[j + 1],
            )?);
        }
    }
    let l = y.len();
    let x = Array2::from_shape_vec((l, n), x).map_err(|e| parse_err(path, 0, e.to_string()))?;
    Dataset::new(x, Array1::from(y), role)
}

pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path.as_ref())?);
    let mut header = vec!["y".to_string()];
    header.extend((1..=data.n_features()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (x, y) in data.features().rows().into_iter().zip(data.responses()) {
        let mut row = vec![fmt_f64(*y)];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    v_plus: Vec<f64>,
    v_minus: Vec<f64>,
    /// Row-major.
    theta: Vec<f64>,
}

pub fn write_model(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let file = ModelFile {
        n: params.n_features(),
        v_plus: params.v_plus.to_vec(),
        v_minus: params.v_minus.to_vec(),
        theta: params.theta.iter().copied().collect(),
    };
    let mut w = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let mut text = String::new();
    File::open(path.as_ref())?.read_to_string(&mut text)?;
    model_from_json(&text)
}

/// Parses a model document, listing every missing or mistyped field at once.
pub fn model_from_json(text: &str) -> Result<ModelParams> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Schema(vec!["<top level object>".into()]))?;
    let bad: Vec<String> = [
        ("n", obj.get("n").is_some_and(|v| v.is_u64())),
        ("v_plus", obj.get("v_plus").is_some_and(|v| v.is_array())),
        ("v_minus", obj.get("v_minus").is_some_and(|v| v.is_array())),
        ("theta", obj.get("theta").is_some_and(|v| v.is_array())),
    ]
    .into_iter()
    .filter(|(_, ok)| !ok)
    .map(|(name, _)| name.to_string())
    .collect();
    if !bad.is_empty() {
        return Err(Error::Schema(bad));
    }
    let file: ModelFile = serde_json::from_value(value)?;
    let n = file.n;
    let theta = Array2::from_shape_vec((n, n), file.theta)
        .map_err(|_| Error::Schema(vec![format!("theta (expected {} entries)", n * n)]))?;
    let mut bad = Vec::new();
    if file.v_plus.len() != n {
        bad.push(format!("v_plus (expected {n} entries)"));
    }
    if file.v_minus.len() != n {
        bad.push(format!("v_minus (expected {n} entries)"));
    }
    if !bad.is_empty() {
        return Err(Error::Schema(bad));
    }
    ModelParams::new(Array1::from(file.v_plus), Array1::from(file.v_minus), theta)
}

pub fn write_trace(report: &SolveReport, path: impl AsRef<Path>) -> Result<()> {
    if report.records.is_empty() {
        return Err(Error::InvalidValue {
            field: "report",
            reason: "trace has no records".into(),
        });
    }
    let mut w = create(path.as_ref())?;
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &report.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iter,
            fmt_f64(r.objective),
            fmt_f64(r.iterate_change),
            fmt_f64(r.dist_to_symmetry),
            fmt_f64(r.elapsed_seconds)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<IterRecord>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        _ => {
            return Err(parse_err(
                path,
                1,
                format!("expected header {TRACE_HEADER:?}"),
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let iter = f[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("iter: cannot parse {:?}", f[0])))?;
        // Objective values may legitimately be infinite in principle, so parse loosely.
        let num = |k: usize, name: &str| -> Result<f64> {
            f[k].parse()
                .map_err(|_| parse_err(path, line_no, format!("{name}: cannot parse {:?}", f[k])))
        };
        out.push(IterRecord {
            iter,
            objective: num(1, "objective")?,
            iterate_change: num(2, "iterate_change")?,
            dist_to_symmetry: num(3, "dist_to_symmetry")?,
            elapsed_seconds: num(4, "elapsed_seconds")?,
        });
    }
    Ok(out)
}

pub fn write_cv(result: &CvResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    writeln!(w, "{CV_HEADER}")?;
    for r in &result.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.lambda),
            fmt_f64(r.train_mse.mean),
            fmt_f64(r.train_mse.std),
            fmt_f64(r.val_mse.mean),
            fmt_f64(r.val_mse.std),
            fmt_f64(r.test_mse.mean),
            fmt_f64(r.test_mse.std),
            r.val_mse.count,
            r.failures,
            fmt_f64(result.best_lambda)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path.as_ref())?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            path: path.as_ref().to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub lambda_grid: Vec<f64>,
    pub n_seeds: usize,
    pub options: CvOptions,
}

/// Everything needed to rerun a command, plus checksums of what it read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument list, enough to rerun the command.
    #[serde(default)]
    pub args: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    #[serde(default)]
    pub datagen: Option<DataGenConfig>,
    #[serde(default)]
    pub reg: Option<RegConfig>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub cv: Option<CvSettings>,
    #[serde(default)]
    pub inputs: Vec<FileDigest>,
    #[serde(default)]
    pub outputs: Vec<FileDigest>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        let now = unix_now();
        Self {
            command: command.into(),
            args: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            started_unix: now,
            finished_unix: now,
            datagen: None,
            reg: None,
            solver: None,
            cv: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = create(path.as_ref())?;
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut text = String::new();
        File::open(path.as_ref())?.read_to_string(&mut text)?;
        Ok(serde_json::from_str(&text)?)
    }
}
