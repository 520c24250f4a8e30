//! Shared data types and the on-disk formats.
//!
//! A `LAM1` file is a 24-byte header followed by a row-major little-endian
//! payload:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LAM1"
//! 4       1     version (0x01)
//! 5       1     dtype (0x00 = f32, 0x01 = f64)
//! 6       2     reserved, zero
//! 8       8     u64 rows
//! 16      8     u64 cols
//! 24      ...   rows * cols values
//! ```
//!
//! Metadata lives next to the binary in `<path>.manifest` (JSON). Timelines
//! are tab-separated text with a `label<TAB>onset<TAB>offset` header.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LAM1";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn byte(self) -> u8 {
        match self {
            Dtype::F32 => 0x00,
            Dtype::F64 => 0x01,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0x00 => Ok(Dtype::F32),
            0x01 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Row-major dense matrix of finite values. The storage dtype is remembered so
/// that f32 inputs round-trip bit-exactly; arithmetic is always f64.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    dtype: Dtype,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("core-io", "matrix must have at least one row and one column"));
        }
        if values.len() != rows * cols {
            return Err(Error::invalid(
                "core-io",
                format!("expected {} values for {rows}x{cols}, got {}", rows * cols, values.len()),
            ));
        }
        check_finite(&values, cols)?;
        Ok(Self {
            rows,
            cols,
            dtype: Dtype::F64,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid("core-io", "ragged rows"));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            rows,
            cols,
            dtype: Dtype::F64,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            values.extend(m.row(i).iter());
        }
        Self::new(rows, cols, values)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        if dtype == Dtype::F32 {
            for v in &mut self.values {
                *v = *v as f32 as f64;
            }
        }
        self.dtype = dtype;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        let mut out = Self::new(idx.len(), self.cols, values)?;
        out.dtype = self.dtype;
        Ok(out)
    }
}

fn check_finite(values: &[f64], cols: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite {
            row: p / cols,
            col: p % cols,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Fmri,
    Ecog,
    #[default]
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub subject: String,
    #[serde(default)]
    pub modality: Modality,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub layer: u32,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl Manifest {
    pub fn with_extra(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".manifest");
        PathBuf::from(s)
    }

    pub fn write(&self, data_path: &Path) -> Result<()> {
        let path = Self::sidecar_path(data_path);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Reads the sidecar of `data_path`, if one exists.
    pub fn read(data_path: &Path) -> Result<Option<Self>> {
        let path = Self::sidecar_path(data_path);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| Error::Manifest(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

/// N samples x D ambient dimensions of layer representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    data: DenseMatrix,
    pub manifest: Manifest,
}

impl ActivationMatrix {
    pub fn new(data: DenseMatrix, manifest: Manifest) -> Result<Self> {
        if data.rows() < 2 {
            return Err(Error::invalid("core-io", "activation matrix needs at least 2 samples"));
        }
        Ok(Self { data, manifest })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?, Manifest::default())
    }

    pub fn n_samples(&self) -> usize {
        self.data.rows()
    }

    pub fn n_dims(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn into_data(self) -> DenseMatrix {
        self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.data.select_rows(idx)?, self.manifest.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_matrix(&self.data, &self.manifest, path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (data, manifest) = read_matrix(path)?;
        Self::new(data, manifest.unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Seconds per sample (e.g. one TR).
    Period(f64),
    /// Samples per second.
    Rate(f64),
}

impl Sampling {
    pub fn period(self) -> f64 {
        match self {
            Sampling::Period(p) => p,
            Sampling::Rate(r) => 1.0 / r,
        }
    }

    pub fn rate(self) -> f64 {
        1.0 / self.period()
    }
}

/// Time x channel response matrix (voxels or electrodes).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSeries {
    data: DenseMatrix,
    sampling: Sampling,
    channel_ids: Vec<String>,
    pub manifest: Manifest,
}

impl ResponseSeries {
    pub fn new(data: DenseMatrix, sampling: Sampling, channel_ids: Vec<String>, manifest: Manifest) -> Result<Self> {
        let s = match sampling {
            Sampling::Period(v) | Sampling::Rate(v) => v,
        };
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid("core-io", "sampling period/rate must be positive"));
        }
        if channel_ids.len() != data.cols() {
            return Err(Error::invalid(
                "core-io",
                format!("{} channel ids for {} channels", channel_ids.len(), data.cols()),
            ));
        }
        Ok(Self {
            data,
            sampling,
            channel_ids,
            manifest,
        })
    }

    /// Channels named `0..C`.
    pub fn with_default_ids(data: DenseMatrix, sampling: Sampling, manifest: Manifest) -> Result<Self> {
        let ids = (0..data.cols()).map(|c| c.to_string()).collect();
        Self::new(data, sampling, ids, manifest)
    }

    pub fn n_times(&self) -> usize {
        self.data.rows()
    }

    pub fn n_channels(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    pub fn with_data(&self, data: DenseMatrix) -> Result<Self> {
        Self::new(data, self.sampling, self.channel_ids.clone(), self.manifest.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut manifest = self.manifest.clone();
        match self.sampling {
            Sampling::Period(p) => manifest.extra.insert("sampling_period".into(), p.to_string()),
            Sampling::Rate(r) => manifest.extra.insert("sampling_rate".into(), r.to_string()),
        };
        manifest.extra.insert("channel_ids".into(), self.channel_ids.join(","));
        write_matrix(&self.data, &manifest, path)
    }

    /// Sampling and channel ids come from the manifest; `fallback` is used when
    /// the manifest carries neither a period nor a rate.
    pub fn read(path: &Path, fallback: Option<Sampling>) -> Result<Self> {
        let (data, manifest) = read_matrix(path)?;
        let mut manifest = manifest.unwrap_or_default();
        let period = manifest.extra.remove("sampling_period");
        let rate = manifest.extra.remove("sampling_rate");
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Manifest(format!("bad sampling value {s:?}")))
        };
        let sampling = match (period, rate, fallback) {
            (_, _, Some(s)) => s,
            (Some(p), None, None) => Sampling::Period(parse(&p)?),
            (None, Some(r), None) => Sampling::Rate(parse(&r)?),
            (Some(_), Some(_), None) => {
                return Err(Error::Manifest("both sampling_period and sampling_rate present".into()))
            }
            (None, None, None) => return Err(Error::Manifest("response has no sampling period or rate".into())),
        };
        let ids = match manifest.extra.remove("channel_ids") {
            Some(s) if !s.is_empty() => s.split(',').map(str::to_string).collect(),
            _ => (0..data.cols()).map(|c| c.to_string()).collect(),
        };
        Self::new(data, sampling, ids, manifest)
    }
}

fn encode_header(rows: u64, cols: u64, dtype: Dtype) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4] = VERSION;
    h[5] = dtype.byte();
    h[8..16].copy_from_slice(&rows.to_le_bytes());
    h[16..24].copy_from_slice(&cols.to_le_bytes());
    h
}

/// Writes `m` as LAM1 plus the manifest sidecar. Non-finite values are
/// rejected before anything touches the filesystem.
pub fn write_matrix(m: &DenseMatrix, manifest: &Manifest, path: &Path) -> Result<()> {
    check_finite(&m.values, m.cols)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&encode_header(m.rows as u64, m.cols as u64, m.dtype)).map_err(io)?;
    match m.dtype {
        Dtype::F32 => {
            for v in &m.values {
                w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
            }
        }
        Dtype::F64 => {
            for v in &m.values {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    manifest.write(path)
}

/// Reads a LAM1 file and its manifest sidecar (if present).
pub fn read_matrix(path: &Path) -> Result<(DenseMatrix, Option<Manifest>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    if len < HEADER_LEN as u64 {
        let mut head = [0u8; 4];
        let n = r.read(&mut head).map_err(|e| Error::io(path, e))?;
        if n == 4 && head != MAGIC {
            return Err(Error::BadMagic(head));
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: len,
        });
    }
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    let magic: [u8; 4] = header[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if header[4] != VERSION {
        return Err(Error::UnsupportedVersion(header[4]));
    }
    let dtype = Dtype::from_byte(header[5])?;
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size() as u64))
        .ok_or_else(|| Error::invalid("core-io", "header dimensions overflow"))?;
    let found = len - HEADER_LEN as u64;
    if found < payload {
        return Err(Error::Truncated {
            expected: payload,
            found,
        });
    }
    let mut bytes = vec![0u8; payload as usize];
    r.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
    let values: Vec<f64> = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let mut m = DenseMatrix::new(rows as usize, cols as usize, values)?;
    m.dtype = dtype;
    Ok((m, Manifest::read(path)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub label: String,
    pub onset: f64,
    pub offset: f64,
}

/// Ordered word/chunk events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    events: Vec<Event>,
}

impl Timeline {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !(e.onset.is_finite() && e.offset.is_finite()) {
                return Err(Error::Timeline {
                    line: i + 2,
                    msg: "non-finite time".into(),
                });
            }
            if e.offset < e.onset {
                return Err(Error::Timeline {
                    line: i + 2,
                    msg: format!("offset {} before onset {}", e.offset, e.onset),
                });
            }
            if i > 0 && e.onset < events[i - 1].onset {
                return Err(Error::Timeline {
                    line: i + 2,
                    msg: format!("onset {} decreases from {}", e.onset, events[i - 1].onset),
                });
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn onsets(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.onset).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "label\tonset\toffset").map_err(io)?;
        for e in &self.events {
            writeln!(w, "{}\t{}\t{}", e.label, e.onset, e.offset).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn read_timeline(path: &Path) -> Result<Timeline> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or(Error::Timeline {
            line: 1,
            msg: "empty file".into(),
        })?;
    if header.trim_end_matches('\r') != "label\tonset\toffset" {
        return Err(Error::Timeline {
            line: 1,
            msg: "expected header label<TAB>onset<TAB>offset".into(),
        });
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Timeline {
                line: lineno,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Timeline {
                line: lineno,
                msg: format!("not a number: {s:?}"),
            })
        };
        events.push(Event {
            label: fields[0].to_string(),
            onset: num(fields[1])?,
            offset: num(fields[2])?,
        });
    }
    Timeline::new(events)
}

/// Reads an `index<TAB>label` file and returns labels ordered by index.
/// Indices must cover `0..n` exactly once.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, String)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if i == 0 {
            if line != "index\tlabel" {
                return Err(Error::Table(format!("{}: expected header index<TAB>label", path.display())));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (idx, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::Table(format!("{}:{}: expected 2 fields", path.display(), i + 1)))?;
        let idx = idx
            .parse::<usize>()
            .map_err(|_| Error::Table(format!("{}:{}: bad index {idx:?}", path.display(), i + 1)))?;
        rows.push((idx, label.to_string()));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (idx, _)) in rows.iter().enumerate() {
        if *idx != expect {
            return Err(Error::Table(format!("{}: indices must be 0..n without gaps", path.display())));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn write_labels<S: AsRef<str>>(labels: &[S], path: &Path) -> Result<()> {
    let mut text = String::from("index\tlabel\n");
    for (i, l) in labels.iter().enumerate() {
        text.push_str(&format!("{i}\t{}\n", l.as_ref()));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
