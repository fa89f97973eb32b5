//! Trace files.
//!
//! Packed binary, all little-endian:
//!
//! ```text
//! header  "QRT1" | version u16 | sample_dt_ns f64 | n_records u64 | samples_per_record u64
//! record  label u8 | t_S f64 | t_A f64 | t_B f64 | t_D f64 | samples f32 × samples_per_record
//! ```
//!
//! `t_S` is NaN for records without a herald. Hidden truth, when exported,
//! follows the records as a trailer: `"QRTT"`, then per record the initial
//! state u8, the transition count u64 and the transition times f64 (states
//! alternate, so they are implied).
//!
//! CSV has one record per row: `label,t_s_ns,t_a_ns,t_b_ns,t_d_ns,sample_dt_ns`
//! followed by one column per sample. Truth is not representable in CSV.
//!
//! Files carry only what an experiment could record, so imported records
//! take the readout window to start at the first discrimination marker and
//! end with the trace, and have no herald window.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::trajectory::{ExperimentRecord, HomodyneTrace, PulseSequence, QubitState, StatePath, Transition, Window};

pub const MAGIC: &[u8; 4] = b"QRT1";
pub const TRUTH_MAGIC: &[u8; 4] = b"QRTT";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Binary,
    Csv,
}

impl TraceFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
            _ => TraceFormat::Binary,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("byte offset {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("unsupported format version {found} (expected {VERSION})")]
    Version { found: u16 },
    #[error("file truncated at byte offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("cannot export: {0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TraceIoError + '_ {
    move |source| TraceIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TraceIoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// Common grid of an ensemble: `(sample_dt_ns, samples_per_record)`.
fn common_grid(records: &[ExperimentRecord]) -> Result<(f64, usize), TraceIoError> {
    let Some(first) = records.first() else {
        return Ok((0.0, 0));
    };
    let dt = first.trace.sample_dt_ns;
    let n = first.trace.samples.len();
    for (i, r) in records.iter().enumerate() {
        if r.trace.sample_dt_ns.to_bits() != dt.to_bits() || r.trace.samples.len() != n {
            return Err(TraceIoError::Inconsistent(format!(
                "record {i} does not share the grid of record 0"
            )));
        }
    }
    Ok((dt, n))
}

fn markers(seq: &PulseSequence) -> [f64; 4] {
    [seq.t_s_ns.unwrap_or(f64::NAN), seq.t_a_ns, seq.t_b_ns, seq.t_d_ns]
}

pub fn encode_binary(records: &[ExperimentRecord], with_truth: bool) -> Result<Vec<u8>, TraceIoError> {
    let (dt, spr) = common_grid(records)?;
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * (33 + 4 * spr));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dt.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.extend_from_slice(&(spr as u64).to_le_bytes());
    for r in records {
        out.push(r.prepared_label.as_u8());
        for m in markers(&r.sequence) {
            out.extend_from_slice(&m.to_le_bytes());
        }
        for s in &r.trace.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    if with_truth {
        out.extend_from_slice(TRUTH_MAGIC);
        for (i, r) in records.iter().enumerate() {
            let truth = r
                .truth
                .as_ref()
                .ok_or_else(|| TraceIoError::Inconsistent(format!("record {i} has no hidden truth")))?;
            out.push(truth.initial.as_u8());
            out.extend_from_slice(&(truth.transitions.len() as u64).to_le_bytes());
            for t in &truth.transitions {
                out.extend_from_slice(&t.time_ns.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TraceIoError> {
        let left = self.bytes.len() - self.pos;
        if left < n {
            return Err(TraceIoError::Truncated {
                offset: self.bytes.len(),
                needed: n - left,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TraceIoError> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }

    fn u8(&mut self) -> Result<u8, TraceIoError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, TraceIoError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, TraceIoError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn format(&self, at: usize, message: impl Into<String>) -> TraceIoError {
        TraceIoError::Format {
            offset: at,
            message: message.into(),
        }
    }
}

fn label_from(v: u8, r: &Reader, at: usize) -> Result<QubitState, TraceIoError> {
    QubitState::from_u8(v).ok_or_else(|| r.format(at, format!("invalid label byte {v}")))
}

/// Drops what a trace file does not store, apart from the hidden truth, so
/// simulated records are analyzed exactly as their imported copies would be.
pub fn observed_view(record: &mut ExperimentRecord) {
    let seq = &mut record.sequence;
    let end = record.trace.samples.len() as f64 * record.trace.sample_dt_ns;
    let window = Window::new(seq.t_a_ns.min(seq.t_d_ns), end);
    seq.herald_window = None;
    seq.readout_window = window;
    record.trace.readout_window = window;
}

/// Record as an analysis would see it, from stored fields only.
pub fn imported_record(
    label: QubitState,
    marks: [f64; 4],
    sample_dt_ns: f64,
    samples: Vec<f32>,
) -> ExperimentRecord {
    let [t_s, t_a, t_b, t_d] = marks;
    let mut record = ExperimentRecord {
        sequence: PulseSequence {
            herald_window: None,
            t_s_ns: t_s.is_finite().then_some(t_s),
            prep_pi_pulse: label == QubitState::Excited,
            readout_window: Window::new(0.0, 0.0),
            t_a_ns: t_a,
            t_b_ns: t_b,
            t_d_ns: t_d,
        },
        trace: HomodyneTrace {
            sample_dt_ns,
            samples,
            readout_window: Window::new(0.0, 0.0),
        },
        truth: None,
        prepared_label: label,
    };
    observed_view(&mut record);
    record
}

pub fn decode_binary(bytes: &[u8]) -> Result<Vec<ExperimentRecord>, TraceIoError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.array::<4>()?;
    if &magic != MAGIC {
        return Err(r.format(0, format!("bad magic {magic:?}, expected \"QRT1\"")));
    }
    let found = u16::from_le_bytes(r.array()?);
    if found != VERSION {
        return Err(TraceIoError::Version { found });
    }
    let dt_at = r.pos;
    let dt = r.f64()?;
    let n_at = r.pos;
    let n = r.u64()?;
    let spr = r.u64()?;
    if !(dt > 0.0 && dt.is_finite()) && n > 0 {
        return Err(r.format(dt_at, format!("sample_dt_ns = {dt} must be positive")));
    }
    let body = usize::try_from(spr)
        .ok()
        .and_then(|s| s.checked_mul(4))
        .and_then(|s| s.checked_add(33))
        .and_then(|rec| usize::try_from(n).ok()?.checked_mul(rec))
        .ok_or_else(|| r.format(n_at, "record count overflows"))?;
    let left = bytes.len() - r.pos;
    if left < body {
        return Err(TraceIoError::Truncated {
            offset: bytes.len(),
            needed: body - left,
        });
    }
    let (n, spr) = (n as usize, spr as usize);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.pos;
        let label = label_from(r.u8()?, &r, at)?;
        let marks = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let samples = r
            .take(4 * spr)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        records.push(imported_record(label, marks, dt, samples));
    }
    if r.pos == bytes.len() {
        return Ok(records);
    }
    let at = r.pos;
    if &r.array::<4>()? != TRUTH_MAGIC {
        return Err(r.format(at, "unexpected bytes after the last record"));
    }
    let duration = spr as f64 * dt;
    for rec in &mut records {
        let at = r.pos;
        let initial = label_from(r.u8()?, &r, at)?;
        let count_at = r.pos;
        let k = r.u64()?;
        if k > ((bytes.len() - r.pos) / 8) as u64 {
            return Err(r.format(count_at, format!("transition count {k} exceeds the file")));
        }
        let mut state = initial;
        let mut transitions = Vec::with_capacity(k as usize);
        for _ in 0..k {
            state = state.flipped();
            transitions.push(Transition {
                time_ns: r.f64()?,
                state,
            });
        }
        let path = StatePath {
            initial,
            transitions,
            duration_ns: duration,
        };
        path.validate().map_err(|m| r.format(at, m))?;
        rec.truth = Some(path);
    }
    if r.pos != bytes.len() {
        return Err(r.format(r.pos, "unexpected bytes after the truth trailer"));
    }
    Ok(records)
}

const CSV_FIXED: [&str; 6] = ["label", "t_s_ns", "t_a_ns", "t_b_ns", "t_d_ns", "sample_dt_ns"];

pub fn encode_csv(records: &[ExperimentRecord]) -> Result<Vec<u8>, TraceIoError> {
    let (_, spr) = common_grid(records)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| TraceIoError::Csv {
        line: 0,
        message: e.to_string(),
    };
    let header: Vec<String> = CSV_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain((0..spr).map(|i| format!("s{i}")))
        .collect();
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.prepared_label.as_u8().to_string()];
        row.extend(markers(&r.sequence).iter().map(|m| m.to_string()));
        row.push(r.trace.sample_dt_ns.to_string());
        row.extend(r.trace.samples.iter().map(|s| s.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| TraceIoError::Csv {
        line: 0,
        message: e.to_string(),
    })
}

pub fn decode_csv(bytes: &[u8]) -> Result<Vec<ExperimentRecord>, TraceIoError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let bad = |line: usize, message: String| TraceIoError::Csv { line, message };
    let header = rd.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.len() < CSV_FIXED.len() || header.iter().zip(CSV_FIXED).any(|(a, b)| a != b) {
        return Err(bad(1, format!("header must start with {}", CSV_FIXED.join(","))));
    }
    let mut records = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let field = |k: usize| -> Result<f64, TraceIoError> {
            let s = row.get(k).unwrap_or("");
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column {}: `{s}` is not a number", k + 1)))
        };
        let label_text = row.get(0).unwrap_or("");
        let label = label_text
            .parse::<u8>()
            .ok()
            .and_then(QubitState::from_u8)
            .ok_or_else(|| bad(line, format!("invalid label `{label_text}`")))?;
        let marks = [field(1)?, field(2)?, field(3)?, field(4)?];
        let dt = field(5)?;
        let samples = (CSV_FIXED.len()..row.len())
            .map(|k| {
                let s = &row[k];
                s.trim()
                    .parse::<f32>()
                    .map_err(|_| bad(line, format!("column {}: `{s}` is not a number", k + 1)))
            })
            .collect::<Result<Vec<f32>, _>>()?;
        records.push(imported_record(label, marks, dt, samples));
    }
    Ok(records)
}

/// Writes `records` atomically; returns the number written.
pub fn export_traces(
    records: &[ExperimentRecord],
    path: &Path,
    format: TraceFormat,
    with_truth: bool,
) -> Result<usize, TraceIoError> {
    let bytes = match format {
        TraceFormat::Binary => encode_binary(records, with_truth)?,
        TraceFormat::Csv if with_truth => {
            return Err(TraceIoError::Inconsistent("hidden truth needs the binary format".into()));
        }
        TraceFormat::Csv => encode_csv(records)?,
    };
    write_atomic(path, &bytes)?;
    Ok(records.len())
}

pub fn import_traces(path: &Path) -> Result<Vec<ExperimentRecord>, TraceIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match TraceFormat::from_path(path) {
        TraceFormat::Binary => decode_binary(&bytes),
        TraceFormat::Csv => decode_csv(&bytes),
    }
}
