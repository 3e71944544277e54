//! Embedding sets: in-memory representation, on-disk formats, resampling.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "EMB1" | u32 version=1 | u8 dtype (0=f32, 1=f64) | u8 flags (bit0: weights)
//!        | u64 n | u64 d | n*d scalars, row-major | [n weight scalars]
//! ```
//!
//! CSV layout: a header of `d` column names, optionally followed by a final
//! column named `weight`, then one row per sample.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use faer::MatRef;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

const MAGIC: &[u8; 4] = b"EMB1";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 1 + 1 + 8 + 8;
const FLAG_WEIGHTS: u8 = 1;

/// Tolerance on the total mass of explicit weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// On-disk encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Binary,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" | "emb" => Ok(Format::Binary),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

impl Format {
    /// Guesses the format from a file extension, defaulting to binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

/// An empirical distribution over `n` points in dimension `d`.
///
/// Rows are stored row-major in 64-bit precision. Without explicit weights
/// every row carries mass `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f64>,
    weights: Option<Vec<f64>>,
    n: usize,
    d: usize,
}

impl EmbeddingSet {
    /// Builds an unweighted set from row-major data.
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "embedding set needs n >= 1 and d >= 1 (got n={n}, d={d})"
            )));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / d, col: pos % d });
        }
        Ok(Self { data, weights: None, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, n, d)
    }

    /// Attaches explicit weights; they must be nonnegative and sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, self.n, WEIGHT_SUM_TOL)?;
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Weight of row `i`, `1/n` when unweighted.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.n as f64,
        }
    }

    pub fn weights_or_uniform(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.n as f64; self.n],
        }
    }

    /// Number of rows carrying positive mass.
    pub fn support_size(&self) -> usize {
        match &self.weights {
            Some(w) => w.iter().filter(|&&x| x > 0.0).count(),
            None => self.n,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Zero-copy `n x d` matrix view.
    pub fn as_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.n, self.d)
    }

    /// New unweighted set made of the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d)
    }

    /// Applies `f` to every entry; used for affine transforms in tests and tools.
    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        let d = self.d;
        let data = self.data.iter().enumerate().map(|(k, &v)| f(k / d, k % d, v)).collect();
        let out = Self::new(data, self.n, self.d)?;
        match &self.weights {
            Some(w) => out.with_weights(w.clone()),
            None => Ok(out),
        }
    }

    pub(crate) fn ensure_same_dim(&self, other: &EmbeddingSet) -> Result<()> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: other.d });
        }
        Ok(())
    }
}

fn validate_weights(weights: &[f64], n: usize, tol: f64) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    let mut sum = 0.0;
    for (row, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { row, col: 0 });
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { row, value: w });
        }
        sum += w;
    }
    if (sum - 1.0).abs() > tol {
        return Err(Error::WeightSum { sum });
    }
    Ok(())
}

/// Reads an embedding file.
pub fn load_embeddings(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        Format::Binary => {
            let mut bytes = Vec::new();
            reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes)
        }
        Format::Csv => read_csv(reader),
    }
}

/// Writes an embedding file. Binary output is always 64-bit.
pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        Format::Binary => {
            writer.write_all(&encode_binary(set)).map_err(|e| Error::io(path, e))?;
        }
        Format::Csv => write_csv(set, &mut writer).map_err(|e| match e {
            Error::Serialization(msg) => Error::io(path, std::io::Error::other(msg)),
            other => other,
        })?,
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_binary(set: &EmbeddingSet) -> Vec<u8> {
    let extra = set.weights.as_ref().map_or(0, |w| w.len());
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 8 * (set.data.len() + extra));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(1);
    out.push(if set.weights.is_some() { FLAG_WEIGHTS } else { 0 });
    out.extend_from_slice(&(set.n as u64).to_le_bytes());
    out.extend_from_slice(&(set.d as u64).to_le_bytes());
    for v in &set.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(w) = &set.weights {
        for v in w {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    let header_err = |offset: u64, reason: &str| Error::MalformedHeader { offset, reason: reason.to_string() };
    if bytes.len() < HEADER_LEN as usize {
        return Err(header_err(bytes.len() as u64, "file shorter than header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(header_err(0, "bad magic, expected \"EMB1\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(header_err(4, &format!("unsupported version {version}")));
    }
    let width = match bytes[8] {
        0 => 4usize,
        1 => 8usize,
        other => return Err(header_err(8, &format!("unknown dtype {other}"))),
    };
    let flags = bytes[9];
    if flags & !FLAG_WEIGHTS != 0 {
        return Err(header_err(9, &format!("unknown flag bits {flags:#04x}")));
    }
    let n = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[18..26].try_into().unwrap());
    if n == 0 {
        return Err(header_err(10, "n must be positive"));
    }
    if d == 0 {
        return Err(header_err(18, "d must be positive"));
    }
    let has_weights = flags & FLAG_WEIGHTS != 0;
    let scalars = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(if has_weights { n } else { 0 }))
        .ok_or_else(|| header_err(10, "n*d overflows"))?;
    let expected = scalars.checked_mul(width as u64).ok_or_else(|| header_err(10, "payload size overflows"))?;
    let found = bytes.len() as u64 - HEADER_LEN;
    if found < expected {
        return Err(Error::PayloadTruncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { offset: HEADER_LEN + expected });
    }
    let (n, d) = (n as usize, d as usize);
    let payload = &bytes[HEADER_LEN as usize..];
    let read = |k: usize| -> f64 {
        let off = k * width;
        if width == 4 {
            f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()) as f64
        } else {
            f64::from_le_bytes(payload[off..off + 8].try_into().unwrap())
        }
    };
    let data: Vec<f64> = (0..n * d).map(read).collect();
    let set = EmbeddingSet::new(data, n, d)?;
    if !has_weights {
        return Ok(set);
    }
    let mut weights: Vec<f64> = (n * d..n * d + n).map(read).collect();
    if width == 4 {
        // renormalize after widening
        validate_weights(&weights, n, 1e-5)?;
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    set.with_weights(weights)
}

fn read_csv<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv { line: 1, reason: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Csv { line: 1, reason: "missing header".into() });
    }
    let has_weights = headers.iter().last() == Some("weight");
    let d = headers.len() - usize::from(has_weights);
    if d == 0 {
        return Err(Error::Csv { line: 1, reason: "no data columns".into() });
    }
    let mut data = Vec::new();
    let mut weights = Vec::new();
    let mut n = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::Csv { line, reason: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Csv { line, reason: format!("cannot parse `{field}` as a number") })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: n, col: j });
            }
            if j < d {
                data.push(v);
            } else {
                weights.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Csv { line: 2, reason: "no data rows".into() });
    }
    let set = EmbeddingSet::new(data, n, d)?;
    if has_weights {
        set.with_weights(weights)
    } else {
        Ok(set)
    }
}

fn write_csv<W: Write>(set: &EmbeddingSet, writer: W) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..set.d).map(|j| format!("x{j}")).collect();
    if set.weights.is_some() {
        header.push("weight".into());
    }
    wtr.write_record(&header).map_err(ser)?;
    let mut fields = Vec::with_capacity(header.len());
    for i in 0..set.n {
        fields.clear();
        // shortest round-trip representation
        fields.extend(set.row(i).iter().map(|v| v.to_string()));
        if let Some(w) = &set.weights {
            fields.push(w[i].to_string());
        }
        wtr.write_record(&fields).map_err(ser)?;
    }
    wtr.flush().map_err(|e| Error::Serialization(e.to_string()))
}

/// Draws `m` rows uniformly without replacement.
pub fn subsample(set: &EmbeddingSet, m: usize, seed: u64) -> Result<EmbeddingSet> {
    if set.is_weighted() {
        return Err(Error::WeightedInput);
    }
    let idx = sample_indices(set.n, m, seed)?;
    set.select_rows(&idx)
}

/// `m` distinct indices from `0..n` in random order.
pub fn sample_indices(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::InsufficientRows { requested: m, available: n });
    }
    let mut rng = rng_from(seed);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

/// Number of contaminant rows in a mixture of `m` rows at level `epsilon`.
pub fn mixture_count(epsilon: f64, m: usize) -> usize {
    // half-up rounding
    (epsilon * m as f64 + 0.5).floor() as usize
}

/// Row sources of a shuffled mixture: `(false, i)` is row `i` of A, `(true, j)` row `j` of B.
pub fn mixture_plan(n_a: usize, n_b: usize, epsilon: f64, m: usize, seed: u64) -> Result<Vec<(bool, usize)>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("mixture level {epsilon} outside [0, 1]")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("mixture size must be positive".into()));
    }
    let from_b = mixture_count(epsilon, m);
    let from_a = m - from_b;
    if from_b > n_b {
        return Err(Error::InsufficientRows { requested: from_b, available: n_b });
    }
    if from_a > n_a {
        return Err(Error::InsufficientRows { requested: from_a, available: n_a });
    }
    let mut rng = rng_from(seed);
    let mut plan: Vec<(bool, usize)> = Vec::with_capacity(m);
    if from_a > 0 {
        plan.extend(rand::seq::index::sample(&mut rng, n_a, from_a).into_iter().map(|i| (false, i)));
    }
    if from_b > 0 {
        plan.extend(rand::seq::index::sample(&mut rng, n_b, from_b).into_iter().map(|j| (true, j)));
    }
    plan.shuffle(&mut rng);
    Ok(plan)
}

/// `m` rows with `round(epsilon * m)` drawn from `b` and the rest from `a`, shuffled.
pub fn mix(a: &EmbeddingSet, b: &EmbeddingSet, epsilon: f64, m: usize, seed: u64) -> Result<EmbeddingSet> {
    if a.is_weighted() || b.is_weighted() {
        return Err(Error::WeightedInput);
    }
    a.ensure_same_dim(b)?;
    let plan = mixture_plan(a.n, b.n, epsilon, m, seed)?;
    let mut data = Vec::with_capacity(m * a.d);
    for (from_b, i) in plan {
        data.extend_from_slice(if from_b { b.row(i) } else { a.row(i) });
    }
    EmbeddingSet::new(data, m, a.d)
}
