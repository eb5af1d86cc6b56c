//! Binary and CSV matrix files.
//!
//! Binary layout, all fields little-endian:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 8  | magic `GLIDMAT1` |
//! | 8  | 1  | content: 0 operator, 1 weighted kernel, 2 kernel, 3 distance |
//! | 9  | 1  | kernel mode: 0 intrinsic, 1 extrinsic |
//! | 10 | 1  | manifold dimension (2) |
//! | 11 | 1  | reserved, 0 |
//! | 12 | 4  | grid resolution `N` (u32) |
//! | 16 | 8  | node count `n` (u64) |
//! | 24 | 8  | bandwidth `t` (f64) |
//! | 32 | 32 | kernel geometry record |
//! | 64 | 32 | measure metric record |
//! | 96 | 16n | node coordinates `(u, v)` as f64 pairs |
//! | 96 + 16n | 8n² | entries, row-major f64 |
//!
//! A geometry record is `kind: u8, sub: u8, 6 zero bytes, p0, p1, p2: f64`.
//! Kinds: 0 constant torus metric `(E, F, G)`, 1 round sphere `(R)`,
//! 2 induced metric of embedding `sub`, 3 embedding `sub`.
//! Embedding codes: 0 Clifford torus, 1 donut torus `(R, r)`, 2 unit sphere.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::discretization::build_grid;
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, EmbeddingSpec, MetricSpec};
use crate::operators::{KernelMode, OperatorMatrix, DIM};

const MAGIC: &[u8; 8] = b"GLIDMAT1";
const HEADER_LEN: usize = 96;

/// What a matrix file holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixContent {
    Operator = 0,
    WeightedKernel = 1,
    Kernel = 2,
    Distance = 3,
}

impl MatrixContent {
    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => MatrixContent::Operator,
            1 => MatrixContent::WeightedKernel,
            2 => MatrixContent::Kernel,
            3 => MatrixContent::Distance,
            _ => return Err(Error::Format(format!("unknown content tag {tag}"))),
        })
    }
}

fn embedding_code(e: &EmbeddingSpec) -> (u8, [f64; 3]) {
    match *e {
        EmbeddingSpec::CliffordTorus => (0, [0.0; 3]),
        EmbeddingSpec::DonutTorus { major, minor } => (1, [major, minor, 0.0]),
        EmbeddingSpec::UnitSphere => (2, [0.0; 3]),
    }
}

fn embedding_from_code(sub: u8, p: [f64; 3]) -> Result<EmbeddingSpec> {
    match sub {
        0 => Ok(EmbeddingSpec::CliffordTorus),
        1 => EmbeddingSpec::donut(p[0], p[1]),
        2 => Ok(EmbeddingSpec::UnitSphere),
        _ => Err(Error::Format(format!("unknown embedding code {sub}"))),
    }
}

fn metric_record(m: &MetricSpec) -> [u8; 32] {
    let (kind, sub, p) = match *m {
        MetricSpec::TorusConstant { e, f, g } => (0, 0, [e, f, g]),
        MetricSpec::SphereRound { radius } => (1, 0, [radius, 0.0, 0.0]),
        MetricSpec::Induced(emb) => {
            let (sub, p) = embedding_code(&emb);
            (2, sub, p)
        }
    };
    record(kind, sub, p)
}

fn mode_record(mode: &KernelMode) -> [u8; 32] {
    match mode {
        KernelMode::Intrinsic(m) => metric_record(m),
        KernelMode::Extrinsic(e) => {
            let (sub, p) = embedding_code(e);
            record(3, sub, p)
        }
    }
}

fn record(kind: u8, sub: u8, p: [f64; 3]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out[0] = kind;
    out[1] = sub;
    for (k, v) in p.iter().enumerate() {
        out[8 + 8 * k..16 + 8 * k].copy_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_record(buf: &[u8]) -> (u8, u8, [f64; 3]) {
    let mut p = [0.0; 3];
    for (k, slot) in p.iter_mut().enumerate() {
        *slot = f64_at(buf, 8 + 8 * k);
    }
    (buf[0], buf[1], p)
}

fn metric_from_record(buf: &[u8]) -> Result<MetricSpec> {
    let (kind, sub, p) = parse_record(buf);
    match kind {
        0 => MetricSpec::torus(p[0], p[1], p[2]),
        1 => MetricSpec::sphere(p[0]),
        2 => Ok(MetricSpec::Induced(embedding_from_code(sub, p)?)),
        _ => Err(Error::Format(format!("unknown metric kind {kind}"))),
    }
}

fn f64_at(buf: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(buf[at..at + 8].try_into().expect("8 bytes"))
}

/// Write `entries` with the geometry header of `op`.
pub fn write_matrix<W: Write>(
    out: W,
    op: &OperatorMatrix,
    content: MatrixContent,
    entries: &Array2<f64>,
) -> Result<()> {
    let n = op.len();
    if entries.dim() != (n, n) {
        return Err(Error::LengthMismatch {
            expected: n * n,
            got: entries.len(),
        });
    }
    let mut w = BufWriter::new(out);
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(MAGIC);
    header[8] = content as u8;
    header[9] = u8::from(op.mode().is_extrinsic());
    header[10] = DIM as u8;
    header[12..16].copy_from_slice(&(op.shape().resolution as u32).to_le_bytes());
    header[16..24].copy_from_slice(&(n as u64).to_le_bytes());
    header[24..32].copy_from_slice(&op.t().to_le_bytes());
    header[32..64].copy_from_slice(&mode_record(op.mode()));
    header[64..96].copy_from_slice(&metric_record(op.measure_metric()));
    w.write_all(&header)?;
    for x in op.nodes() {
        w.write_all(&x.u().to_le_bytes())?;
        w.write_all(&x.v().to_le_bytes())?;
    }
    for row in entries.rows() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_operator<W: Write>(out: W, op: &OperatorMatrix) -> Result<()> {
    write_matrix(out, op, MatrixContent::Operator, op.entries())
}

pub fn save_operator(path: &Path, op: &OperatorMatrix) -> Result<()> {
    write_operator(File::create(path)?, op)
}

/// Read any matrix file; the geometry header is returned as an operator
/// whose entries are the file payload.
pub fn read_matrix<R: Read>(input: R) -> Result<(MatrixContent, OperatorMatrix)> {
    let mut r = BufReader::new(input);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic; not a glid matrix file".into()));
    }
    let content = MatrixContent::from_tag(header[8])?;
    if header[10] as usize != DIM {
        return Err(Error::Format(format!(
            "dimension {} unsupported",
            header[10]
        )));
    }
    let resolution = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
    let t = f64_at(&header, 24);
    let measure = metric_from_record(&header[64..96])?;
    let (kind, sub, p) = parse_record(&header[32..64]);
    let mode = match (header[9], kind) {
        (1, 3) => KernelMode::Extrinsic(embedding_from_code(sub, p)?),
        (0, 0..=2) => KernelMode::Intrinsic(metric_from_record(&header[32..64])?),
        (m, k) => return Err(Error::Format(format!("mode tag {m} with kernel kind {k}"))),
    };
    let rule = build_grid(&measure, resolution)?;
    if rule.len() != n {
        return Err(Error::Format(format!(
            "header declares {n} nodes but resolution {resolution} gives {}",
            rule.len()
        )));
    }

    let mut buf = vec![0u8; 16 * n];
    r.read_exact(&mut buf)?;
    let nodes: Vec<ChartPoint> = buf
        .chunks_exact(16)
        .map(|c| ChartPoint::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    let mut buf = vec![0u8; 8 * n * n];
    r.read_exact(&mut buf)?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let data: Vec<f64> = buf.chunks_exact(8).map(|c| f64_at(c, 0)).collect();
    let entries = Array2::from_shape_vec((n, n), data).map_err(|e| Error::Format(e.to_string()))?;
    let op = OperatorMatrix::from_parts(entries, nodes, *rule.shape(), t, mode, measure)?;
    Ok((content, op))
}

pub fn read_operator<R: Read>(input: R) -> Result<OperatorMatrix> {
    let (content, op) = read_matrix(input)?;
    if content != MatrixContent::Operator {
        return Err(Error::Format(format!(
            "file holds {content:?}, not an operator"
        )));
    }
    Ok(op)
}

pub fn load_operator(path: &Path) -> Result<OperatorMatrix> {
    read_operator(File::open(path)?)
}

/// Row-per-line CSV, preceded by one `#` comment line describing the header.
pub fn write_operator_csv<W: Write>(out: W, op: &OperatorMatrix) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(
        out,
        "# glid {} operator nodes={} resolution={} t={} mode={} measure={}",
        env!("CARGO_PKG_VERSION"),
        op.len(),
        op.shape().resolution,
        op.t(),
        op.mode(),
        op.measure_metric()
    )?;
    let mut w = csv::Writer::from_writer(out);
    for row in op.entries().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
