//! Inverse pipeline: from an assembled operator alone, recover the node
//! masses `m = p μ_g`, the Gaussian kernel, the distance matrix, the metric
//! tensor field and the density.
//!
//! The stages mirror the algebra of the operator:
//!
//! 1. off-diagonal entries give `W_ij = K(x_i, x_j) m_j` (the diagonal is
//!    redundant because rows sum to zero);
//! 2. kernel symmetry gives `W_ij / W_ji = m_j / m_i`, fixing the masses up to
//!    one constant, which total mass one removes;
//! 3. `K = W / m` and `d = sqrt(−t ln K)`;
//! 4. the metric is the mixed second derivative of `d²/2` on the diagonal,
//!    taken by a central stencil on grid neighbours;
//! 5. the density is the mass divided by the recovered volume element.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{build_grid, GridShape, NormalizedDensity, QuadratureRule};
use crate::error::{Error, Result};
use crate::geometry::{KernelGeometry, MetricTensor};
use crate::matfile::{write_matrix, MatrixContent};
use crate::operators::{KernelMode, OperatorMatrix};
use crate::verify::Table;

/// Entries of `W` at or below this are not trusted.
pub const EDGE_THRESHOLD: f64 = 1e-12;

/// Recovered kernel values in `(1, 1 + KERNEL_EXCESS]` are rounding and are
/// clamped; anything larger means the mass vector is wrong.
pub const KERNEL_EXCESS: f64 = 1e-8;

/// Operators whose rows sum to more than this are rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-10;

/// Off-diagonal operator entries above this are rejected.
pub const POSITIVE_ENTRY_TOLERANCE: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub edge_threshold: f64,
    /// Least-squares refinement of log-masses over every trusted edge.
    pub refine_masses: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            edge_threshold: EDGE_THRESHOLD,
            refine_masses: true,
        }
    }
}

/// `W_ij = K(x_i, x_j) m_j` off the diagonal; diagonal entries are NaN.
#[derive(Clone, Debug)]
pub struct WeightedKernel {
    w: Array2<f64>,
    mask: Array2<bool>,
    t: f64,
}

impl WeightedKernel {
    pub fn values(&self) -> &Array2<f64> {
        &self.w
    }

    /// `W_ij > τ`.
    pub fn edge_mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn usable(&self, i: usize, j: usize) -> bool {
        self.mask[[i, j]] && self.mask[[j, i]]
    }
}

/// Read the weighted kernel off the operator entries.
pub fn extract_weighted_kernel(op: &OperatorMatrix, edge_threshold: f64) -> Result<WeightedKernel> {
    let e = op.entries();
    let n = op.len();
    let scale = op.t() * op.t();
    for (i, row) in e.axis_iter(Axis(0)).enumerate() {
        let sum = row.sum();
        if !(sum.abs() <= ROW_SUM_TOLERANCE) {
            return Err(Error::MalformedOperator(format!("row {i} sums to {sum:e}")));
        }
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::MalformedOperator(format!(
                "row {i} is identically zero"
            )));
        }
        if let Some((j, &v)) = row
            .iter()
            .enumerate()
            .find(|&(j, &v)| j != i && v > POSITIVE_ENTRY_TOLERANCE)
        {
            return Err(Error::MalformedOperator(format!(
                "positive off-diagonal entry L[{i}][{j}] = {v:e}"
            )));
        }
    }
    let mut w = Array2::<f64>::zeros((n, n));
    let mut mask = Array2::from_elem((n, n), false);
    w.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(mask.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(i, (mut wrow, mut mrow))| {
            for j in 0..n {
                if i == j {
                    wrow[j] = f64::NAN;
                    continue;
                }
                let v = -scale * e[[i, j]];
                wrow[j] = v;
                mrow[j] = v > edge_threshold;
            }
        });
    Ok(WeightedKernel { w, mask, t: op.t() })
}

/// Probability mass per node, summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassVector(pub Vec<f64>);

impl MassVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fix masses from `W_ij / W_ji = m_j / m_i`: propagate log-ratios along a
/// breadth-first tree of trusted edges from node 0, optionally refine by
/// least squares over all trusted edges, then normalize to total one.
pub fn recover_mass(wk: &WeightedKernel, refine: bool) -> Result<MassVector> {
    let n = wk.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let w = &wk.w;
    let mut log_m = vec![f64::NAN; n];
    log_m[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if j != i && log_m[j].is_nan() && wk.usable(i, j) {
                log_m[j] = log_m[i] + w[[i, j]].ln() - w[[j, i]].ln();
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    if reached < n {
        return Err(Error::UnrecoverableMass { reached, total: n });
    }
    if refine {
        refine_log_masses(wk, &mut log_m);
    }
    let top = log_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut m: Vec<f64> = log_m.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = m.iter().sum();
    for v in &mut m {
        *v /= total;
    }
    Ok(MassVector(m))
}

/// Conjugate gradients on the trusted-edge graph Laplacian:
/// minimize `Σ_edges (x_j − x_i − ln(W_ij/W_ji))²`.
fn refine_log_masses(wk: &WeightedKernel, x: &mut [f64]) {
    let n = wk.len();
    let w = &wk.w;
    let adjacency: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && wk.usable(i, j))
                .map(|j| j as u32)
                .collect()
        })
        .collect();
    // b_k and the round-off scale Σ_j |r_kj| of its terms
    let (b, scale): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|k| {
            adjacency[k].iter().fold((0.0, 0.0), |(s, a), &j| {
                let j = j as usize;
                let r = w[[j, k]].ln() - w[[k, j]].ln();
                (s + r, a + r.abs() + 1.0)
            })
        })
        .unzip();
    let laplacian = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let nb = &adjacency[k];
                nb.len() as f64 * v[k] - nb.iter().map(|&j| v[j as usize]).sum::<f64>()
            })
            .collect()
    };
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
    // the Laplacian is singular along constants; keep residuals orthogonal to them
    let center = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|e| *e -= mean);
    };

    let stop = 16.0 * f64::EPSILON * dot(&scale, &scale).sqrt();
    let ax = laplacian(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    center(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..n.min(500) {
        if rr.sqrt() <= stop {
            break;
        }
        let ap = laplacian(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        center(&mut r);
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
}

/// Distance matrix with untrusted pairs stored as NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self(values)
    }

    /// Fill from a closed-form distance.
    pub fn from_fn(n: usize, d: impl Fn(usize, usize) -> f64) -> Self {
        Self(Array2::from_shape_fn((n, n), |(i, j)| d(i, j)))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.0[[i, j]];
        (!v.is_nan()).then_some(v)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Recovered kernel (untrusted entries NaN, diagonal one) and distances.
#[derive(Clone, Debug)]
pub struct KernelDistance {
    pub kernel: Array2<f64>,
    pub distance: DistanceMatrix,
}

/// `K = W/m` clamped to `(0, 1]`, then `d = sqrt(−t ln K)`, symmetrized.
pub fn recover_kernel_distance(
    wk: &WeightedKernel,
    m: &MassVector,
    t: f64,
) -> Result<KernelDistance> {
    let n = wk.len();
    if m.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: m.len(),
        });
    }
    if let Some(bad) = m.values().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "mass vector has non-positive entry {bad}"
        )));
    }
    let mass = m.values();
    let mut kernel = Array2::<f64>::from_elem((n, n), f64::NAN);
    let mut dist = Array2::<f64>::from_elem((n, n), f64::NAN);
    kernel
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(dist.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .try_for_each(|(i, (mut krow, mut drow))| {
            krow[i] = 1.0;
            drow[i] = 0.0;
            for j in 0..n {
                if j == i || !wk.mask[[i, j]] {
                    continue;
                }
                let k = wk.w[[i, j]] / mass[j];
                if k > 1.0 + KERNEL_EXCESS {
                    return Err(Error::Inconsistency { i, j, value: k });
                }
                let k = k.min(1.0);
                krow[j] = k;
                drow[j] = (-t * k.ln()).sqrt();
            }
            Ok(())
        })?;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (dist[[i, j]], dist[[j, i]]);
            let v = match (a.is_nan(), b.is_nan()) {
                (false, false) => 0.5 * (a + b),
                (false, true) => a,
                (true, false) => b,
                (true, true) => continue,
            };
            dist[[i, j]] = v;
            dist[[j, i]] = v;
        }
    }
    Ok(KernelDistance {
        kernel,
        distance: DistanceMatrix(dist),
    })
}

/// Whether the stencil at spacing `step` fits on the grid around node `i`.
fn stencil_fits(shape: &GridShape, i: usize, step: usize) -> bool {
    let s = step as isize;
    // periodic axes need x − s h and x + s h distinct and at most half a loop apart
    if shape.periodic_u && 4 * step > shape.n_u || 4 * step > shape.n_v {
        return false;
    }
    shape.neighbor(i, s, 0).is_some() && shape.neighbor(i, -s, 0).is_some()
}

/// Metric at node `i` from squared distances `sigma(a, b)` between grid
/// nodes, using grid offsets of `step` cells:
///
/// `g_jk = −½ [σ(x+he_j, x+he_k) − σ(x+he_j, x−he_k) − σ(x−he_j, x+he_k) + σ(x−he_j, x−he_k)] / (4 h_j h_k)`.
///
/// Exact whenever `σ` is quadratic in the chart offsets.
pub fn metric_from_sigma(
    sigma: impl Fn(usize, usize) -> Option<f64>,
    shape: &GridShape,
    i: usize,
    step: usize,
) -> Result<MetricTensor> {
    if !stencil_fits(shape, i, step) {
        return Err(Error::InsufficientMask {
            node: i,
            reason: format!("grid neighbours at {step} cells are missing"),
        });
    }
    let s = step as isize;
    let offsets = [(s, 0), (0, s)];
    let spacing = [step as f64 * shape.h_u, step as f64 * shape.h_v];
    let node = |d: (isize, isize), sign: isize| {
        shape
            .neighbor(i, sign * d.0, sign * d.1)
            .expect("stencil_fits checked the neighbours")
    };
    let sq = |a: usize, b: usize| -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        sigma(a, b).ok_or_else(|| Error::InsufficientMask {
            node: i,
            reason: format!("distance between nodes {a} and {b} is untrusted"),
        })
    };
    let mut g = [[0.0; 2]; 2];
    for j in 0..2 {
        for k in 0..2 {
            let (pj, mj) = (node(offsets[j], 1), node(offsets[j], -1));
            let (pk, mk) = (node(offsets[k], 1), node(offsets[k], -1));
            let mixed = sq(pj, pk)? - sq(pj, mk)? - sq(mj, pk)? + sq(mj, mk)?;
            g[j][k] = -0.5 * mixed / (4.0 * spacing[j] * spacing[k]);
        }
    }
    let out = MetricTensor::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1]);
    if !out.is_positive_definite() {
        let (lo, hi) = out.eigenvalues();
        return Err(Error::Conditioning { node: i, lo, hi });
    }
    Ok(out)
}

/// Metric at node `i` from recovered distances, one-cell stencil.
pub fn recover_metric(d: &DistanceMatrix, rule: &QuadratureRule, i: usize) -> Result<MetricTensor> {
    metric_from_sigma(|a, b| d.get(a, b).map(|v| v * v), rule.shape(), i, 1)
}

/// Per-node metric; `None` where the grid has no room for the stencil.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricField(pub Vec<Option<MetricTensor>>);

impl MetricField {
    pub fn get(&self, i: usize) -> Option<&MetricTensor> {
        self.0.get(i).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn known(&self) -> impl Iterator<Item = (usize, &MetricTensor)> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (i, g)))
    }
}

/// One-cell stencil at every node where it fits.
pub fn recover_metric_field(d: &DistanceMatrix, rule: &QuadratureRule) -> Result<MetricField> {
    let shape = rule.shape();
    let field = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            if stencil_fits(shape, i, 1) {
                recover_metric(d, rule, i).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricField(field))
}

/// Metric from chord distances of an embedding. The one-cell stencil
/// applied to `‖ι(x) − ι(y)‖²` carries an `O(h²)` chord-versus-arc bias;
/// combining spacings `h` and `2h` as `(4 g_h − g_2h)/3` removes it.
/// Nodes whose two-cell stencil is missing or untrusted are `None`.
pub fn chord_metric_field(d: &DistanceMatrix, rule: &QuadratureRule) -> Result<MetricField> {
    let shape = rule.shape();
    let sigma = |a: usize, b: usize| d.get(a, b).map(|v| v * v);
    let field = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            if !stencil_fits(shape, i, 2) {
                return Ok(None);
            }
            let fine = metric_from_sigma(sigma, shape, i, 1)?;
            let coarse = match metric_from_sigma(sigma, shape, i, 2) {
                // the wider stencil can reach past the trusted kernel range
                Err(Error::InsufficientMask { .. }) => return Ok(None),
                other => other?,
            };
            let g = MetricTensor::new(
                (4.0 * fine.uu - coarse.uu) / 3.0,
                (4.0 * fine.uv - coarse.uv) / 3.0,
                (4.0 * fine.vv - coarse.vv) / 3.0,
            );
            if !g.is_positive_definite() {
                let (lo, hi) = g.eigenvalues();
                return Err(Error::Conditioning { node: i, lo, hi });
            }
            Ok(Some(g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricField(field))
}

/// `p̂_i = m̂_i / (sqrt(det ĝ_i) · chart cell area)`; `None` where the
/// metric is unknown.
pub fn recover_density(
    m: &MassVector,
    metric: &MetricField,
    rule: &QuadratureRule,
) -> Result<Vec<Option<f64>>> {
    if m.len() != rule.len() || metric.len() != rule.len() {
        return Err(Error::LengthMismatch {
            expected: rule.len(),
            got: m.len().min(metric.len()),
        });
    }
    m.values()
        .iter()
        .zip(&metric.0)
        .zip(rule.chart_weights())
        .enumerate()
        .map(|(i, ((&mi, g), &area))| match g {
            None => Ok(None),
            Some(g) if !g.is_positive_definite() => {
                let (lo, hi) = g.eigenvalues();
                Err(Error::Conditioning { node: i, lo, hi })
            }
            Some(g) => Ok(Some(mi / (g.det().sqrt() * area))),
        })
        .collect()
}

/// Everything the pipeline produces before density separation.
struct Stages {
    mass: MassVector,
    kd: KernelDistance,
    mask_edges: usize,
}

fn run_stages(op: &OperatorMatrix, opts: &RecoveryOptions) -> Result<Stages> {
    let wk = extract_weighted_kernel(op, opts.edge_threshold)?;
    let mask_edges = wk.mask.iter().filter(|&&b| b).count();
    let mass = recover_mass(&wk, opts.refine_masses)?;
    let kd = recover_kernel_distance(&wk, &mass, op.t())?;
    Ok(Stages {
        mass,
        kd,
        mask_edges,
    })
}

/// Rebuild the quadrature rule an operator was assembled on.
pub fn rule_for(op: &OperatorMatrix) -> Result<QuadratureRule> {
    let rule = build_grid(op.measure_metric(), op.shape().resolution)?;
    check_rule(op, &rule)?;
    Ok(rule)
}

fn check_rule(op: &OperatorMatrix, rule: &QuadratureRule) -> Result<()> {
    if rule.shape() != op.shape() || rule.nodes() != op.nodes() {
        return Err(Error::NodeMismatch(
            "quadrature rule and operator nodes differ".into(),
        ));
    }
    Ok(())
}

/// Ambient distances from an extrinsic operator, then the induced metric
/// from their squares.
pub fn recover_induced_metric_from_extrinsic(
    op: &OperatorMatrix,
    rule: &QuadratureRule,
    opts: &RecoveryOptions,
) -> Result<MetricField> {
    if !op.mode().is_extrinsic() {
        return Err(Error::InvalidParameter(
            "operator was not assembled with an extrinsic kernel".into(),
        ));
    }
    check_rule(op, rule)?;
    let stages = run_stages(op, opts)?;
    chord_metric_field(&stages.kd.distance, rule)
}

/// Ground truth for error reporting.
#[derive(Clone, Debug)]
pub struct Reference {
    pub masses: Option<Vec<f64>>,
    pub density: Option<Vec<f64>>,
    /// The recoverable metric: the kernel metric for intrinsic operators,
    /// the embedding-induced metric for extrinsic ones.
    pub metric: Vec<MetricTensor>,
    geometry: KernelGeometry,
}

impl Reference {
    pub fn new(
        op: &OperatorMatrix,
        density: Option<&NormalizedDensity>,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        check_rule(op, rule)?;
        let metric = match op.mode() {
            KernelMode::Intrinsic(m) => rule
                .nodes()
                .iter()
                .map(|&x| m.metric_at(x))
                .collect::<Result<_>>()?,
            KernelMode::Extrinsic(e) => rule
                .nodes()
                .iter()
                .map(|&x| e.first_fundamental_form(x))
                .collect(),
        };
        let densities =
            density.map(|p| rule.nodes().iter().map(|&x| p.value(x)).collect::<Vec<_>>());
        let masses = densities
            .as_ref()
            .map(|d| d.iter().zip(rule.weights()).map(|(p, w)| p * w).collect());
        Ok(Self {
            masses,
            density: densities,
            metric,
            geometry: op.mode().geometry()?,
        })
    }
}

/// Node with its recovered metric, for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMetric {
    pub node: usize,
    pub u: f64,
    pub v: f64,
    pub g: MetricTensor,
}

/// Output of the full pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub version: String,
    pub nodes: usize,
    pub resolution: usize,
    pub t: f64,
    pub mode: String,
    pub options: RecoveryOptions,
    pub trusted_edges: usize,
    pub mass: Vec<f64>,
    pub metric: Vec<NodeMetric>,
    pub density: Vec<Option<f64>>,
    /// Named deviations from [`Reference`], when one was supplied.
    pub errors: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    /// Externalized matrices, file names relative to the report.
    pub matrices: BTreeMap<String, String>,
    #[serde(skip)]
    pub kernel: Option<Array2<f64>>,
    #[serde(skip)]
    pub distance: Option<DistanceMatrix>,
    #[serde(skip)]
    pub metric_field: Option<MetricField>,
}

/// Run every stage. Intrinsic operators use the one-cell stencil;
/// extrinsic operators use the chord-corrected stencil of
/// [`chord_metric_field`].
pub fn recover(
    op: &OperatorMatrix,
    rule: &QuadratureRule,
    opts: &RecoveryOptions,
    reference: Option<&Reference>,
) -> Result<RecoveryReport> {
    check_rule(op, rule)?;
    let Stages {
        mass,
        kd,
        mask_edges,
    } = run_stages(op, opts)?;
    let field = if op.mode().is_extrinsic() {
        chord_metric_field(&kd.distance, rule)?
    } else {
        recover_metric_field(&kd.distance, rule)?
    };
    let density = recover_density(&mass, &field, rule)?;

    let mut errors = BTreeMap::new();
    if let Some(r) = reference {
        reference_errors(&mut errors, r, rule, &mass, &kd.distance, &field, &density);
    }
    let metric = field
        .known()
        .map(|(i, g)| NodeMetric {
            node: i,
            u: rule.nodes()[i].u(),
            v: rule.nodes()[i].v(),
            g: *g,
        })
        .collect();
    Ok(RecoveryReport {
        version: crate::VERSION.to_string(),
        nodes: op.len(),
        resolution: op.shape().resolution,
        t: op.t(),
        mode: op.mode().to_string(),
        options: *opts,
        trusted_edges: mask_edges,
        mass: mass.0,
        metric,
        density,
        errors,
        warnings: op.warnings(),
        matrices: BTreeMap::new(),
        kernel: Some(kd.kernel),
        distance: Some(kd.distance),
        metric_field: Some(field),
    })
}

fn reference_errors(
    errors: &mut BTreeMap<String, f64>,
    r: &Reference,
    rule: &QuadratureRule,
    mass: &MassVector,
    d: &DistanceMatrix,
    field: &MetricField,
    density: &[Option<f64>],
) {
    if let Some(true_m) = &r.masses {
        let e = mass
            .values()
            .iter()
            .zip(true_m)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        errors.insert("mass_max_rel_error".into(), e);
    }
    let features: Vec<[f64; 4]> = rule
        .nodes()
        .iter()
        .map(|&x| r.geometry.feature(x))
        .collect();
    let n = rule.len();
    let dist_err = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            for j in 0..n {
                if let Some(v) = d.get(i, j) {
                    let exact = r.geometry.sq_distance(&features[i], &features[j]).sqrt();
                    worst = worst.max((v - exact).abs());
                }
            }
            worst
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    errors.insert("distance_max_abs_error".into(), dist_err);

    let diffs: Vec<f64> = field
        .known()
        .map(|(i, g)| g.max_abs_diff(&r.metric[i]))
        .collect();
    if !diffs.is_empty() {
        errors.insert(
            "metric_max_abs_error".into(),
            diffs.iter().copied().fold(0.0, f64::max),
        );
        let rms = (diffs.iter().map(|e| e * e).sum::<f64>() / diffs.len() as f64).sqrt();
        errors.insert("metric_rms_error".into(), rms);
    }
    if let Some(true_p) = &r.density {
        let rel: Vec<f64> = density
            .iter()
            .zip(true_p)
            .filter_map(|(a, b)| a.map(|a| ((a - b) / b).abs()))
            .collect();
        if !rel.is_empty() {
            errors.insert(
                "density_max_rel_error".into(),
                rel.iter().copied().fold(0.0, f64::max),
            );
            let rms = (rel.iter().map(|e| e * e).sum::<f64>() / rel.len() as f64).sqrt();
            errors.insert("density_rms_rel_error".into(), rms);
        }
    }
}

impl RecoveryReport {
    /// Write the kernel and distance matrices next to a report in `dir`,
    /// recording their file names.
    pub fn externalize(&mut self, op: &OperatorMatrix, dir: &Path, stem: &str) -> Result<()> {
        if let Some(k) = &self.kernel {
            let name = format!("{stem}_kernel.bin");
            write_matrix(
                std::fs::File::create(dir.join(&name))?,
                op,
                MatrixContent::Kernel,
                k,
            )?;
            self.matrices.insert("kernel".into(), name);
        }
        if let Some(d) = &self.distance {
            let name = format!("{stem}_distance.bin");
            write_matrix(
                std::fs::File::create(dir.join(&name))?,
                op,
                MatrixContent::Distance,
                d.values(),
            )?;
            self.matrices.insert("distance".into(), name);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Per-node mass, metric and density; unknown values are empty cells.
    pub fn node_table(&self, rule: &QuadratureRule) -> Table {
        let mut metric = vec![None; self.nodes];
        for m in &self.metric {
            metric[m.node] = Some(m.g);
        }
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let rows = rule
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let g = metric[i];
                vec![
                    i.to_string(),
                    x.u().to_string(),
                    x.v().to_string(),
                    self.mass[i].to_string(),
                    cell(g.map(|g| g.uu)),
                    cell(g.map(|g| g.uv)),
                    cell(g.map(|g| g.vv)),
                    cell(self.density[i]),
                ]
            })
            .collect();
        Table {
            file: "recovery.csv".into(),
            comments: vec![format!(
                "glid {} recovery mode={} t={} resolution={} refine={} edge_threshold={}",
                self.version,
                self.mode,
                self.t,
                self.resolution,
                self.options.refine_masses,
                self.options.edge_threshold
            )],
            header: ["node", "u", "v", "mass", "g_uu", "g_uv", "g_vv", "density"]
                .map(String::from)
                .to_vec(),
            rows,
        }
    }
}
