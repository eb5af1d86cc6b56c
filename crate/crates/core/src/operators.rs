//! Unnormalized graph Laplace operators with a Gaussian kernel.
//!
//! The continuous operator
//!
//! ```text
//! (L_t f)(x) = t^{-(d/2+1)} ∫ exp(-ℓ(x,y)²/t) (f(x) - f(y)) p(y) dμ(y)
//! ```
//!
//! is realized on quadrature nodes as a dense matrix
//! `L_ij = c (δ_ij Σ_k W_ik − W_ij)` with `W_ij = exp(−ℓ(x_i,x_j)²/t) p(x_j) w_j`
//! and `c = t^{-2}` (surfaces, `d = 2`). The discrete operator replaces the
//! integral by an average over i.i.d. samples.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{GridShape, NormalizedDensity, QuadratureRule, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, EmbeddingSpec, KernelGeometry, Manifold, MetricSpec};

/// Manifold dimension.
pub const DIM: usize = 2;

/// Largest node count assembled densely (a 64 × 64 torus grid).
pub const DENSE_NODE_CAP: usize = 64 * 64;

/// `t^{-(d/2+1)}` for `d = 2`.
pub fn prefactor(t: f64) -> f64 {
    1.0 / (t * t)
}

/// Which distance the Gaussian kernel uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelMode {
    /// Geodesic distance of the metric.
    Intrinsic(MetricSpec),
    /// Euclidean distance between embedded points.
    Extrinsic(EmbeddingSpec),
}

impl KernelMode {
    pub(crate) fn geometry(&self) -> Result<KernelGeometry> {
        match self {
            KernelMode::Intrinsic(m) => KernelGeometry::intrinsic(m),
            KernelMode::Extrinsic(e) => KernelGeometry::extrinsic(e),
        }
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            KernelMode::Intrinsic(m) => m.manifold(),
            KernelMode::Extrinsic(e) => e.manifold(),
        }
    }

    pub fn is_extrinsic(&self) -> bool {
        matches!(self, KernelMode::Extrinsic(_))
    }

    /// Kernel distance between two chart points.
    pub fn distance(&self, x: ChartPoint, y: ChartPoint) -> Result<f64> {
        match self {
            KernelMode::Intrinsic(m) => m.geodesic_distance(x, y),
            KernelMode::Extrinsic(e) => Ok(e.ambient_distance(x, y)),
        }
    }

    fn check_measure(&self, measure: &MetricSpec) -> Result<()> {
        match self {
            KernelMode::Intrinsic(m) if m != measure => Err(Error::InvalidParameter(format!(
                "intrinsic kernel metric {m} differs from measure metric {measure}"
            ))),
            KernelMode::Extrinsic(e) if e.manifold() != measure.manifold() => {
                Err(Error::InvalidParameter(format!(
                    "embedding {e} does not parametrize the chart of {measure}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelMode::Intrinsic(m) => write!(f, "intrinsic({m})"),
            KernelMode::Extrinsic(e) => write!(f, "extrinsic({e})"),
        }
    }
}

fn check_bandwidth(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {t}"
        )));
    }
    Ok(())
}

/// Continuous operator on quadrature nodes, applied without storing the
/// matrix. Mandatory above [`DENSE_NODE_CAP`] nodes.
#[derive(Clone, Debug)]
pub struct ContinuousOperator {
    mode: KernelMode,
    measure_metric: MetricSpec,
    geometry: KernelGeometry,
    shape: GridShape,
    nodes: Vec<ChartPoint>,
    features: Vec<[f64; 4]>,
    masses: Vec<f64>,
    t: f64,
}

impl ContinuousOperator {
    pub fn new(
        mode: KernelMode,
        measure_metric: &MetricSpec,
        density: &NormalizedDensity,
        rule: &QuadratureRule,
        t: f64,
    ) -> Result<Self> {
        check_bandwidth(t)?;
        if rule.metric() != measure_metric {
            return Err(Error::InvalidParameter(format!(
                "quadrature rule was built for {}, not {measure_metric}",
                rule.metric()
            )));
        }
        mode.check_measure(measure_metric)?;
        let geometry = mode.geometry()?;
        let masses: Vec<f64> = rule
            .nodes()
            .iter()
            .zip(rule.weights())
            .map(|(&x, &w)| density.value(x) * w)
            .collect();
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDensity(format!(
                "density integrates to {total} on this rule; normalize it against the rule first"
            )));
        }
        let features = rule.nodes().iter().map(|&x| geometry.feature(x)).collect();
        Ok(Self {
            mode,
            measure_metric: *measure_metric,
            geometry,
            shape: *rule.shape(),
            nodes: rule.nodes().to_vec(),
            features,
            masses,
            t,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node masses `p(x_j) w_j`.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    fn kernel(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        (-self.geometry.sq_distance(a, b) / self.t).exp()
    }

    /// Off-diagonal entries of row `i` written into `row`, diagonal last so
    /// the row sums to zero up to one rounding of the diagonal.
    fn fill_row(&self, i: usize, row: &mut [f64]) {
        let c = prefactor(self.t);
        let xi = &self.features[i];
        let mut degree = 0.0;
        for (j, slot) in row.iter_mut().enumerate() {
            if j == i {
                continue;
            }
            let e = -c * self.kernel(xi, &self.features[j]) * self.masses[j];
            *slot = e;
            degree -= e;
        }
        row[i] = degree;
    }

    /// `L f` on the nodes, row by row.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        let c = prefactor(self.t);
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| {
                let xi = &self.features[i];
                let mut acc = 0.0;
                for j in 0..self.len() {
                    if j != i {
                        acc += self.kernel(xi, &self.features[j]) * self.masses[j] * (f[i] - f[j]);
                    }
                }
                c * acc
            })
            .collect())
    }

    /// Quadrature value of `(L_t f)(x)` at an arbitrary chart point.
    pub fn value_at(&self, x: ChartPoint, f: impl Fn(ChartPoint) -> f64) -> f64 {
        let fx = f(x);
        let a = self.geometry.feature(x);
        let acc: f64 = self
            .features
            .iter()
            .zip(&self.nodes)
            .zip(&self.masses)
            .map(|((b, &y), &m)| self.kernel(&a, b) * m * (fx - f(y)))
            .sum();
        prefactor(self.t) * acc
    }

    /// Dense matrix; fails above [`DENSE_NODE_CAP`] nodes.
    pub fn assemble(&self) -> Result<OperatorMatrix> {
        let n = self.len();
        if n > DENSE_NODE_CAP {
            return Err(Error::TooLarge {
                nodes: n,
                cap: DENSE_NODE_CAP,
            });
        }
        let mut entries = Array2::<f64>::zeros((n, n));
        entries
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let row = row.as_slice_mut().expect("standard layout");
                self.fill_row(i, row);
            });
        let underflow_rows = entries
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(i, row)| row.iter().enumerate().all(|(j, &e)| j == *i || e == 0.0))
            .count();
        Ok(OperatorMatrix {
            entries,
            nodes: self.nodes.clone(),
            shape: self.shape,
            t: self.t,
            mode: self.mode,
            measure_metric: self.measure_metric,
            underflow_rows,
        })
    }
}

/// Dense realization of the continuous operator on quadrature nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    entries: Array2<f64>,
    nodes: Vec<ChartPoint>,
    shape: GridShape,
    t: f64,
    mode: KernelMode,
    measure_metric: MetricSpec,
    underflow_rows: usize,
}

/// Assemble the continuous operator densely on the nodes of `rule`.
pub fn assemble_continuous(
    mode: KernelMode,
    measure_metric: &MetricSpec,
    density: &NormalizedDensity,
    rule: &QuadratureRule,
    t: f64,
) -> Result<OperatorMatrix> {
    ContinuousOperator::new(mode, measure_metric, density, rule, t)?.assemble()
}

impl OperatorMatrix {
    /// Wrap raw entries, e.g. read back from disk.
    pub fn from_parts(
        entries: Array2<f64>,
        nodes: Vec<ChartPoint>,
        shape: GridShape,
        t: f64,
        mode: KernelMode,
        measure_metric: MetricSpec,
    ) -> Result<Self> {
        check_bandwidth(t)?;
        let n = nodes.len();
        if entries.dim() != (n, n) || shape.len() != n {
            return Err(Error::Format(format!(
                "entries {:?}, {} nodes and grid {}x{} disagree",
                entries.dim(),
                n,
                shape.n_u,
                shape.n_v
            )));
        }
        let underflow_rows = entries
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(i, row)| row.iter().enumerate().all(|(j, &e)| j == *i || e == 0.0))
            .count();
        Ok(Self {
            entries,
            nodes,
            shape,
            t,
            mode,
            measure_metric,
            underflow_rows,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn nodes(&self) -> &[ChartPoint] {
        &self.nodes
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn mode(&self) -> &KernelMode {
        &self.mode
    }

    pub fn measure_metric(&self) -> &MetricSpec {
        &self.measure_metric
    }

    pub fn dim(&self) -> usize {
        DIM
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rows whose kernel underflowed to zero off the diagonal.
    pub fn underflow_rows(&self) -> usize {
        self.underflow_rows
    }

    pub fn warnings(&self) -> Vec<String> {
        if self.underflow_rows == 0 {
            return Vec::new();
        }
        vec![format!(
            "{} of {} rows underflowed to zero; bandwidth {} is too small for the grid spacing",
            self.underflow_rows,
            self.len(),
            self.t
        )]
    }

    /// Matrix-vector product.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        let f = ndarray::ArrayView1::from(f);
        Ok(self.entries.dot(&f).to_vec())
    }

    /// Largest `|Σ_j L_ij|`.
    pub fn max_row_sum(&self) -> f64 {
        self.entries
            .axis_iter(Axis(0))
            .map(|row| row.sum().abs())
            .fold(0.0, f64::max)
    }
}

/// Largest absolute entrywise difference between two operators on the same
/// nodes and bandwidth.
pub fn operator_distance(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<f64> {
    if a.nodes != b.nodes {
        return Err(Error::NodeMismatch(format!(
            "operators live on different node sets ({} vs {} nodes)",
            a.len(),
            b.len()
        )));
    }
    if a.t != b.t {
        return Err(Error::NodeMismatch(format!(
            "bandwidths differ: {} vs {}",
            a.t, b.t
        )));
    }
    Ok(a.entries
        .iter()
        .zip(b.entries.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Sample-based operator `(L_{n,t} f)(x)`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    samples: SampleSet,
    t: f64,
    mode: KernelMode,
    geometry: KernelGeometry,
    features: Vec<[f64; 4]>,
    eval_nodes: Vec<ChartPoint>,
}

impl DiscreteOperator {
    pub fn new(
        samples: SampleSet,
        t: f64,
        mode: KernelMode,
        eval_nodes: Vec<ChartPoint>,
    ) -> Result<Self> {
        check_bandwidth(t)?;
        let geometry = mode.geometry()?;
        let features = samples
            .points()
            .iter()
            .map(|&x| geometry.feature(x))
            .collect();
        Ok(Self {
            samples,
            t,
            mode,
            geometry,
            features,
            eval_nodes,
        })
    }

    pub fn samples(&self) -> &SampleSet {
        &self.samples
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn mode(&self) -> &KernelMode {
        &self.mode
    }

    pub fn eval_nodes(&self) -> &[ChartPoint] {
        &self.eval_nodes
    }

    pub fn evaluate(&self, f: impl Fn(ChartPoint) -> f64, x: ChartPoint) -> f64 {
        let n = self.samples.len() as f64;
        let fx = f(x);
        let a = self.geometry.feature(x);
        let mut acc = 0.0;
        for (b, &y) in self.features.iter().zip(self.samples.points()) {
            if y == x {
                continue;
            }
            acc += (-self.geometry.sq_distance(&a, b) / self.t).exp() * (fx - f(y));
        }
        prefactor(self.t) * acc / n
    }

    /// Values at every evaluation node.
    pub fn evaluate_nodes(&self, f: impl Fn(ChartPoint) -> f64 + Sync) -> Vec<f64> {
        self.eval_nodes
            .par_iter()
            .map(|&x| self.evaluate(&f, x))
            .collect()
    }
}

/// `(L_{n,t} f)(x)`.
pub fn evaluate_discrete(
    dop: &DiscreteOperator,
    f: impl Fn(ChartPoint) -> f64,
    x: ChartPoint,
) -> f64 {
    dop.evaluate(f, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_grid, normalize_density, sample_points, Axis, DensitySpec};

    fn setup(
        metric: MetricSpec,
        density: DensitySpec,
        n: usize,
    ) -> (QuadratureRule, NormalizedDensity) {
        let rule = build_grid(&metric, n).unwrap();
        let p = normalize_density(&density, &rule).unwrap();
        (rule, p)
    }

    #[test]
    fn annihilates_constants() {
        let bump = DensitySpec::cosine(0.5, Axis::U).unwrap();
        for (mode, metric) in [
            (
                KernelMode::Intrinsic(MetricSpec::flat()),
                MetricSpec::flat(),
            ),
            (
                KernelMode::Extrinsic(EmbeddingSpec::CliffordTorus),
                MetricSpec::anisotropic(2.0).unwrap(),
            ),
            (
                KernelMode::Intrinsic(MetricSpec::sphere(1.0).unwrap()),
                MetricSpec::sphere(1.0).unwrap(),
            ),
        ] {
            let (rule, p) = setup(metric, bump, 16);
            let op = assemble_continuous(mode, &metric, &p, &rule, 0.5).unwrap();
            let lf = op.apply(&vec![1.0; op.len()]).unwrap();
            assert!(lf.iter().all(|v| v.abs() <= 1e-12), "{mode}");
        }
    }

    #[test]
    fn signs_and_symmetry() {
        let (rule, p) = setup(MetricSpec::flat(), DensitySpec::Uniform, 16);
        let op = assemble_continuous(
            KernelMode::Intrinsic(MetricSpec::flat()),
            &MetricSpec::flat(),
            &p,
            &rule,
            0.5,
        )
        .unwrap();
        let e = op.entries();
        for i in 0..op.len() {
            assert!(e[[i, i]] >= 0.0);
            for j in 0..op.len() {
                if i != j {
                    assert!(e[[i, j]] <= 0.0);
                    assert!((e[[i, j]] - e[[j, i]]).abs() <= 1e-12 * e[[i, i]]);
                }
            }
        }
    }

    #[test]
    fn example_one_pair() {
        let g1 = MetricSpec::flat();
        let g2 = MetricSpec::anisotropic(2.0).unwrap();
        let (r1, p1) = setup(g1, DensitySpec::Uniform, 16);
        let (r2, p2) = setup(g2, DensitySpec::Uniform, 16);
        let clifford = KernelMode::Extrinsic(EmbeddingSpec::CliffordTorus);
        let a = assemble_continuous(clifford, &g1, &p1, &r1, 0.5).unwrap();
        let b = assemble_continuous(clifford, &g2, &p2, &r2, 0.5).unwrap();
        assert!(operator_distance(&a, &b).unwrap() <= 1e-14);
        assert_eq!(operator_distance(&a, &a).unwrap(), 0.0);
        let ai = assemble_continuous(KernelMode::Intrinsic(g1), &g1, &p1, &r1, 0.5).unwrap();
        let bi = assemble_continuous(KernelMode::Intrinsic(g2), &g2, &p2, &r2, 0.5).unwrap();
        assert!(operator_distance(&ai, &bi).unwrap() > 1e-3);
    }

    #[test]
    fn indicator_reads_off_weighted_kernel() {
        let metric = MetricSpec::flat();
        let (rule, p) = setup(metric, DensitySpec::cosine(0.5, Axis::V).unwrap(), 8);
        let t = 0.5;
        let op = assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, t).unwrap();
        let j = 5;
        let mut f = vec![0.0; op.len()];
        f[j] = 1.0;
        let col = op.apply(&f).unwrap();
        let c = prefactor(t);
        for (i, &v) in col.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = metric
                .geodesic_distance(rule.nodes()[i], rule.nodes()[j])
                .unwrap();
            let w = (-d * d / t).exp() * p.value(rule.nodes()[j]) * rule.weights()[j];
            assert!((v + c * w).abs() <= 1e-15, "row {i}");
        }
    }

    #[test]
    fn apply_is_linear_and_checks_length() {
        let metric = MetricSpec::anisotropic(1.5).unwrap();
        let (rule, p) = setup(metric, DensitySpec::Uniform, 8);
        let op =
            assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, 0.5).unwrap();
        let f: Vec<f64> = rule.nodes().iter().map(|x| x.u().sin()).collect();
        let g: Vec<f64> = rule.nodes().iter().map(|x| (x.v() * 2.0).cos()).collect();
        let comb: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lf = op.apply(&f).unwrap();
        let lg = op.apply(&g).unwrap();
        let lc = op.apply(&comb).unwrap();
        for i in 0..op.len() {
            assert!((lc[i] - (2.0 * lf[i] - 3.0 * lg[i])).abs() <= 1e-12);
        }
        assert!(matches!(
            op.apply(&[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn matrix_free_agrees_with_dense() {
        let metric = MetricSpec::flat();
        let (rule, p) = setup(metric, DensitySpec::cosine(0.4, Axis::U).unwrap(), 16);
        let cont = ContinuousOperator::new(KernelMode::Intrinsic(metric), &metric, &p, &rule, 0.5)
            .unwrap();
        let dense = cont.assemble().unwrap();
        let f: Vec<f64> = rule
            .nodes()
            .iter()
            .map(|x| x.u().cos() * x.v().sin())
            .collect();
        let a = cont.apply(&f).unwrap();
        let b = dense.apply(&f).unwrap();
        for i in 0..f.len() {
            assert!((a[i] - b[i]).abs() <= 1e-13);
        }
        let x = rule.nodes()[17];
        let v = cont.value_at(x, |y| y.u().cos() * y.v().sin());
        assert!((v - b[17]).abs() <= 1e-13);
    }

    #[test]
    fn rejects_bad_inputs() {
        let metric = MetricSpec::flat();
        let (rule, p) = setup(metric, DensitySpec::Uniform, 8);
        let mode = KernelMode::Intrinsic(metric);
        assert!(matches!(
            assemble_continuous(mode, &metric, &p, &rule, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(assemble_continuous(mode, &metric, &p, &rule, -1.0).is_err());
        let other = MetricSpec::anisotropic(2.0).unwrap();
        assert!(
            assemble_continuous(KernelMode::Intrinsic(other), &metric, &p, &rule, 0.5).is_err()
        );
        assert!(assemble_continuous(
            KernelMode::Extrinsic(EmbeddingSpec::UnitSphere),
            &metric,
            &p,
            &rule,
            0.5
        )
        .is_err());
        let big = build_grid(&metric, 66).unwrap();
        let pb = normalize_density(&DensitySpec::Uniform, &big).unwrap();
        assert!(matches!(
            assemble_continuous(mode, &metric, &pb, &big, 0.5),
            Err(Error::TooLarge { .. })
        ));
        // normalized against another measure
        let bump = DensitySpec::cosine(0.5, crate::discretization::Axis::U).unwrap();
        let sphere_rule = build_grid(&MetricSpec::sphere(1.0).unwrap(), 8).unwrap();
        let foreign = normalize_density(&bump, &sphere_rule).unwrap();
        assert!(matches!(
            assemble_continuous(mode, &metric, &foreign, &rule, 0.5),
            Err(Error::InvalidDensity(_))
        ));
    }

    #[test]
    fn underflow_warning() {
        let metric = MetricSpec::flat();
        let (rule, p) = setup(metric, DensitySpec::Uniform, 8);
        let op =
            assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, 1e-4).unwrap();
        assert_eq!(op.underflow_rows(), op.len());
        assert_eq!(op.warnings().len(), 1);
        let ok =
            assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, 0.5).unwrap();
        assert!(ok.warnings().is_empty());
    }

    #[test]
    fn row_sums_vanish_on_bandwidth_ladder() {
        let metric = MetricSpec::anisotropic(2.0).unwrap();
        let (rule, p) = setup(metric, DensitySpec::cosine(0.5, Axis::U).unwrap(), 16);
        for k in 0..=6 {
            let t = 2f64.powi(-k);
            for mode in [
                KernelMode::Intrinsic(metric),
                KernelMode::Extrinsic(EmbeddingSpec::CliffordTorus),
            ] {
                let op = assemble_continuous(mode, &metric, &p, &rule, t).unwrap();
                assert!(op.max_row_sum() <= 1e-12, "t={t} {mode}");
            }
        }
    }

    #[test]
    fn discrete_trivial_cases() {
        let metric = MetricSpec::flat();
        let (rule, p) = setup(metric, DensitySpec::Uniform, 8);
        let samples = sample_points(&p, &metric, 200, 1).unwrap();
        let dop = DiscreteOperator::new(
            samples,
            0.5,
            KernelMode::Intrinsic(metric),
            rule.nodes().to_vec(),
        )
        .unwrap();
        let x = ChartPoint::new(0.3, 1.0);
        assert_eq!(evaluate_discrete(&dop, |_| 3.5, x), 0.0);
        assert!(dop.evaluate_nodes(|_| -2.0).iter().all(|&v| v == 0.0));

        let single = sample_points(&p, &metric, 1, 9).unwrap();
        let x = single.points()[0];
        let dop =
            DiscreteOperator::new(single, 0.5, KernelMode::Intrinsic(metric), vec![x]).unwrap();
        assert_eq!(evaluate_discrete(&dop, |y| y.u().cos(), x), 0.0);
    }

    #[test]
    fn discrete_matches_continuous_within_three_standard_errors() {
        let metric = MetricSpec::flat();
        let t = 0.5;
        let mode = KernelMode::Intrinsic(metric);
        let (fine, pf) = setup(metric, DensitySpec::Uniform, 128);
        let cont = ContinuousOperator::new(mode, &metric, &pf, &fine, t).unwrap();
        let x = ChartPoint::new(0.0, 0.0);
        let f = |y: ChartPoint| y.u().cos();
        let reference = cont.value_at(x, f);

        let n = 100_000;
        let samples = sample_points(&pf, &metric, n, 2024).unwrap();
        let c = prefactor(t);
        // per-sample terms for the empirical standard error
        let terms: Vec<f64> = samples
            .points()
            .iter()
            .map(|&y| {
                let d = metric.geodesic_distance(x, y).unwrap();
                c * (-d * d / t).exp() * (f(x) - f(y))
            })
            .collect();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let var = terms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        let dop = DiscreteOperator::new(samples, t, mode, vec![x]).unwrap();
        let value = evaluate_discrete(&dop, f, x);
        assert!((value - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!(
            (value - reference).abs() <= 3.0 * se,
            "{value} vs {reference} (se {se})"
        );
    }
}
