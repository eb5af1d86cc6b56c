//! Quadrature grids for `∫ · dμ_g` and i.i.d. samplers for `p dμ_g`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parse_num, ChartPoint, EmbeddingSpec, Manifold, MetricSpec, POLE_GUARD};
use crate::rng::XorShift64Star;

/// Layout of a regular chart grid. Node `(a, b)` has index `a * n_v + b` and
/// coordinates `(u_offset + a h_u, b h_v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    /// Resolution parameter the grid was built from.
    pub resolution: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub h_u: f64,
    pub h_v: f64,
    pub u_offset: f64,
    pub periodic_u: bool,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.n_v + b
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.n_v, i % self.n_v)
    }

    /// Node reached from `i` by `(du, dv)` grid steps; `v` always wraps,
    /// `u` wraps only on the torus.
    pub fn neighbor(&self, i: usize, du: isize, dv: isize) -> Option<usize> {
        let (a, b) = self.coords(i);
        let nu = self.n_u as isize;
        let nv = self.n_v as isize;
        let mut a2 = a as isize + du;
        if self.periodic_u {
            a2 = a2.rem_euclid(nu);
        } else if a2 < 0 || a2 >= nu {
            return None;
        }
        let b2 = (b as isize + dv).rem_euclid(nv);
        Some(self.index(a2 as usize, b2 as usize))
    }
}

/// Nodes and positive weights approximating `∫ · dμ_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    metric: MetricSpec,
    shape: GridShape,
    nodes: Vec<ChartPoint>,
    weights: Vec<f64>,
    chart_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn nodes(&self) -> &[ChartPoint] {
        &self.nodes
    }

    /// `μ_g`-measure carried by each node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Chart (coordinate) area attributed to each node: `weight / √det g`.
    /// Depends only on the grid, not on the metric's scale.
    pub fn chart_weights(&self) -> &[f64] {
        &self.chart_weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(ChartPoint) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Build the quadrature rule for `metric` at resolution `n` (nodes per
/// `2π` of chart angle).
///
/// Torus: `n × n` periodic trapezoid grid, weight `(2π/n)² √det g`.
/// Sphere: rows at colatitudes `h, 2h, …, π − h` with `h = 2π/n` (poles are
/// never nodes) and `n` longitudes; each row carries the exact area of its
/// latitude band, the first and last band extending to the poles, so the
/// weights sum to the sphere area exactly.
pub fn build_grid(metric: &MetricSpec, n: usize) -> Result<QuadratureRule> {
    metric.validate()?;
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be even and at least 4, got {n}"
        )));
    }
    let h = TAU / n as f64;
    match metric.manifold() {
        Manifold::Torus => {
            let shape = GridShape {
                resolution: n,
                n_u: n,
                n_v: n,
                h_u: h,
                h_v: h,
                u_offset: 0.0,
                periodic_u: true,
            };
            let mut nodes = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for a in 0..n {
                for b in 0..n {
                    let x = ChartPoint::new(a as f64 * h, b as f64 * h);
                    weights.push(h * h * metric.volume_density_unchecked(x));
                    nodes.push(x);
                }
            }
            Ok(QuadratureRule {
                metric: *metric,
                shape,
                nodes,
                weights,
                chart_weights: vec![h * h; n * n],
            })
        }
        Manifold::Sphere => {
            let r2 = match *metric {
                MetricSpec::SphereRound { radius } => radius * radius,
                _ => 1.0,
            };
            let n_u = n / 2 - 1;
            let shape = GridShape {
                resolution: n,
                n_u,
                n_v: n,
                h_u: h,
                h_v: h,
                u_offset: h,
                periodic_u: false,
            };
            let mut nodes = Vec::with_capacity(n_u * n);
            let mut weights = Vec::with_capacity(n_u * n);
            let mut chart_weights = Vec::with_capacity(n_u * n);
            for a in 0..n_u {
                let u = (a + 1) as f64 * h;
                let lo = if a == 0 { 0.0 } else { u - 0.5 * h };
                let hi = if a + 1 == n_u { PI } else { u + 0.5 * h };
                let band = (lo.cos() - hi.cos()) * h;
                for b in 0..n {
                    nodes.push(ChartPoint::new(u, b as f64 * h));
                    weights.push(r2 * band);
                    chart_weights.push(band / u.sin());
                }
            }
            Ok(QuadratureRule {
                metric: *metric,
                shape,
                nodes,
                weights,
                chart_weights,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    U,
    V,
}

/// Unnormalized positive density shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DensitySpec {
    Uniform,
    /// `1 + α cos(axis)`, `|α| < 1`.
    CosineBump {
        alpha: f64,
        axis: Axis,
    },
}

impl DensitySpec {
    pub fn cosine(alpha: f64, axis: Axis) -> Result<Self> {
        let d = DensitySpec::CosineBump { alpha, axis };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if let DensitySpec::CosineBump { alpha, .. } = *self {
            if !(alpha.abs() < 1.0) {
                return Err(Error::InvalidDensity(format!(
                    "cosine bump needs |alpha| < 1, got {alpha}"
                )));
            }
        }
        Ok(())
    }

    /// Unnormalized value.
    pub fn raw(&self, x: ChartPoint) -> f64 {
        match *self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::CosineBump { alpha, axis } => {
                let c = match axis {
                    Axis::U => x.u(),
                    Axis::V => x.v(),
                };
                1.0 + alpha * c.cos()
            }
        }
    }

    /// `sup_x raw(x) · √det g(x)` in closed form, the rejection envelope.
    pub(crate) fn envelope(&self, metric: &MetricSpec) -> f64 {
        let (alpha, axis) = match *self {
            DensitySpec::Uniform => (0.0, Axis::V),
            DensitySpec::CosineBump { alpha, axis } => (alpha, axis),
        };
        match *metric {
            MetricSpec::TorusConstant { e, f, g } => (1.0 + alpha.abs()) * (e * g - f * f).sqrt(),
            MetricSpec::Induced(EmbeddingSpec::CliffordTorus) => 1.0 + alpha.abs(),
            MetricSpec::SphereRound { radius } => radius * radius * sphere_envelope(alpha, axis),
            MetricSpec::Induced(EmbeddingSpec::UnitSphere) => sphere_envelope(alpha, axis),
            MetricSpec::Induced(EmbeddingSpec::DonutTorus { major, minor }) => match axis {
                Axis::V => (1.0 + alpha.abs()) * minor * (major + minor),
                Axis::U => {
                    // (1 + αc)(R + rc) over c = cos u ∈ [−1, 1]
                    let q = |c: f64| (1.0 + alpha * c) * (major + minor * c);
                    let mut best = q(-1.0).max(q(1.0));
                    if alpha != 0.0 {
                        let c = -(alpha * major + minor) / (2.0 * alpha * minor);
                        if c.abs() <= 1.0 {
                            best = best.max(q(c));
                        }
                    }
                    minor * best
                }
            },
        }
    }
}

/// `sup (1 + α cos(axis)) sin u` over the sphere chart.
fn sphere_envelope(alpha: f64, axis: Axis) -> f64 {
    match axis {
        Axis::V => 1.0 + alpha.abs(),
        Axis::U if alpha == 0.0 => 1.0,
        Axis::U => {
            // stationary point of (1 + αc)√(1 − c²): 2αc² + c − α = 0
            let c = (-1.0 + (1.0 + 8.0 * alpha * alpha).sqrt()) / (4.0 * alpha);
            (1.0 + alpha * c) * (1.0 - c * c).sqrt()
        }
    }
}

/// A density shape together with the normalizer that makes it integrate to
/// one against a quadrature rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedDensity {
    spec: DensitySpec,
    normalizer: f64,
}

impl NormalizedDensity {
    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn value(&self, x: ChartPoint) -> f64 {
        self.spec.raw(x) / self.normalizer
    }
}

/// Fix `Z` so that `Σ p(xᵢ) wᵢ = 1` on `rule`.
pub fn normalize_density(
    density: &DensitySpec,
    rule: &QuadratureRule,
) -> Result<NormalizedDensity> {
    density.validate()?;
    let mut z = 0.0;
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let raw = density.raw(x);
        if !(raw > 0.0) {
            return Err(Error::InvalidDensity(format!(
                "density is {raw} at (u={}, v={})",
                x.u(),
                x.v()
            )));
        }
        z += raw * w;
    }
    Ok(NormalizedDensity {
        spec: *density,
        normalizer: z,
    })
}

/// i.i.d. chart points drawn from `p dμ_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    points: Vec<ChartPoint>,
    seed: u64,
    density: DensitySpec,
}

impl SampleSet {
    pub fn points(&self) -> &[ChartPoint] {
        &self.points
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn density(&self) -> &DensitySpec {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u", "v"])?;
        for x in &self.points {
            w.write_record([x.u().to_string(), x.v().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Rejection sampler: propose uniformly on the chart, accept with
/// probability `p(x) √det g(x) / sup(p √det g)`.
pub fn sample_points(
    density: &NormalizedDensity,
    metric: &MetricSpec,
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    metric.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let spec = density.spec();
    let envelope = spec.envelope(metric);
    let u_span = match metric.manifold() {
        Manifold::Torus => TAU,
        Manifold::Sphere => PI,
    };
    let sphere = metric.manifold() == Manifold::Sphere;
    let mut rng = XorShift64Star::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let u = u_span * rng.next_f64();
        let v = TAU * rng.next_f64();
        let accept = rng.next_f64();
        if sphere && !(POLE_GUARD..=PI - POLE_GUARD).contains(&u) {
            continue;
        }
        let x = ChartPoint::new(u, v);
        let target = spec.raw(x) * metric.volume_density_unchecked(x);
        if target > envelope * (1.0 + 1e-12) {
            return Err(Error::Logic(format!(
                "acceptance ratio {} exceeds 1 at (u={u}, v={v})",
                target / envelope
            )));
        }
        if accept * envelope < target {
            points.push(x);
        }
    }
    Ok(SampleSet {
        points,
        seed,
        density: *spec,
    })
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Uniform => write!(f, "uniform"),
            DensitySpec::CosineBump { alpha, axis } => {
                let a = match axis {
                    Axis::U => "u",
                    Axis::V => "v",
                };
                write!(f, "cosine:{alpha}:{a}")
            }
        }
    }
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["uniform"] => Ok(DensitySpec::Uniform),
            ["cosine", alpha, axis] => {
                let axis = match *axis {
                    "u" => Axis::U,
                    "v" => Axis::V,
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "density axis must be u or v, got '{other}'"
                        )))
                    }
                };
                DensitySpec::cosine(parse_num(alpha)?, axis)
            }
            _ => Err(Error::InvalidParameter(format!(
                "unknown density '{s}' (expected uniform | cosine:<alpha>:<u|v>)"
            ))),
        }
    }
}
