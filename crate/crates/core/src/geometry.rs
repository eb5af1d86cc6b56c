//! Closed-form surfaces: constant metrics on the flat torus, the round sphere,
//! and three embeddings into Euclidean space.
//!
//! Charts are two angles `(u, v)`. On the torus both are periodic. On the
//! sphere `u` is colatitude in `(0, π)` and `v` longitude; evaluations within
//! [`POLE_GUARD`] of a pole are rejected because the chart metric degenerates
//! there.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from a pole (radians of colatitude) inside which sphere-chart
/// evaluations are rejected.
pub const POLE_GUARD: f64 = 1e-6;

/// Reduce an angle to its representative in `[0, 2π)`.
pub fn reduce_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduce an angular difference to `[-π, π]`. Odd in its argument.
fn reduce_delta(d: f64) -> f64 {
    d - TAU * (d / TAU).round()
}

/// A point in a two-angle chart, both coordinates reduced to `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    u: f64,
    v: f64,
}

impl ChartPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self {
            u: reduce_angle(u),
            v: reduce_angle(v),
        }
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }
}

/// Symmetric 2×2 matrix in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTensor {
    pub uu: f64,
    pub uv: f64,
    pub vv: f64,
}

impl MetricTensor {
    pub const IDENTITY: MetricTensor = MetricTensor {
        uu: 1.0,
        uv: 0.0,
        vv: 1.0,
    };

    pub fn new(uu: f64, uv: f64, vv: f64) -> Self {
        Self { uu, uv, vv }
    }

    pub fn diag(uu: f64, vv: f64) -> Self {
        Self { uu, uv: 0.0, vv }
    }

    pub fn det(&self) -> f64 {
        self.uu * self.vv - self.uv * self.uv
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.uu + self.vv);
        let half = 0.5 * (self.uu - self.vv);
        let rad = half.hypot(self.uv);
        (mean - rad, mean + rad)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.uu > 0.0 && self.det() > 0.0
    }

    /// Quadratic form `g(w, w)`.
    pub fn quad(&self, du: f64, dv: f64) -> f64 {
        self.uu * du * du + 2.0 * self.uv * du * dv + self.vv * dv * dv
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &MetricTensor) -> f64 {
        (self.uu - other.uu)
            .abs()
            .max((self.uv - other.uv).abs())
            .max((self.vv - other.vv).abs())
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.uu, self.uv], [self.uv, self.vv]]
    }
}

/// Which closed surface a chart parametrizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    Torus,
    Sphere,
}

/// A smooth embedding of the torus or sphere chart into `ℝ^D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingSpec {
    /// `(cos u, sin u, cos v, sin v)` in `ℝ⁴`.
    CliffordTorus,
    /// Torus of revolution in `ℝ³`; `u` runs around the tube, `v` around the axis.
    DonutTorus { major: f64, minor: f64 },
    /// `(sin u cos v, sin u sin v, cos u)` in `ℝ³`.
    UnitSphere,
}

impl EmbeddingSpec {
    pub fn donut(major: f64, minor: f64) -> Result<Self> {
        let e = EmbeddingSpec::DonutTorus { major, minor };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EmbeddingSpec::DonutTorus { major, minor } => {
                if !(minor > 0.0 && major > minor && major.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "donut torus needs major > minor > 0, got ({major}, {minor})"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            EmbeddingSpec::CliffordTorus => 4,
            _ => 3,
        }
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            EmbeddingSpec::UnitSphere => Manifold::Sphere,
            _ => Manifold::Torus,
        }
    }

    /// Embedding of raw (unreduced) chart coordinates, zero-padded to four
    /// components.
    pub(crate) fn embed_raw(&self, u: f64, v: f64) -> [f64; 4] {
        match *self {
            EmbeddingSpec::CliffordTorus => [u.cos(), u.sin(), v.cos(), v.sin()],
            EmbeddingSpec::DonutTorus { major, minor } => {
                let ring = major + minor * u.cos();
                [ring * v.cos(), ring * v.sin(), minor * u.sin(), 0.0]
            }
            EmbeddingSpec::UnitSphere => {
                let s = u.sin();
                [s * v.cos(), s * v.sin(), u.cos(), 0.0]
            }
        }
    }

    pub fn embed(&self, x: ChartPoint) -> Vec<f64> {
        self.embed_raw(x.u, x.v)[..self.ambient_dim()].to_vec()
    }

    pub fn ambient_distance(&self, x: ChartPoint, y: ChartPoint) -> f64 {
        sq_norm_diff(&self.embed_raw(x.u, x.v), &self.embed_raw(y.u, y.v)).sqrt()
    }

    /// Gram matrix of the central-difference Jacobian of the embedding.
    pub fn induced_metric(&self, x: ChartPoint, h: f64) -> Result<MetricTensor> {
        if !(h > 0.0 && h <= 1e-3) {
            return Err(Error::InvalidParameter(format!(
                "finite-difference step must lie in (0, 1e-3], got {h}"
            )));
        }
        let (u, v) = (x.u, x.v);
        let pu = self.embed_raw(u + h, v);
        let mu = self.embed_raw(u - h, v);
        let pv = self.embed_raw(u, v + h);
        let mv = self.embed_raw(u, v - h);
        let mut ju = [0.0; 4];
        let mut jv = [0.0; 4];
        for k in 0..4 {
            ju[k] = (pu[k] - mu[k]) / (2.0 * h);
            jv[k] = (pv[k] - mv[k]) / (2.0 * h);
        }
        Ok(MetricTensor::new(
            dot4(&ju, &ju),
            dot4(&ju, &jv),
            dot4(&jv, &jv),
        ))
    }

    /// Closed-form first fundamental form.
    pub fn first_fundamental_form(&self, x: ChartPoint) -> MetricTensor {
        match *self {
            EmbeddingSpec::CliffordTorus => MetricTensor::IDENTITY,
            EmbeddingSpec::DonutTorus { major, minor } => {
                let ring = major + minor * x.u.cos();
                MetricTensor::diag(minor * minor, ring * ring)
            }
            EmbeddingSpec::UnitSphere => {
                let s = x.u.sin();
                MetricTensor::diag(1.0, s * s)
            }
        }
    }
}

/// A Riemannian metric given in closed form on one of the charts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MetricSpec {
    /// `E du² + 2F du dv + G dv²` on the flat torus `ℝ²/(2πℤ)²`.
    TorusConstant { e: f64, f: f64, g: f64 },
    /// Round sphere of the given radius in colatitude/longitude coordinates.
    SphereRound { radius: f64 },
    /// Pullback of the Euclidean metric through an embedding.
    Induced(EmbeddingSpec),
}

impl MetricSpec {
    pub fn torus(e: f64, f: f64, g: f64) -> Result<Self> {
        let m = MetricSpec::TorusConstant { e, f, g };
        m.validate()?;
        Ok(m)
    }

    pub fn flat() -> Self {
        MetricSpec::TorusConstant {
            e: 1.0,
            f: 0.0,
            g: 1.0,
        }
    }

    /// `a² du² + a⁻² dv²`, unit volume density for every `a`.
    pub fn anisotropic(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "anisotropy must be positive, got {a}"
            )));
        }
        let a2 = a * a;
        Self::torus(a2, 0.0, 1.0 / a2)
    }

    /// `c² (du² + dv²)`.
    pub fn scaled_flat(c: f64) -> Result<Self> {
        let c2 = c * c;
        Self::torus(c2, 0.0, c2)
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        let m = MetricSpec::SphereRound { radius };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MetricSpec::TorusConstant { e, f, g } => {
                if !(e > 0.0 && e * g - f * f > 0.0 && e.is_finite() && g.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "torus metric ({e}, {f}, {g}) is not positive definite"
                    )));
                }
            }
            MetricSpec::SphereRound { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
            MetricSpec::Induced(emb) => emb.validate()?,
        }
        Ok(())
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            MetricSpec::TorusConstant { .. } => Manifold::Torus,
            MetricSpec::SphereRound { .. } => Manifold::Sphere,
            MetricSpec::Induced(emb) => emb.manifold(),
        }
    }

    fn check_point(&self, x: ChartPoint) -> Result<()> {
        if self.manifold() == Manifold::Sphere {
            check_colatitude(x)?;
        }
        Ok(())
    }

    pub fn metric_at(&self, x: ChartPoint) -> Result<MetricTensor> {
        self.check_point(x)?;
        Ok(match *self {
            MetricSpec::TorusConstant { e, f, g } => MetricTensor::new(e, f, g),
            MetricSpec::SphereRound { radius } => {
                let r2 = radius * radius;
                let s = x.u.sin();
                MetricTensor::diag(r2, r2 * s * s)
            }
            MetricSpec::Induced(emb) => emb.first_fundamental_form(x),
        })
    }

    pub fn volume_density(&self, x: ChartPoint) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.volume_density_unchecked(x))
    }

    pub(crate) fn volume_density_unchecked(&self, x: ChartPoint) -> f64 {
        match *self {
            MetricSpec::TorusConstant { e, f, g } => (e * g - f * f).sqrt(),
            MetricSpec::SphereRound { radius } => radius * radius * x.u.sin(),
            MetricSpec::Induced(EmbeddingSpec::CliffordTorus) => 1.0,
            MetricSpec::Induced(EmbeddingSpec::DonutTorus { major, minor }) => {
                minor * (major + minor * x.u.cos())
            }
            MetricSpec::Induced(EmbeddingSpec::UnitSphere) => x.u.sin(),
        }
    }

    /// Total Riemannian area.
    pub fn total_volume(&self) -> f64 {
        match *self {
            MetricSpec::TorusConstant { e, f, g } => TAU * TAU * (e * g - f * f).sqrt(),
            MetricSpec::SphereRound { radius } => 2.0 * TAU * radius * radius,
            MetricSpec::Induced(EmbeddingSpec::CliffordTorus) => TAU * TAU,
            MetricSpec::Induced(EmbeddingSpec::DonutTorus { major, minor }) => {
                TAU * TAU * major * minor
            }
            MetricSpec::Induced(EmbeddingSpec::UnitSphere) => 2.0 * TAU,
        }
    }

    /// Geodesic distance in closed form.
    pub fn geodesic_distance(&self, x: ChartPoint, y: ChartPoint) -> Result<f64> {
        let kernel = KernelGeometry::intrinsic(self)?;
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(kernel
            .sq_distance(&kernel.feature(x), &kernel.feature(y))
            .sqrt())
    }

    /// Half-width `K` of the lattice search `k, l ∈ {−K..K}` for the
    /// torus distance; proven sufficient after reducing offsets to `[−π, π]`.
    pub fn lattice_range(&self) -> usize {
        match *self {
            MetricSpec::TorusConstant { f: 0.0, .. } => 0,
            MetricSpec::TorusConstant { e, f, g } => {
                let (lo, hi) = MetricTensor::new(e, f, g).eigenvalues();
                (((2.0 * hi / lo).sqrt() + 1.0) / 2.0).floor() as usize
            }
            _ => 0,
        }
    }
}

fn check_colatitude(x: ChartPoint) -> Result<()> {
    if x.u < POLE_GUARD || x.u > PI - POLE_GUARD {
        return Err(Error::PoleProximity {
            u: x.u,
            v: x.v,
            eps: POLE_GUARD,
        });
    }
    Ok(())
}

pub(crate) fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub(crate) fn sq_norm_diff(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    let d3 = a[3] - b[3];
    d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3
}

/// Precomputed squared-distance evaluator used in assembly.
///
/// Points are first mapped to a four-component feature (chart coordinates,
/// unit vectors, or ambient coordinates) so pair evaluations avoid repeated
/// trigonometry. The pair function is exactly symmetric in its arguments.
#[derive(Clone, Copy, Debug)]
pub(crate) enum KernelGeometry {
    Torus { metric: MetricTensor, range: i32 },
    Sphere { radius: f64 },
    Ambient(EmbeddingSpec),
}

impl KernelGeometry {
    pub(crate) fn intrinsic(metric: &MetricSpec) -> Result<Self> {
        metric.validate()?;
        Ok(match *metric {
            MetricSpec::TorusConstant { e, f, g } => KernelGeometry::Torus {
                metric: MetricTensor::new(e, f, g),
                range: metric.lattice_range() as i32,
            },
            MetricSpec::SphereRound { radius } => KernelGeometry::Sphere { radius },
            MetricSpec::Induced(EmbeddingSpec::CliffordTorus) => KernelGeometry::Torus {
                metric: MetricTensor::IDENTITY,
                range: 0,
            },
            MetricSpec::Induced(EmbeddingSpec::UnitSphere) => {
                KernelGeometry::Sphere { radius: 1.0 }
            }
            MetricSpec::Induced(emb @ EmbeddingSpec::DonutTorus { .. }) => {
                return Err(Error::Unsupported(format!(
                    "no closed-form geodesic distance for the metric induced by {emb}"
                )))
            }
        })
    }

    pub(crate) fn extrinsic(emb: &EmbeddingSpec) -> Result<Self> {
        emb.validate()?;
        Ok(KernelGeometry::Ambient(*emb))
    }

    pub(crate) fn feature(&self, x: ChartPoint) -> [f64; 4] {
        match self {
            KernelGeometry::Torus { .. } => [x.u, x.v, 0.0, 0.0],
            KernelGeometry::Sphere { .. } => EmbeddingSpec::UnitSphere.embed_raw(x.u, x.v),
            KernelGeometry::Ambient(emb) => emb.embed_raw(x.u, x.v),
        }
    }

    pub(crate) fn sq_distance(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        match *self {
            KernelGeometry::Torus { metric, range } => {
                let du = reduce_delta(b[0] - a[0]);
                let dv = reduce_delta(b[1] - a[1]);
                if range == 0 {
                    return metric.quad(du, dv);
                }
                let mut best = f64::INFINITY;
                for k in -range..=range {
                    for l in -range..=range {
                        let q = metric.quad(du + TAU * k as f64, dv + TAU * l as f64);
                        best = best.min(q);
                    }
                }
                best
            }
            KernelGeometry::Sphere { radius } => {
                let cx = a[1] * b[2] - a[2] * b[1];
                let cy = a[2] * b[0] - a[0] * b[2];
                let cz = a[0] * b[1] - a[1] * b[0];
                let cross = (cx * cx + cy * cy + cz * cz).sqrt();
                let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                let angle = cross.atan2(dot);
                radius * radius * angle * angle
            }
            KernelGeometry::Ambient(_) => sq_norm_diff(a, b),
        }
    }
}

impl fmt::Display for EmbeddingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingSpec::CliffordTorus => write!(f, "clifford"),
            EmbeddingSpec::DonutTorus { major, minor } => write!(f, "donut:{major}:{minor}"),
            EmbeddingSpec::UnitSphere => write!(f, "sphere"),
        }
    }
}

impl FromStr for EmbeddingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["clifford"] => Ok(EmbeddingSpec::CliffordTorus),
            ["sphere"] => Ok(EmbeddingSpec::UnitSphere),
            ["donut", major, minor] => EmbeddingSpec::donut(parse_num(major)?, parse_num(minor)?),
            _ => Err(Error::InvalidParameter(format!(
                "unknown embedding '{s}' (expected clifford | donut:<R>:<r> | sphere)"
            ))),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::TorusConstant { e, f: ff, g } => write!(f, "torus:{e}:{ff}:{g}"),
            MetricSpec::SphereRound { radius } => write!(f, "sphere:{radius}"),
            MetricSpec::Induced(emb) => write!(f, "induced:{emb}"),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    /// Accepts `flat`, `aniso:<a>`, `scaled:<c>`, `torus:<E>:<F>:<G>`,
    /// `sphere:<R>` and `induced:<embedding>`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("induced:") {
            return Ok(MetricSpec::Induced(rest.parse()?));
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["flat"] => Ok(MetricSpec::flat()),
            ["aniso", a] => MetricSpec::anisotropic(parse_num(a)?),
            ["scaled", c] => MetricSpec::scaled_flat(parse_num(c)?),
            ["torus", e, f, g] => MetricSpec::torus(parse_num(e)?, parse_num(f)?, parse_num(g)?),
            ["sphere", r] => MetricSpec::sphere(parse_num(r)?),
            _ => Err(Error::InvalidParameter(format!(
                "unknown metric '{s}' (expected flat | aniso:<a> | sphere:<R> | torus:<E>:<F>:<G> | induced:<embedding>)"
            ))),
        }
    }
}

pub(crate) fn parse_num(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::InvalidParameter(format!("'{s}' is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p(u: f64, v: f64) -> ChartPoint {
        ChartPoint::new(u, v)
    }

    #[test]
    fn metric_examples() {
        let aniso = MetricSpec::torus(4.0, 0.0, 0.25).unwrap();
        assert_eq!(
            aniso.metric_at(p(1.0, 2.0)).unwrap(),
            MetricTensor::diag(4.0, 0.25)
        );
        assert_eq!(
            MetricSpec::flat().metric_at(p(3.0, 0.5)).unwrap(),
            MetricTensor::IDENTITY
        );
        let m = MetricSpec::sphere(1.0)
            .unwrap()
            .metric_at(p(PI / 2.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!(m.uu, 1.0);
        assert_abs_diff_eq!(m.vv, 1.0, epsilon = 1e-15);
        assert_eq!(MetricSpec::anisotropic(2.0).unwrap(), aniso);
    }

    #[test]
    fn rejects_invalid_metrics() {
        assert!(MetricSpec::torus(1.0, 2.0, 1.0).is_err());
        assert!(MetricSpec::torus(-1.0, 0.0, -1.0).is_err());
        assert!(MetricSpec::sphere(0.0).is_err());
        assert!(EmbeddingSpec::donut(1.0, 2.0).is_err());
    }

    #[test]
    fn sphere_pole_guard() {
        let s = MetricSpec::sphere(1.0).unwrap();
        assert!(matches!(
            s.metric_at(p(0.0, 1.0)),
            Err(Error::PoleProximity { .. })
        ));
        assert!(s.metric_at(p(PI - 1e-7, 1.0)).is_err());
        assert!(s.geodesic_distance(p(1e-8, 0.0), p(1.0, 0.0)).is_err());
        assert!(s.metric_at(p(2e-6, 1.0)).is_ok());
    }

    /// Minimum over an explicit lattice window, independent of the
    /// implementation's range bound.
    fn torus_distance_oracle(e: f64, f: f64, g: f64, x: ChartPoint, y: ChartPoint, w: i32) -> f64 {
        let du = y.u() - x.u();
        let dv = y.v() - x.v();
        let mut best = f64::INFINITY;
        for k in -w..=w {
            for l in -w..=w {
                let a = du + TAU * k as f64;
                let b = dv + TAU * l as f64;
                best = best.min(e * a * a + 2.0 * f * a * b + g * b * b);
            }
        }
        best.sqrt()
    }

    #[test]
    fn geodesic_examples() {
        let flat = MetricSpec::flat();
        assert_abs_diff_eq!(flat.geodesic_distance(p(0.0, 0.0), p(PI, 0.0)).unwrap(), PI);
        let aniso = MetricSpec::anisotropic(2.0).unwrap();
        let oracle = torus_distance_oracle(4.0, 0.0, 0.25, p(0.0, 0.0), p(PI, 0.0), 2);
        assert_abs_diff_eq!(oracle, TAU, epsilon = 1e-15);
        assert_abs_diff_eq!(
            aniso.geodesic_distance(p(0.0, 0.0), p(PI, 0.0)).unwrap(),
            oracle,
            epsilon = 1e-14
        );
        let s = MetricSpec::sphere(1.0).unwrap();
        assert_abs_diff_eq!(
            s.geodesic_distance(p(PI / 2.0, 0.0), p(PI / 2.0, PI / 2.0))
                .unwrap(),
            PI / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn volume_density_examples() {
        let x = p(0.3, 0.7);
        assert_eq!(
            MetricSpec::anisotropic(2.0)
                .unwrap()
                .volume_density(x)
                .unwrap(),
            1.0
        );
        assert_eq!(MetricSpec::flat().volume_density(x).unwrap(), 1.0);
        assert_abs_diff_eq!(
            MetricSpec::sphere(2.0)
                .unwrap()
                .volume_density(p(PI / 2.0, 0.0))
                .unwrap(),
            4.0
        );
        for a in [0.3, 0.5, 1.5, 2.0, 4.0, 8.0] {
            assert_abs_diff_eq!(
                MetricSpec::anisotropic(a)
                    .unwrap()
                    .volume_density(x)
                    .unwrap(),
                1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn embedding_examples() {
        let c = EmbeddingSpec::CliffordTorus;
        assert_eq!(c.embed(p(0.0, 0.0)), vec![1.0, 0.0, 1.0, 0.0]);
        let e = c.embed(p(PI, 0.0));
        assert_abs_diff_eq!(e[0], -1.0);
        assert_abs_diff_eq!(e[1], 0.0, epsilon = 1e-15);
        let s = EmbeddingSpec::UnitSphere.embed(p(PI / 2.0, 0.0));
        assert_eq!(s.len(), 3);
        assert_abs_diff_eq!(s[0], 1.0);
        assert_abs_diff_eq!(s[2], 0.0, epsilon = 1e-15);

        // ‖(2,0,0,0)‖ by hand
        assert_abs_diff_eq!(
            c.ambient_distance(p(0.0, 0.0), p(PI, 0.0)),
            2.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            c.ambient_distance(p(0.0, 0.0), p(0.0, PI)),
            2.0,
            epsilon = 1e-15
        );
        for emb in [
            c,
            EmbeddingSpec::UnitSphere,
            EmbeddingSpec::donut(2.0, 1.0).unwrap(),
        ] {
            assert_eq!(emb.ambient_distance(p(1.0, 2.0), p(1.0, 2.0)), 0.0);
        }
    }

    #[test]
    fn induced_metric_examples() {
        let c = EmbeddingSpec::CliffordTorus;
        for x in [p(0.0, 0.0), p(1.0, 2.5), p(4.0, 5.9)] {
            let g = c.induced_metric(x, 1e-4).unwrap();
            assert!(g.max_abs_diff(&MetricTensor::IDENTITY) < 1e-8);
            assert!(g.max_abs_diff(&MetricSpec::flat().metric_at(x).unwrap()) < 1e-8);
        }
        let g = EmbeddingSpec::UnitSphere
            .induced_metric(p(PI / 2.0, 0.0), 1e-4)
            .unwrap();
        assert!(g.max_abs_diff(&MetricTensor::IDENTITY) < 1e-8);
        let g = EmbeddingSpec::donut(2.0, 1.0)
            .unwrap()
            .induced_metric(p(0.0, 0.0), 1e-4)
            .unwrap();
        assert!(g.max_abs_diff(&MetricTensor::diag(1.0, 9.0)) < 1e-6);
        assert!(c.induced_metric(p(0.0, 0.0), 0.0).is_err());
        assert!(c.induced_metric(p(0.0, 0.0), 1e-2).is_err());
    }

    #[test]
    fn induced_metric_second_order() {
        let d = EmbeddingSpec::donut(2.0, 1.0).unwrap();
        let x = p(0.7, 1.3);
        let exact = d.first_fundamental_form(x);
        let e1 = d.induced_metric(x, 1e-3).unwrap().max_abs_diff(&exact);
        let e2 = d.induced_metric(x, 5e-4).unwrap().max_abs_diff(&exact);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lattice_range_matches_wide_oracle() {
        // sheared metric with condition number ~ 36
        let (e, f, g) = (4.0, 1.9, 1.0);
        let m = MetricSpec::torus(e, f, g).unwrap();
        assert!(m.lattice_range() >= 1);
        for i in 0..40 {
            let x = p(0.37 * i as f64, 1.91 * i as f64);
            let y = p(2.11 * i as f64 + 0.5, 0.29 * i as f64);
            let oracle = torus_distance_oracle(e, f, g, x, y, 6);
            assert_abs_diff_eq!(m.geodesic_distance(x, y).unwrap(), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "flat",
            "aniso:2",
            "sphere:1.5",
            "torus:2:0.5:1",
            "induced:donut:2:1",
        ] {
            let m: MetricSpec = s.parse().unwrap();
            let again: MetricSpec = m.to_string().parse().unwrap();
            assert_eq!(m, again);
        }
        assert!("cube".parse::<MetricSpec>().is_err());
        assert!("donut:1".parse::<EmbeddingSpec>().is_err());
    }

    fn torus_point() -> impl Strategy<Value = ChartPoint> {
        (0.0..TAU, 0.0..TAU).prop_map(|(u, v)| ChartPoint::new(u, v))
    }

    fn sphere_point() -> impl Strategy<Value = ChartPoint> {
        (0.01..PI - 0.01, 0.0..TAU).prop_map(|(u, v)| ChartPoint::new(u, v))
    }

    fn torus_metric() -> impl Strategy<Value = MetricSpec> {
        (0.25..4.0f64, -0.4..0.4f64, 0.25..4.0f64).prop_filter_map("spd", |(e, s, g)| {
            MetricSpec::torus(e, s * (e * g).sqrt(), g).ok()
        })
    }

    proptest! {
        #[test]
        fn reduction_is_idempotent(u in -50.0..50.0f64, v in -50.0..50.0f64) {
            let x = ChartPoint::new(u, v);
            prop_assert!((0.0..TAU).contains(&x.u()) && (0.0..TAU).contains(&x.v()));
            prop_assert_eq!(ChartPoint::new(x.u(), x.v()), x);
        }

        #[test]
        fn torus_distance_is_a_metric(m in torus_metric(), x in torus_point(), y in torus_point(), z in torus_point()) {
            let dxy = m.geodesic_distance(x, y).unwrap();
            prop_assert_eq!(dxy, m.geodesic_distance(y, x).unwrap());
            prop_assert_eq!(m.geodesic_distance(x, x).unwrap(), 0.0);
            prop_assert!((dxy == 0.0) == (x == y));
            let dxz = m.geodesic_distance(x, z).unwrap();
            let dzy = m.geodesic_distance(z, y).unwrap();
            prop_assert!(dxy <= dxz + dzy + 1e-12);
        }

        #[test]
        fn sphere_distance_is_a_metric(r in 0.5..3.0f64, x in sphere_point(), y in sphere_point(), z in sphere_point()) {
            let m = MetricSpec::sphere(r).unwrap();
            let dxy = m.geodesic_distance(x, y).unwrap();
            prop_assert_eq!(dxy, m.geodesic_distance(y, x).unwrap());
            prop_assert_eq!(m.geodesic_distance(x, x).unwrap(), 0.0);
            prop_assert!((dxy == 0.0) == (x == y));
            prop_assert!(dxy <= m.geodesic_distance(x, z).unwrap() + m.geodesic_distance(z, y).unwrap() + 1e-12);
        }

        #[test]
        fn ambient_distance_symmetric(x in torus_point(), y in torus_point()) {
            for emb in [EmbeddingSpec::CliffordTorus, EmbeddingSpec::DonutTorus { major: 2.0, minor: 1.0 }] {
                let d = emb.ambient_distance(x, y);
                prop_assert_eq!(d, emb.ambient_distance(y, x));
                prop_assert!((d == 0.0) == (x == y));
            }
        }

        #[test]
        fn small_offsets_recover_quadratic_form(m in torus_metric(), x in torus_point(), th in 0.0..TAU) {
            let s = 1e-4;
            let (wu, wv) = (th.cos(), th.sin());
            let y = ChartPoint::new(x.u() + s * wu, x.v() + s * wv);
            let d = m.geodesic_distance(x, y).unwrap();
            let g = m.metric_at(x).unwrap();
            let rel = (d * d / (s * s) - g.quad(wu, wv)).abs() / g.quad(wu, wv);
            prop_assert!(rel <= 1e-6, "relative error {}", rel);
        }
    }

    #[test]
    fn zero_iff_equal_on_many_pairs() {
        // deterministic sweep of 10^3 pairs including exact duplicates
        let m = MetricSpec::anisotropic(1.5).unwrap();
        let emb = EmbeddingSpec::CliffordTorus;
        for i in 0..1000u32 {
            let x = p(f64::from(i) * 0.731, f64::from(i) * 1.379);
            let y = if i % 10 == 0 {
                x
            } else {
                p(f64::from(i) * 0.127, f64::from(i) * 2.03)
            };
            assert_eq!(m.geodesic_distance(x, y).unwrap() == 0.0, x == y);
            assert_eq!(emb.ambient_distance(x, y) == 0.0, x == y);
        }
    }
}
