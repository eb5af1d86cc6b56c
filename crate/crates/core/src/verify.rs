//! Executable scenarios. Each one assembles operators, measures named
//! discrepancies and compares them with thresholds; a result passes exactly
//! when every discrepancy is within its bound.
//!
//! | id | claim |
//! |----|-------|
//! | S1 | distinct intrinsic metrics give distinct operators |
//! | S2 | the intrinsic operator determines metric and density |
//! | S3 | Clifford extrinsic operators coincide for flat and anisotropic metrics |
//! | S4 | extrinsic operators and masses depend only on `p μ_g` |
//! | S5 | sample operators converge at the Monte-Carlo rate |
//! | S6 | extrinsic operators determine the induced metric |
//!
//! Thresholds are tagged identity-exact (matrix-level equalities, limited by
//! rounding) or asymptotic (limited by stencil and quadrature error).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discretization::{
    build_grid, normalize_density, sample_points, Axis, DensitySpec, NormalizedDensity,
};
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, EmbeddingSpec, MetricSpec, MetricTensor};
use crate::identify::{
    self, recover, recover_induced_metric_from_extrinsic, RecoveryOptions, Reference,
};
use crate::operators::{
    assemble_continuous, operator_distance, ContinuousOperator, DiscreteOperator, KernelMode,
    OperatorMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [Self::S1, Self::S2, Self::S3, Self::S4, Self::S5, Self::S6];

    /// Names of the discrepancies this scenario reports, in report order.
    pub fn discrepancy_names(self) -> &'static [&'static str] {
        match self {
            Self::S1 => &["intrinsic_operator_distance"],
            Self::S2 => &[
                "mass_max_rel_error",
                "metric_max_abs_error",
                "density_max_rel_error",
            ],
            Self::S3 => &["extrinsic_operator_distance", "intrinsic_operator_distance"],
            Self::S4 => &["extrinsic_operator_distance", "mass_vector_distance"],
            Self::S5 => &["convergence_slope"],
            Self::S6 => &[
                "clifford_metric_max_error",
                "donut_u0_metric_max_error",
                "sphere_equator_metric_max_error",
            ],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidParameter(format!("unknown scenario `{s}`; expected S1..S6"))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bucket {
    IdentityExact,
    Asymptotic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    Above(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(b) => v <= b,
            Bound::Above(b) => v > b,
            Bound::Within(lo, hi) => (lo..=hi).contains(&v),
        }
    }

    fn with_threshold(self, x: f64) -> Self {
        match self {
            Bound::AtMost(_) => Bound::AtMost(x),
            Bound::Above(_) => Bound::Above(x),
            // an override recentres the band on its old width
            Bound::Within(lo, hi) => Bound::Within(x - 0.5 * (hi - lo), x + 0.5 * (hi - lo)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub bucket: Bucket,
    pub pass: bool,
}

/// CSV table emitted next to a result.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for c in &self.comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Logic(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub grid: usize,
    pub bandwidth: f64,
    /// `a` of the anisotropic metric `diag(a², a⁻²)` (S1, S2, S3).
    pub anisotropy: f64,
    /// `c` of the scaled metric `c² · flat` (S4).
    pub scale: f64,
    pub density: DensitySpec,
    /// First seed; seed `k` of a study is `seed + k`.
    pub seed: u64,
    pub seeds: usize,
    pub n_values: Vec<usize>,
    pub eval_points: usize,
    pub reference_grid: usize,
    /// Threshold overrides keyed by discrepancy name.
    pub tolerances: BTreeMap<String, f64>,
    /// Where the S5 reference values are cached; none disables caching.
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: ScenarioId::S1,
            grid: 32,
            bandwidth: 0.5,
            anisotropy: 2.0,
            scale: 1.5,
            density: DensitySpec::CosineBump {
                alpha: 0.5,
                axis: Axis::U,
            },
            seed: 0,
            seeds: 20,
            n_values: vec![1000, 4000, 16000, 64000],
            eval_points: 8,
            reference_grid: 128,
            tolerances: BTreeMap::new(),
            cache_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn new(id: ScenarioId) -> Self {
        Self {
            id,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.grid < 4 || !self.grid.is_multiple_of(2) {
            return bad(format!(
                "grid size must be even and at least 4, got {}",
                self.grid
            ));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            ));
        }
        if !(self.anisotropy > 0.0 && self.anisotropy.is_finite()) {
            return bad(format!(
                "anisotropy must be positive, got {}",
                self.anisotropy
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        self.density.validate()?;
        if self.tolerances.values().any(|v| !v.is_finite()) {
            return bad("tolerance overrides must be finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: ScenarioId,
    pub pass: bool,
    pub discrepancies: Vec<Discrepancy>,
    /// File names, relative to the output directory.
    pub artifacts: Vec<String>,
    pub config: ScenarioConfig,
    pub version: String,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ScenarioResult {
    pub fn discrepancy(&self, name: &str) -> Option<&Discrepancy> {
        self.discrepancies.iter().find(|d| d.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn json_file(&self) -> String {
        format!("{}.json", self.id)
    }

    /// Write the JSON report and every table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(self.json_file()), self.to_json()?)?;
        for t in &self.tables {
            t.write(fs::File::create(dir.join(&t.file))?)?;
        }
        Ok(())
    }
}

/// Collects discrepancies, applying overrides.
struct Checks<'a> {
    cfg: &'a ScenarioConfig,
    items: Vec<Discrepancy>,
}

impl<'a> Checks<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        Self {
            cfg,
            items: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, value: f64, bound: Bound, bucket: Bucket) {
        let bound = match self.cfg.tolerances.get(name) {
            Some(&x) => bound.with_threshold(x),
            None => bound,
        };
        self.items.push(Discrepancy {
            name: name.into(),
            value,
            bound,
            bucket,
            pass: bound.admits(value),
        });
    }

    fn finish(self, tables: Vec<Table>) -> Result<ScenarioResult> {
        if let Some(k) = self
            .cfg
            .tolerances
            .keys()
            .find(|k| !self.items.iter().any(|d| &d.name == *k))
        {
            return Err(Error::InvalidParameter(format!(
                "tolerance override `{k}` names no discrepancy of scenario {}",
                self.cfg.id
            )));
        }
        let mut artifacts = vec![format!("{}.json", self.cfg.id)];
        artifacts.extend(tables.iter().map(|t| t.file.clone()));
        Ok(ScenarioResult {
            id: self.cfg.id,
            pass: self.items.iter().all(|d| d.pass),
            discrepancies: self.items,
            artifacts,
            config: self.cfg.clone(),
            version: crate::VERSION.to_string(),
            tables,
        })
    }
}

/// Lower bound on the max-entry gap between intrinsic operators of distinct
/// metrics. The gap sits on the diagonal (degree differences), which does not
/// shrink with the grid.
pub const SEPARATION_THRESHOLD: f64 = 1e-3;

fn operator(
    mode: KernelMode,
    measure: MetricSpec,
    density: &DensitySpec,
    n: usize,
    t: f64,
) -> Result<OperatorMatrix> {
    let rule = build_grid(&measure, n)?;
    let p = normalize_density(density, &rule)?;
    assemble_continuous(mode, &measure, &p, &rule, t)
}

fn comments(cfg: &ScenarioConfig, what: &str) -> Result<Vec<String>> {
    Ok(vec![
        format!("glid {} scenario {} {what}", crate::VERSION, cfg.id),
        format!("config {}", serde_json::to_string(cfg)?),
    ])
}

/// Run one scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let run = match cfg.id {
        ScenarioId::S1 => s1(cfg),
        ScenarioId::S2 => s2(cfg),
        ScenarioId::S3 => s3(cfg),
        ScenarioId::S4 => s4(cfg),
        ScenarioId::S5 => s5(cfg),
        ScenarioId::S6 => s6(cfg),
    };
    run.map_err(|e| match e {
        e @ Error::InvalidParameter(_) => e,
        e => Error::Scenario {
            scenario: cfg.id.to_string(),
            source: Box::new(e),
        },
    })
}

fn intrinsic_separation(cfg: &ScenarioConfig) -> Result<f64> {
    let flat = MetricSpec::flat();
    let aniso = MetricSpec::anisotropic(cfg.anisotropy)?;
    let a = operator(
        KernelMode::Intrinsic(flat),
        flat,
        &cfg.density,
        cfg.grid,
        cfg.bandwidth,
    )?;
    let b = operator(
        KernelMode::Intrinsic(aniso),
        aniso,
        &cfg.density,
        cfg.grid,
        cfg.bandwidth,
    )?;
    operator_distance(&a, &b)
}

fn s1(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let mut c = Checks::new(cfg);
    c.push(
        "intrinsic_operator_distance",
        intrinsic_separation(cfg)?,
        Bound::Above(SEPARATION_THRESHOLD),
        Bucket::Asymptotic,
    );
    c.finish(Vec::new())
}

fn s2(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let metric = MetricSpec::anisotropic(cfg.anisotropy)?;
    let rule = build_grid(&metric, cfg.grid)?;
    let p = normalize_density(&cfg.density, &rule)?;
    let op = assemble_continuous(
        KernelMode::Intrinsic(metric),
        &metric,
        &p,
        &rule,
        cfg.bandwidth,
    )?;
    let reference = Reference::new(&op, Some(&p), &rule)?;
    let report = recover(&op, &rule, &RecoveryOptions::default(), Some(&reference))?;
    let err = |k: &str| report.errors.get(k).copied().unwrap_or(f64::NAN);

    let mut c = Checks::new(cfg);
    c.push(
        "mass_max_rel_error",
        err("mass_max_rel_error"),
        Bound::AtMost(1e-8),
        Bucket::IdentityExact,
    );
    c.push(
        "metric_max_abs_error",
        err("metric_max_abs_error"),
        Bound::AtMost(1e-3),
        Bucket::Asymptotic,
    );
    c.push(
        "density_max_rel_error",
        err("density_max_rel_error"),
        Bound::AtMost(1e-3),
        Bucket::Asymptotic,
    );

    let field = report
        .metric_field
        .as_ref()
        .expect("recover keeps the field");
    let rows = (0..rule.len())
        .map(|i| {
            let x = rule.nodes()[i];
            let (g, ge) = match field.get(i) {
                Some(g) => (*g, g.max_abs_diff(&reference.metric[i]).to_string()),
                None => (
                    MetricTensor::new(f64::NAN, f64::NAN, f64::NAN),
                    String::new(),
                ),
            };
            let (ph, pe) = match report.density[i] {
                Some(v) => {
                    let truth = p.value(x);
                    (v.to_string(), ((v - truth) / truth).abs().to_string())
                }
                None => (String::new(), String::new()),
            };
            vec![
                i.to_string(),
                x.u().to_string(),
                x.v().to_string(),
                report.mass[i].to_string(),
                g.uu.to_string(),
                g.uv.to_string(),
                g.vv.to_string(),
                ge,
                ph,
                pe,
            ]
        })
        .collect();
    let table = Table {
        file: "S2_field.csv".into(),
        comments: comments(cfg, "recovered fields")?,
        header: [
            "node",
            "u",
            "v",
            "mass",
            "g_uu",
            "g_uv",
            "g_vv",
            "metric_error",
            "density",
            "density_rel_error",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    };
    c.finish(vec![table])
}

fn s3(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let flat = MetricSpec::flat();
    let aniso = MetricSpec::anisotropic(cfg.anisotropy)?;
    let clifford = KernelMode::Extrinsic(EmbeddingSpec::CliffordTorus);
    let e1 = operator(clifford, flat, &cfg.density, cfg.grid, cfg.bandwidth)?;
    let e2 = operator(clifford, aniso, &cfg.density, cfg.grid, cfg.bandwidth)?;
    let extrinsic = operator_distance(&e1, &e2)?;
    drop((e1, e2));
    let mut c = Checks::new(cfg);
    c.push(
        "extrinsic_operator_distance",
        extrinsic,
        Bound::AtMost(1e-14),
        Bucket::IdentityExact,
    );
    c.push(
        "intrinsic_operator_distance",
        intrinsic_separation(cfg)?,
        Bound::Above(SEPARATION_THRESHOLD),
        Bucket::Asymptotic,
    );
    c.finish(Vec::new())
}

fn s4(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let g1 = MetricSpec::flat();
    let g2 = MetricSpec::scaled_flat(cfg.scale)?;
    let clifford = KernelMode::Extrinsic(EmbeddingSpec::CliffordTorus);
    // normalizing against μ₂ = c² μ₁ yields p₂ = p₁ / c²
    let a = operator(clifford, g1, &cfg.density, cfg.grid, cfg.bandwidth)?;
    let b = operator(clifford, g2, &cfg.density, cfg.grid, cfg.bandwidth)?;
    let distance = operator_distance(&a, &b)?;
    let masses = |op: &OperatorMatrix| -> Result<identify::MassVector> {
        identify::recover_mass(
            &identify::extract_weighted_kernel(op, identify::EDGE_THRESHOLD)?,
            true,
        )
    };
    let (ma, mb) = (masses(&a)?, masses(&b)?);
    let mass_gap = ma
        .values()
        .iter()
        .zip(mb.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut c = Checks::new(cfg);
    c.push(
        "extrinsic_operator_distance",
        distance,
        Bound::AtMost(1e-12),
        Bucket::IdentityExact,
    );
    c.push(
        "mass_vector_distance",
        mass_gap,
        Bound::AtMost(1e-8),
        Bucket::IdentityExact,
    );
    c.finish(Vec::new())
}

fn s6(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let donut = EmbeddingSpec::donut(2.0, 1.0)?;
    let n = cfg.grid;
    // (name, embedding, measure metric, threshold, node filter)
    type Filter = fn(ChartPoint, usize) -> bool;
    let cases: [(&str, EmbeddingSpec, MetricSpec, f64, Filter); 3] = [
        (
            "clifford_metric_max_error",
            EmbeddingSpec::CliffordTorus,
            MetricSpec::flat(),
            1e-3,
            |_, _| true,
        ),
        (
            "donut_u0_metric_max_error",
            donut,
            MetricSpec::Induced(donut),
            1e-2,
            |x, _| x.u() == 0.0,
        ),
        (
            "sphere_equator_metric_max_error",
            EmbeddingSpec::UnitSphere,
            MetricSpec::sphere(1.0)?,
            5e-3,
            |x, n| (x.u() - equator_colatitude(n)).abs() < 1e-12,
        ),
    ];
    let mut c = Checks::new(cfg);
    let mut rows = Vec::new();
    for (name, emb, measure, tol, keep) in cases {
        let rule = build_grid(&measure, n)?;
        let p = normalize_density(&DensitySpec::Uniform, &rule)?;
        let op = assemble_continuous(
            KernelMode::Extrinsic(emb),
            &measure,
            &p,
            &rule,
            cfg.bandwidth,
        )?;
        let field = recover_induced_metric_from_extrinsic(&op, &rule, &RecoveryOptions::default())?;
        drop(op);
        let mut worst = f64::NAN;
        for (i, g) in field.known() {
            let x = rule.nodes()[i];
            if !keep(x, n) {
                continue;
            }
            let err = g.max_abs_diff(&emb.first_fundamental_form(x));
            worst = if worst.is_nan() { err } else { worst.max(err) };
            rows.push(vec![
                emb.to_string(),
                i.to_string(),
                x.u().to_string(),
                x.v().to_string(),
                g.uu.to_string(),
                g.uv.to_string(),
                g.vv.to_string(),
                err.to_string(),
            ]);
        }
        c.push(name, worst, Bound::AtMost(tol), Bucket::Asymptotic);
    }
    let table = Table {
        file: "S6_metric.csv".into(),
        comments: comments(cfg, "induced metric")?,
        header: [
            "embedding",
            "node",
            "u",
            "v",
            "g_uu",
            "g_uv",
            "g_vv",
            "error",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    };
    c.finish(vec![table])
}

/// Colatitude of the sphere grid row nearest the equator.
fn equator_colatitude(n: usize) -> f64 {
    let h = std::f64::consts::TAU / n as f64;
    let rows = n / 2 - 1;
    (1..=rows)
        .map(|k| k as f64 * h)
        .min_by(|a, b| {
            (a - std::f64::consts::FRAC_PI_2)
                .abs()
                .total_cmp(&(b - std::f64::consts::FRAC_PI_2).abs())
        })
        .expect("at least one row")
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Test function of the convergence study.
pub fn probe(x: ChartPoint) -> f64 {
    x.u().cos()
}

/// Evaluation points of the convergence study, spread off the grid lines.
pub fn probe_points(k: usize) -> Vec<ChartPoint> {
    (0..k)
        .map(|j| {
            let s = (j as f64 + 0.5) / k as f64;
            ChartPoint::new(
                std::f64::consts::TAU * s,
                std::f64::consts::TAU * ((3.0 * s + 0.17) % 1.0),
            )
        })
        .collect()
}

/// Sampling problem and continuous reference shared by every run of the
/// convergence study: intrinsic flat torus, the configured density.
pub struct ConvergenceSetup {
    metric: MetricSpec,
    density: NormalizedDensity,
    t: f64,
    points: Vec<ChartPoint>,
    reference: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    key: String,
    values: Vec<f64>,
    checksum: String,
}

fn values_checksum(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl ConvergenceSetup {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.eval_points == 0 {
            return Err(Error::InvalidParameter(
                "at least one evaluation point is needed".into(),
            ));
        }
        let metric = MetricSpec::flat();
        let rule = build_grid(&metric, cfg.reference_grid)?;
        let density = normalize_density(&cfg.density, &rule)?;
        let points = probe_points(cfg.eval_points);
        let key = {
            let mut h = Sha256::new();
            h.update(format!(
                "glid-reference-v1|{metric}|{}|{:016x}|{}|",
                cfg.density,
                cfg.bandwidth.to_bits(),
                cfg.reference_grid
            ));
            for x in &points {
                h.update(x.u().to_le_bytes());
                h.update(x.v().to_le_bytes());
            }
            hex::encode(h.finalize())
        };
        let cache = cfg
            .cache_dir
            .as_ref()
            .map(|d| d.join(format!("reference-{}.json", &key[..16])));
        if let Some(values) = cache
            .as_deref()
            .and_then(|p| load_cached(p, &key, points.len()))
        {
            return Ok(Self {
                metric,
                density,
                t: cfg.bandwidth,
                points,
                reference: values,
            });
        }
        let op = ContinuousOperator::new(
            KernelMode::Intrinsic(metric),
            &metric,
            &density,
            &rule,
            cfg.bandwidth,
        )?;
        let reference: Vec<f64> = points.par_iter().map(|&x| op.value_at(x, probe)).collect();
        if let Some(path) = cache {
            let record = CachedReference {
                key,
                checksum: values_checksum(&reference),
                values: reference.clone(),
            };
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, serde_json::to_string_pretty(&record)?)?;
        }
        Ok(Self {
            metric,
            density,
            t: cfg.bandwidth,
            points,
            reference,
        })
    }

    pub fn points(&self) -> &[ChartPoint] {
        &self.points
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// RMS over the evaluation points of the sample operator's deviation
    /// from the continuous reference, for `n` samples drawn with `seed`.
    pub fn rms_error(&self, n: usize, seed: u64) -> Result<f64> {
        let samples = sample_points(&self.density, &self.metric, n, seed)?;
        let dop = DiscreteOperator::new(
            samples,
            self.t,
            KernelMode::Intrinsic(self.metric),
            self.points.clone(),
        )?;
        let values = dop.evaluate_nodes(probe);
        let ss: f64 = values
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss / values.len() as f64).sqrt())
    }
}

fn load_cached(path: &Path, key: &str, len: usize) -> Option<Vec<f64>> {
    let text = fs::read_to_string(path).ok()?;
    let record: CachedReference = serde_json::from_str(&text).ok()?;
    (record.key == key
        && record.values.len() == len
        && record.checksum == values_checksum(&record.values))
    .then_some(record.values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub n_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Seed-mean RMS error per sample size.
    pub errors: Vec<f64>,
    /// `per_seed[i][k]`: sample size `i`, seed `k`.
    pub per_seed: Vec<Vec<f64>>,
    pub slope: f64,
}

pub fn convergence_study(cfg: &ScenarioConfig) -> Result<ConvergenceStudy> {
    if cfg.n_values.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "convergence study needs at least 3 sample sizes, got {}",
            cfg.n_values.len()
        )));
    }
    if cfg.n_values.windows(2).any(|w| w[0] >= w[1]) || cfg.n_values[0] == 0 {
        return Err(Error::InvalidParameter(
            "sample sizes must be positive and strictly ascending".into(),
        ));
    }
    if cfg.seeds < 5 {
        return Err(Error::InvalidParameter(format!(
            "convergence study needs at least 5 seeds, got {}",
            cfg.seeds
        )));
    }
    let setup = ConvergenceSetup::new(cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64)
        .map(|k| cfg.seed.wrapping_add(k))
        .collect();
    let per_seed = cfg
        .n_values
        .iter()
        .map(|&n| {
            seeds
                .iter()
                .map(|&s| setup.rms_error(n, s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = per_seed
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len() as f64)
        .collect();
    let ns: Vec<f64> = cfg.n_values.iter().map(|&n| n as f64).collect();
    let slope = fit_slope(&ns, &errors);
    Ok(ConvergenceStudy {
        n_values: cfg.n_values.clone(),
        seeds,
        errors,
        per_seed,
        slope,
    })
}

/// Convergence curve with a `slope,<value>` footer row.
pub fn convergence_table(
    study: &ConvergenceStudy,
    cfg: &ScenarioConfig,
    file: &str,
) -> Result<Table> {
    let mut rows: Vec<Vec<String>> = study
        .n_values
        .iter()
        .zip(&study.errors)
        .zip(&study.per_seed)
        .map(|((n, e), s)| {
            let var = s.iter().map(|v| (v - e) * (v - e)).sum::<f64>() / (s.len() as f64 - 1.0);
            vec![n.to_string(), e.to_string(), var.sqrt().to_string()]
        })
        .collect();
    rows.push(vec!["slope".into(), study.slope.to_string()]);
    let mut comments = comments(cfg, "convergence")?;
    comments.push(format!(
        "seeds {}..={}",
        study.seeds[0],
        study.seeds[study.seeds.len() - 1]
    ));
    Ok(Table {
        file: file.into(),
        comments,
        header: ["n", "mean_rms_error", "seed_std"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

fn s5(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let study = convergence_study(cfg)?;
    let mut c = Checks::new(cfg);
    c.push(
        "convergence_slope",
        study.slope,
        Bound::Within(-0.65, -0.35),
        Bucket::Asymptotic,
    );
    let table = convergence_table(&study, cfg, "S5.csv")?;
    c.finish(vec![table])
}
