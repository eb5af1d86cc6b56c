use glid::discretization::{build_grid, normalize_density, Axis, DensitySpec};
use glid::geometry::{EmbeddingSpec, MetricSpec};
use glid::identify::{
    extract_weighted_kernel, recover, recover_mass, rule_for, RecoveryOptions, Reference,
    EDGE_THRESHOLD,
};
use glid::matfile::{read_matrix, read_operator, write_operator, MatrixContent};
use glid::operators::{assemble_continuous, KernelMode};
use proptest::prelude::*;

fn metric_strategy() -> impl Strategy<Value = MetricSpec> {
    (0.5f64..3.0, 0.5f64..3.0, -0.45f64..0.45)
        .prop_map(|(e, g, r)| MetricSpec::torus(e, r * (e * g).sqrt(), g).unwrap())
}

fn density_strategy() -> impl Strategy<Value = DensitySpec> {
    prop_oneof![
        Just(DensitySpec::Uniform),
        (-0.8f64..0.8, any::<bool>()).prop_map(|(a, u)| DensitySpec::cosine(
            a,
            if u { Axis::U } else { Axis::V }
        )
        .unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constant_metrics_round_trip(metric in metric_strategy(), density in density_strategy()) {
        let rule = build_grid(&metric, 16).unwrap();
        let p = normalize_density(&density, &rule).unwrap();
        let op = assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, 0.5).unwrap();
        let reference = Reference::new(&op, Some(&p), &rule).unwrap();
        let report = recover(&op, &rule, &RecoveryOptions::default(), Some(&reference)).unwrap();
        prop_assert!(report.errors["metric_max_abs_error"] <= 1e-9, "{:?}", report.errors);
        prop_assert!(report.errors["density_max_rel_error"] <= 1e-9, "{:?}", report.errors);
        prop_assert!(report.errors["mass_max_rel_error"] <= 1e-10, "{:?}", report.errors);
        prop_assert_eq!(report.metric.len(), rule.len());
        for g in &report.metric {
            prop_assert!(g.g.is_positive_definite());
        }
        for v in &report.density {
            prop_assert!(v.unwrap() > 0.0);
        }
    }

    #[test]
    fn masses_do_not_depend_on_the_kernel(density in density_strategy()) {
        for (metric, emb) in [
            (MetricSpec::anisotropic(1.5).unwrap(), EmbeddingSpec::CliffordTorus),
            (MetricSpec::sphere(1.0).unwrap(), EmbeddingSpec::UnitSphere),
        ] {
            let rule = build_grid(&metric, 16).unwrap();
            let p = normalize_density(&density, &rule).unwrap();
            let mass = |mode| {
                let op = assemble_continuous(mode, &metric, &p, &rule, 0.5).unwrap();
                recover_mass(&extract_weighted_kernel(&op, EDGE_THRESHOLD).unwrap(), true).unwrap()
            };
            let a = mass(KernelMode::Intrinsic(metric));
            let b = mass(KernelMode::Extrinsic(emb));
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn sphere_round_trip_away_from_poles() {
    let metric = MetricSpec::sphere(1.0).unwrap();
    let rule = build_grid(&metric, 32).unwrap();
    let p = normalize_density(&DensitySpec::cosine(0.5, Axis::U).unwrap(), &rule).unwrap();
    let op = assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, 0.5).unwrap();
    let reference = Reference::new(&op, Some(&p), &rule).unwrap();
    let report = recover(&op, &rule, &RecoveryOptions::default(), Some(&reference)).unwrap();
    // pole rows lack a neighbour toward the pole
    assert_eq!(report.metric.len(), rule.len() - 2 * 32);
    assert!(report.errors["mass_max_rel_error"] <= 1e-8);
    assert!(report.errors["distance_max_abs_error"] <= 1e-7);
    // O(h²) stencil on a curved metric
    assert!(report.errors["metric_rms_error"] <= 2e-2);
}

#[test]
fn recovery_from_a_saved_operator_matches() {
    let metric = MetricSpec::anisotropic(2.0).unwrap();
    let rule = build_grid(&metric, 8).unwrap();
    let p = normalize_density(&DensitySpec::cosine(0.3, Axis::V).unwrap(), &rule).unwrap();
    let op = assemble_continuous(KernelMode::Intrinsic(metric), &metric, &p, &rule, 0.5).unwrap();
    let mut buf = Vec::new();
    write_operator(&mut buf, &op).unwrap();
    let back = read_operator(buf.as_slice()).unwrap();
    let rebuilt = rule_for(&back).unwrap();
    let a = recover(&op, &rule, &RecoveryOptions::default(), None).unwrap();
    let b = recover(&back, &rebuilt, &RecoveryOptions::default(), None).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());

    let dir = tempfile::tempdir().unwrap();
    let mut c = a.clone();
    c.externalize(&op, dir.path(), "op").unwrap();
    assert_eq!(c.matrices["distance"], "op_distance.bin");
    let (content, dist) =
        read_matrix(std::fs::File::open(dir.path().join("op_distance.bin")).unwrap()).unwrap();
    assert_eq!(content, MatrixContent::Distance);
    for i in 0..dist.len() {
        assert_eq!(dist.entries()[[i, i]], 0.0);
    }
}
