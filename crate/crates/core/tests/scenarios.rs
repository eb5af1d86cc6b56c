use glid::discretization::{Axis, DensitySpec};
use glid::verify::{convergence_study, run_scenario, ConvergenceSetup, ScenarioConfig, ScenarioId};

fn cfg(id: ScenarioId, grid: usize, t: f64) -> ScenarioConfig {
    ScenarioConfig {
        grid,
        bandwidth: t,
        ..ScenarioConfig::new(id)
    }
}

#[test]
fn measure_level_identities_hold_across_grids_and_bandwidths() {
    for grid in [16, 32, 64] {
        for t in [0.25, 0.5, 1.0] {
            for id in [ScenarioId::S3, ScenarioId::S4] {
                let r = run_scenario(&cfg(id, grid, t)).unwrap();
                assert!(r.pass, "{id} N={grid} t={t}: {:?}", r.discrepancies);
            }
        }
    }
}

#[test]
fn separation_grows_with_anisotropy() {
    let mut last = 0.0;
    for a in [1.25, 1.5, 2.0] {
        let r = run_scenario(&ScenarioConfig {
            anisotropy: a,
            ..ScenarioConfig::new(ScenarioId::S1)
        })
        .unwrap();
        let d = r.discrepancy("intrinsic_operator_distance").unwrap().value;
        assert!(d > last, "a={a}: {d} after {last}");
        last = d;
    }
}

#[test]
fn round_trip_over_metric_and_density_matrix() {
    let bump = DensitySpec::cosine(0.5, Axis::U).unwrap();
    for a in [1.0, 2.0] {
        for density in [DensitySpec::Uniform, bump] {
            let r = run_scenario(&ScenarioConfig {
                anisotropy: a,
                density,
                ..ScenarioConfig::new(ScenarioId::S2)
            })
            .unwrap();
            assert!(r.pass, "a={a} {density}: {:?}", r.discrepancies);
        }
    }
}

#[test]
fn induced_metric_scenario_passes_with_field_table() {
    let r = run_scenario(&ScenarioConfig::new(ScenarioId::S6)).unwrap();
    assert!(r.pass, "{:?}", r.discrepancies);
    assert_eq!(r.artifacts, ["S6.json", "S6_metric.csv"]);
    let csv = r.tables[0].to_csv_string().unwrap();
    assert!(csv.starts_with("# glid "));
}

#[test]
fn single_seed_error_is_within_sanity_band() {
    let base = ScenarioConfig {
        n_values: vec![500, 1000, 2000],
        seeds: 10,
        reference_grid: 64,
        ..ScenarioConfig::new(ScenarioId::S5)
    };
    let study = convergence_study(&base).unwrap();
    let setup = ConvergenceSetup::new(&base).unwrap();
    let single = setup.rms_error(500, 12345).unwrap();
    assert!(single <= 5.0 * study.errors[0] && single >= study.errors[0] / 5.0);
    assert_eq!(study.per_seed.len(), 3);
    assert!(study.errors.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn written_reports_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&ScenarioConfig::new(ScenarioId::S2)).unwrap();
    r.write(dir.path()).unwrap();
    let first = std::fs::read(dir.path().join("S2.json")).unwrap();
    let table = std::fs::read_to_string(dir.path().join("S2_field.csv")).unwrap();
    assert_eq!(
        table.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 32 * 32
    );
    run_scenario(&ScenarioConfig::new(ScenarioId::S2))
        .unwrap()
        .write(dir.path())
        .unwrap();
    assert_eq!(first, std::fs::read(dir.path().join("S2.json")).unwrap());
}
