use dmaflow::pipeline::{
    compare, correlation_summary, run_experiment, run_experiment_detailed, split, ExperimentSpec,
    MemberSource, ModelKind, SplitSpec,
};
use dmaflow::series::{FlowPanel, ForecastMode};
use dmaflow::synth::{generate, ScenarioConfig};
use dmaflow::Error;

fn small_panel() -> FlowPanel {
    generate(&ScenarioConfig {
        months: 0.2,
        ..ScenarioConfig::default()
    })
    .unwrap()
}

fn small_spec(model: ModelKind, mode: ForecastMode) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        name: "probe".into(),
        model,
        mode,
        members: MemberSource::Derived { theta: 0.9 },
        split: SplitSpec {
            train_months: 0.1,
            val_months: 0.05,
            test_months: 0.05,
        },
        seeds: vec![0, 1],
        ..ExperimentSpec::default()
    };
    spec.net.epochs = 2;
    spec.net.learning_rate = 0.06;
    spec.net.batch_size = 4;
    spec
}

#[test]
fn default_scenario_selects_zones_1_3_4_for_zone_5() {
    let panel = generate(&ScenarioConfig::default()).unwrap();
    let train = split(&panel, &SplitSpec::default()).unwrap().train;
    let summary = correlation_summary(&panel, train, 0.95).unwrap();
    assert_eq!(summary.sets[4].members, vec!["1", "3", "4"]);
    assert!(summary.matrix.get("5", "2").unwrap() < 0.9);
}

/// Corrupting test values after step c leaves every forecast whose inputs end before c unchanged.
#[test]
fn test_forecasts_ignore_future_values() {
    let panel = small_panel();
    for (model, mode) in [
        (ModelKind::Sarima, ForecastMode::Local),
        (ModelKind::CnnRnn, ForecastMode::Local),
        (ModelKind::CnnRnn, ForecastMode::LocalCorrelated),
    ] {
        let spec = small_spec(model, mode);
        let (_, clean) = run_experiment_detailed(&panel, &spec).unwrap();
        let labels = &clean[0].label_index;
        let cut = labels[labels.len() / 2];
        let corrupted = FlowPanel::from_rows(
            panel.zone_ids().to_vec(),
            panel
                .rows()
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .map(|(t, &v)| if t >= cut { v * 3.0 + 50.0 } else { v })
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let (_, dirty) = run_experiment_detailed(&corrupted, &spec).unwrap();
        for (a, b) in clean.iter().zip(&dirty) {
            for ((t, pa), pb) in a.label_index.iter().zip(&a.prediction).zip(&b.prediction) {
                if *t <= cut {
                    assert_eq!(pa, pb, "{model:?} {mode:?} label {t}");
                }
            }
            assert_ne!(a.prediction, b.prediction);
        }
    }
}

#[test]
fn reports_are_deterministic_and_aggregate_seeds() {
    let panel = small_panel();
    let spec = small_spec(ModelKind::CnnRnn, ForecastMode::Correlated);
    let a = run_experiment(&panel, &spec).unwrap();
    let b = run_experiment(&panel, &spec).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.runs.len(), 2);
    let mean = (a.runs[0].metrics.mse + a.runs[1].metrics.mse) / 2.0;
    assert!((a.aggregate.mse.mean - mean).abs() < 1e-12);
    assert_eq!(a.members, vec!["1", "3", "4"]);

    let sarima =
        run_experiment(&panel, &small_spec(ModelKind::Sarima, ForecastMode::Local)).unwrap();
    assert_eq!(sarima.aggregate.mse.std, 0.0);
    assert_eq!(sarima.evaluated, a.evaluated);
}

#[test]
fn correlated_mode_with_no_members_is_rejected() {
    let panel = small_panel();
    let mut spec = small_spec(ModelKind::CnnRnn, ForecastMode::Correlated);
    spec.members = MemberSource::Derived { theta: 1.0 };
    assert!(matches!(
        run_experiment(&panel, &spec),
        Err(Error::EmptyCorrelationSet { .. })
    ));
}

#[test]
fn compare_requires_a_common_target() {
    let panel = small_panel();
    let a = small_spec(ModelKind::Sarima, ForecastMode::Local);
    let b = ExperimentSpec {
        target: "4".into(),
        ..a.clone()
    };
    assert!(matches!(
        compare(&panel, &[a, b]),
        Err(Error::MismatchedTargets(..))
    ));
}

#[test]
fn short_panels_are_rejected() {
    let panel = small_panel();
    let spec = ExperimentSpec {
        seeds: vec![0],
        ..ExperimentSpec::default()
    };
    assert!(matches!(
        run_experiment(&panel, &spec),
        Err(Error::PanelTooShort { .. })
    ));
}
