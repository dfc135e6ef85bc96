use std::io::Cursor;

use npts_core::deepnpts::{read_model, train, write_model, TrainingConfig};
use npts_core::evaluation::{
    mean_quantile_loss, rolling_backtest, tune, BacktestOptions, BacktestPlan, ModelConfig,
    ModelFamily,
};
use npts_core::io::{load_dataset, probe, write_series_jsonl, DatasetManifest};
use npts_core::synth::{generate, SynthKind, SynthSpec};
use npts_core::{forecast_paths, ForecastOptions, Frequency, KernelKind, TimeSeries};

fn walk() -> Vec<TimeSeries> {
    generate(&SynthSpec {
        seed: 11,
        ..SynthSpec::new(SynthKind::RandomWalk, 10, 300)
    })
    .unwrap()
}

#[test]
fn recency_beats_climatology_on_random_walks() {
    let plan = BacktestPlan::new(4, 5);
    let opts = BacktestOptions {
        samples: 100,
        seed: 11,
    };
    let score = |config: ModelConfig| {
        rolling_backtest("m", "walk", &[config], &walk(), &plan, &opts)
            .unwrap()
            .mean_quantile_loss
            .value
    };
    let exp = score(ModelConfig::Kernel {
        kind: KernelKind::Exponential,
        lambda: 1.0,
        max_context: None,
    });
    let uniform = score(ModelConfig::Kernel {
        kind: KernelKind::Uniform,
        lambda: 0.0,
        max_context: None,
    });
    assert!(exp < uniform, "{exp} vs {uniform}");
}

#[test]
fn tuning_returns_the_argmin() {
    let grid = ModelFamily::NptsExp.grid(None, &TrainingConfig::new(4, 4), false);
    let t = tune(
        &grid,
        &walk(),
        &BacktestPlan::new(4, 2),
        &BacktestOptions::default(),
    )
    .unwrap();
    let scores: Vec<f64> = t.scores.iter().map(|s| s.score.unwrap()).collect();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(scores[t.best_index], min);
    assert_eq!(scores.iter().position(|&s| s == min), Some(t.best_index));
}

#[test]
fn written_panels_load_back() {
    let panel = generate(&SynthSpec::new(SynthKind::Intermittent, 3, 50)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.jsonl");
    write_series_jsonl(&panel, std::fs::File::create(&path).unwrap()).unwrap();
    let loaded = load_dataset(&DatasetManifest::new(&path, Frequency::hourly(), 4, 1)).unwrap();
    assert_eq!(loaded, panel);
}

#[test]
fn saved_model_forecasts_identically() {
    let panel = generate(&SynthSpec {
        seed: 2,
        ..SynthSpec::new(SynthKind::Sinusoid, 4, 120)
    })
    .unwrap();
    let config = TrainingConfig {
        epochs: 4,
        static_feature: true,
        ..TrainingConfig::new(12, 48)
    };
    let (model, _) = train(&panel, &config).unwrap();
    let mut bytes = Vec::new();
    write_model(&model, &mut bytes).unwrap();
    let restored = read_model(Cursor::new(bytes)).unwrap();
    assert_eq!(restored, model);
    let opts = ForecastOptions {
        samples: 20,
        seed: 1,
        ..ForecastOptions::default()
    };
    let a = forecast_paths(&panel[0], &model, 12, &opts).unwrap();
    let b = forecast_paths(&panel[0], &restored, 12, &opts).unwrap();
    assert_eq!(a, b);
    let rows = probe(&panel[1], &restored).unwrap();
    assert_eq!(rows.len(), 48);
    assert!((rows.iter().map(|r| r.probability).sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn dynamic_covariates_reach_the_network() {
    let mut panel = generate(&SynthSpec::new(SynthKind::Iid, 3, 80)).unwrap();
    let horizon = 6;
    panel = panel
        .into_iter()
        .map(|s| {
            let row: Vec<f64> = (0..s.len() + horizon).map(|i| (i % 5) as f64).collect();
            s.with_covariates(vec![row]).unwrap()
        })
        .collect();
    let (model, log) = train(
        &panel,
        &TrainingConfig {
            epochs: 2,
            ..TrainingConfig::new(horizon, 24)
        },
    )
    .unwrap();
    assert_eq!(model.layout.num_dynamic, 1);
    assert_eq!(log.num_instances, 3 * horizon);
    let f = forecast_paths(&panel[2], &model, horizon, &ForecastOptions::default()).unwrap();
    assert_eq!(f.horizon(), horizon);
    // Without the future covariate values the last step cannot be built.
    assert!(forecast_paths(&panel[2], &model, horizon + 1, &ForecastOptions::default()).is_err());
}

#[test]
fn climatological_backtest_on_zeros_falls_back() {
    let panel = generate(&SynthSpec {
        zero_prob: 1.0,
        ..SynthSpec::new(SynthKind::Intermittent, 2, 40)
    })
    .unwrap();
    let grid = ModelFamily::NptsUniform.grid(None, &TrainingConfig::new(5, 5), false);
    let r = rolling_backtest(
        "u",
        "zeros",
        &grid,
        &panel,
        &BacktestPlan::new(5, 2),
        &BacktestOptions::default(),
    )
    .unwrap();
    assert!(!r.mean_quantile_loss.normalized);
    assert_eq!(r.mean_quantile_loss.value, 0.0);
    assert_eq!(
        mean_quantile_loss(&r.forecasts, &r.levels).unwrap(),
        r.mean_quantile_loss
    );
}
