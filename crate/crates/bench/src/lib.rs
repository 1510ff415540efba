//! Shared fixtures for the benchmarks.

use dmaflow::nnet::{self, ModelParams, NetConfig};
use dmaflow::series::{FeatureWindow, FlowPanel};
use dmaflow::synth::{generate, ScenarioConfig};

/// Default-sized network with `channels` input rows.
pub fn network(channels: usize) -> (NetConfig, ModelParams) {
    let cfg = NetConfig {
        input_channels: channels,
        ..NetConfig::default()
    };
    let params = nnet::init(&cfg).expect("default config is valid");
    (cfg, params)
}

/// A deterministic window for `cfg`.
pub fn window(cfg: &NetConfig) -> FeatureWindow {
    let n = cfg.input_channels * cfg.window;
    let values = (0..n).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    FeatureWindow::new(values, cfg.input_channels, cfg.window, cfg.window - 1)
        .expect("shape matches")
}

/// Two weeks of the frozen scenario.
pub fn panel() -> FlowPanel {
    generate(&ScenarioConfig {
        months: 0.5,
        ..ScenarioConfig::default()
    })
    .expect("frozen scenario is valid")
}
