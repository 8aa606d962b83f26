//! Fits every model to a synthetic record and simulates new extreme series
//! in both initial-series sampling modes.
//!
//! cargo run --release --example simulate

use extreme_series::model::{fit_model, FitOptions};
use extreme_series::polar::cost;
use extreme_series::simulator::{simulate_batch, SamplingMode, SimulationConfig};
use extreme_series::stats::{mean, quantile};
use extreme_series::synthetic::{generate, SyntheticConfig};

fn main() -> extreme_series::Result<()> {
    let raw = generate(&SyntheticConfig {
        ar_coef: 0.9,
        vol_persistence: 0.995,
        vol_sd: 1.2,
        event_tail: 3.0,
        event_scale: 3.0,
        seed: 1,
        ..Default::default()
    })?;
    let opts = FitOptions {
        season: None,
        ..Default::default()
    };
    let (model, tr, _) = fit_model(&raw, &opts)?;
    let observed = tr.extreme_detrended(opts.ar_order);
    let obs_max: Vec<f64> = observed.iter().map(|s| s.iter().copied().fold(f64::MIN, f64::max)).collect();
    println!(
        "{} observed extremes, peak median {:.3}",
        observed.len(),
        quantile(&obs_max, 0.5)
    );

    for mode in [SamplingMode::Conditional, SamplingMode::Unconditional] {
        let cfg = SimulationConfig {
            n_sim: 2000,
            sampling_mode: mode,
            seed: 11,
            ..Default::default()
        };
        let batch = simulate_batch(&model, &cfg)?;
        let series = batch.series();
        let peaks: Vec<f64> = series.iter().map(|s| s.iter().copied().fold(f64::MIN, f64::max)).collect();
        let costs: Vec<f64> = series.iter().map(|s| cost(s)).collect();
        println!(
            "{mode:?}: acceptance {:.3}, peak median {:.3}, mean cost {:.3}",
            batch.acceptance_rate(),
            quantile(&peaks, 0.5),
            mean(&costs)
        );
    }

    let cfg = SimulationConfig {
        n_sim: 5,
        seed: 11,
        ..Default::default()
    };
    let mut out = Vec::new();
    simulate_batch(&model, &cfg)?.to_csv(&mut out, false)?;
    let text = String::from_utf8_lossy(&out);
    for line in text.lines().take(3) {
        println!("{}...", &line[..line.len().min(72)]);
    }
    Ok(())
}
