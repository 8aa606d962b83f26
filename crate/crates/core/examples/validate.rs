//! Compares simulated extremes with the observed ones: percentile bands,
//! extremogram, chi measures, return levels and two-sample classification.
//!
//! cargo run --release --example validate

use extreme_series::model::{fit_model, FitOptions};
use extreme_series::simulator::{simulate_batch, SimulationConfig};
use extreme_series::synthetic::{generate, SyntheticConfig};
use extreme_series::validation::{run_validation, Classifier, ValidationOptions};

fn main() -> extreme_series::Result<()> {
    let raw = generate(&SyntheticConfig {
        event_tail: 3.0,
        event_scale: 3.0,
        seed: 1,
        ..Default::default()
    })?;
    let fit = FitOptions {
        season: None,
        ..Default::default()
    };
    let (model, _, _) = fit_model(&raw, &fit)?;
    let batch = simulate_batch(&model, &SimulationConfig { seed: 11, ..Default::default() })?;

    // fewer classification repetitions and trees keep this example quick
    let opts = ValidationOptions {
        seed: 5,
        reps: 30,
        n_trees: 200,
        classifiers: vec![Classifier::Logistic, Classifier::RandomForest],
        ..Default::default()
    };
    let report = run_validation(&model, &raw, &batch.series(), &opts)?;

    for h in &report.hard_checks {
        println!("{} {}: {}", if h.passed { "PASS" } else { "FAIL" }, h.name, h.detail);
    }
    if let Some(chi) = &report.chi {
        let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        for (i, u) in chi.grid.iter().enumerate().step_by(3) {
            println!(
                "chi({u:.2}) = {} in [{}, {}], chibar {}",
                show(chi.chi[i]),
                show(chi.lower[i]),
                show(chi.upper[i]),
                show(chi.chibar[i])
            );
        }
    }
    if let Some(levels) = &report.return_levels {
        let rl = &levels[0];
        println!("return levels at step {} ({:.1} exceedances per year):", rl.t, rl.npy);
        for r in &rl.rows {
            println!("  {:>4} yr: model {:.3}, empirical {:.3}", r.period, r.level, r.empirical);
        }
    }
    if let Some(classes) = &report.classification {
        for c in classes {
            println!(
                "{:?}/{:?}: accuracy {:.3}, 90% range [{:.3}, {:.3}]",
                c.features, c.classifier, c.mean_accuracy, c.lower, c.upper
            );
        }
    }
    println!("overall: {}", if report.passed { "passed" } else { "failed" });
    Ok(())
}
