//! Moves a record to unit Fréchet scale, splits it into cost and angle, and
//! prints the angular convergence scan used to pick the radius threshold.
//!
//! cargo run --release --example polar

use extreme_series::model::{fit_model, FitOptions};
use extreme_series::polar::{angular_convergence_scan, cost, extract_extremes};
use extreme_series::stats::quantile;
use extreme_series::synthetic::{generate, SyntheticConfig};

fn main() -> extreme_series::Result<()> {
    let raw = generate(&SyntheticConfig {
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
    let z = &tr.frechet;

    let costs: Vec<f64> = z.series().iter().map(|s| cost(&s.values)).collect();
    println!("{} Fréchet series, fitted u_ell = {:.2}", z.len(), model.u_ell);
    for q in [0.5, 0.9, 0.95, 0.99] {
        println!("  cost quantile {q}: {:.2}", quantile(&costs, q));
    }

    let polar = extract_extremes(z, model.u_ell)?;
    let first = &polar.extremes[0];
    println!(
        "{} extremes; cycle {} has radius {:.1} and angle cost {:.6}",
        polar.len(),
        first.source_id,
        first.radius,
        cost(&first.angle)
    );

    // the mean absolute projections settle once k is inside the extreme regime
    let scan = angular_convergence_scan(z, 4, &[25, 50, 100, 200, 400, 800])?;
    println!("    k   h1      h2      h3      h4");
    for (k, row) in scan.k_grid.iter().zip(&scan.mean_abs_projection) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("{k:>5}   {}", cells.join("  "));
    }
    Ok(())
}
