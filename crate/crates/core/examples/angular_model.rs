//! Fits the angular model of the extremes (principal components, score
//! margins and a D-vine on the retained scores), lists the selected pair
//! copulas and draws a few new angles.
//!
//! cargo run --release --example angular_model

use extreme_series::angular::{fit_angular_model, AngularOptions};
use extreme_series::model::{fit_model, FitOptions};
use extreme_series::polar::cost;
use extreme_series::stats::substream;
use extreme_series::synthetic::{generate, SyntheticConfig};

fn main() -> extreme_series::Result<()> {
    let raw = generate(&SyntheticConfig {
        event_tail: 3.0,
        event_scale: 3.0,
        seed: 2,
        ..Default::default()
    })?;
    let opts = FitOptions {
        season: None,
        ..Default::default()
    };
    let (_, _, polar) = fit_model(&raw, &opts)?;
    let angles = polar.angles();

    let model = fit_angular_model(&angles, &AngularOptions::default())?;
    println!("{} angles of length {}", angles.len(), model.pca.dim());
    for j in 1..=6 {
        println!("  J = {j}: explained {:.3}", model.pca.explained_ratio(j));
    }
    println!("selected J = {}", model.j);

    if let Some(vine) = &model.vine {
        println!("tree pair    family               tau     lambda_U lambda_L");
        for e in &vine.edges {
            println!(
                "{:>4} {:>2},{:<2}  {:<20} {:>6.3} {:>8.3} {:>8.3}",
                e.tree,
                e.pair.0,
                e.pair.1,
                e.copula.name(),
                e.tau,
                e.lambda_upper,
                e.lambda_lower
            );
        }
    }

    let mut rng = substream(9, 0);
    for _ in 0..3 {
        let theta = model.sample_angle(&mut rng)?;
        let min = theta.iter().copied().fold(f64::INFINITY, f64::min);
        println!("angle: cost {:.6}, min {:+.4}", cost(&theta), min);
    }
    Ok(())
}
