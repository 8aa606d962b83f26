//! Marginal modelling of one time step: threshold diagnostics, the
//! ECDF/GPD mixture, and the transform to unit Fréchet scale.
//!
//! cargo run --release --example margins

use extreme_series::margins::{
    fit_gpd, fit_marginal_mixture, hill_curve, shape_vs_k, stability_window, threshold_diagnostics, Blocking, GpdMethod,
    ThresholdGrid,
};
use extreme_series::stats::quantile;
use extreme_series::synthetic::{generate, SyntheticConfig};

fn main() -> extreme_series::Result<()> {
    let raw = generate(&SyntheticConfig {
        event_tail: 3.0,
        event_scale: 3.0,
        seed: 5,
        ..Default::default()
    })?;
    let x = raw.column(raw.t_len() / 2);

    let diag = threshold_diagnostics(&x, &ThresholdGrid::default(), &Blocking::Equal(10))?;
    println!("threshold   n_exc  sigma'   gamma'   mrl      dispersion");
    for r in diag.rows.iter().step_by(8) {
        println!(
            "{:>9.4} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.3}",
            r.threshold, r.n_exceed, r.sigma_prime, r.gamma_prime, r.mrl, r.dispersion
        );
    }

    let u = quantile(&x, 0.95);
    for method in [GpdMethod::Mle, GpdMethod::Moments] {
        let g = fit_gpd(&x, u, method)?;
        println!("{method:?}: sigma {:.4}, gamma {:.3}", g.sigma, g.gamma);
    }
    for s in shape_vs_k(&x, &[100, 250, 500]) {
        println!("k = {:>3}: Hill {:.3}, MLE {:.3}, moments {:.3}", s.k, s.hill, s.mle, s.moments);
    }

    let positive: Vec<f64> = x.iter().copied().filter(|v| *v > 0.0).collect();
    let curve = hill_curve(&positive, 20, 800);
    match stability_window(&curve, 100, 0.1) {
        Some(w) => println!("Hill stable on k in [{}, {}] at {:.3}", w.k_start, w.k_end, w.mean),
        None => println!("no stable Hill region"),
    }

    let m = fit_marginal_mixture(&x, 0.05)?;
    let g = m.gpd();
    println!("mixture tail above {:.4}: sigma {:.4}, gamma {:.3}", g.threshold, g.sigma, g.gamma);
    for q in [0.5, 0.95, 0.999] {
        let v = m.quantile(q)?;
        let z = m.to_frechet(v);
        println!("q = {q}: x = {v:.4}, Fréchet {z:.3}, back {:.4}", m.from_frechet(z)?);
    }
    Ok(())
}
