use extreme_series::angular::{PairCopula, Rotation};
use extreme_series::dataset::{detrend, retrend, FunctionalDataset, TrendModel};
use extreme_series::margins::{fit_marginal_mixture, GpdParams};
use extreme_series::polar::{cost, extract_extremes};
use extreme_series::stats::{pseudo_observations, substream};
use extreme_series::validation::{order_for_period, percentile_bands, return_period};
use extreme_series::whitening::{invert_ar, ArModel};
use proptest::prelude::*;
use rand::Rng;

fn series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_positively_homogeneous(x in series(37), c in 0.01..100.0f64) {
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        prop_assert!((cost(&scaled) - c * cost(&x)).abs() <= 1e-9 * (1.0 + c * cost(&x)));
    }

    #[test]
    fn extreme_angles_have_unit_cost(rows in prop::collection::vec(prop::collection::vec(0.1..100.0f64, 5), 20..60)) {
        let ds = FunctionalDataset::from_rows(rows).unwrap();
        let costs: Vec<f64> = ds.series().iter().map(|s| cost(&s.values)).collect();
        let u = costs.iter().copied().fold(f64::INFINITY, f64::min) * 0.999;
        let polar = extract_extremes(&ds, u).unwrap();
        prop_assert_eq!(polar.len(), ds.len());
        for p in &polar.extremes {
            prop_assert!(p.radius > u);
            prop_assert!((cost(&p.angle) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gpd_quantile_inverts_cdf(sigma in 0.1..5.0f64, gamma in -0.8..1.5f64, q in 0.001..0.999f64) {
        let g = GpdParams::new(0.0, sigma, gamma).unwrap();
        let x = g.quantile(q).unwrap();
        prop_assert!((g.cdf(x).unwrap() - q).abs() < 1e-9);
    }

    #[test]
    fn frechet_transform_round_trips(seed in any::<u64>(), q in 0.001..0.9999f64) {
        let mut rng = substream(seed, 0);
        let sample: Vec<f64> = (0..400).map(|_| -rng.random::<f64>().ln()).collect();
        let m = fit_marginal_mixture(&sample, 0.1).unwrap();
        let x = m.quantile(q).unwrap();
        let z = m.to_frechet(x);
        prop_assert!(z > 0.0);
        prop_assert!((m.from_frechet(z).unwrap() - x).abs() < 1e-8 * (1.0 + x.abs()));
    }

    #[test]
    fn frechet_transform_is_monotone(seed in any::<u64>(), a in -1.0..6.0f64, b in -1.0..6.0f64) {
        let mut rng = substream(seed, 1);
        let sample: Vec<f64> = (0..300).map(|_| -rng.random::<f64>().ln()).collect();
        let m = fit_marginal_mixture(&sample, 0.1).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(m.to_frechet(lo) <= m.to_frechet(hi));
    }

    #[test]
    fn retrend_undoes_detrend(rows in prop::collection::vec(series(4), 1..20),
                              slope in prop::collection::vec(-1.0..1.0f64, 4),
                              intercept in prop::collection::vec(-10.0..10.0f64, 4)) {
        let ds = FunctionalDataset::from_rows(rows).unwrap();
        let trend = TrendModel { slope, intercept };
        let d = detrend(&ds, &trend).unwrap();
        for (orig, det) in ds.series().iter().zip(d.series()) {
            let back = trend.retrend_values(&det.values, det.cycle_index);
            for (a, b) in back.iter().zip(&orig.values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
        let m = ds.series()[0].cycle_index;
        let single = FunctionalDataset::from_rows(vec![d.series()[0].values.clone()]).unwrap();
        let r = retrend(&single, &trend, m).unwrap();
        for (a, b) in r.series()[0].values.iter().zip(&ds.series()[0].values) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn invert_ar_matches_prediction(beta in prop::collection::vec(-0.95..0.95f64, 3),
                                    beta0 in prop::collection::vec(-1.0..1.0f64, 3),
                                    eps in series(3), lag in series(3)) {
        let model = ArModel {
            order: 1,
            delta: 1,
            beta0,
            beta: beta.iter().map(|b| vec![*b]).collect(),
            residual_index_offset: 1,
        };
        let x = invert_ar(&model, &eps, std::slice::from_ref(&lag)).unwrap();
        let pred = model.predict(&[lag]);
        for t in 0..3 {
            prop_assert!((x[t] - pred[t] - eps[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn h_inverse_undoes_h(theta in 0.2..8.0f64, u in 0.01..0.99f64, v in 0.01..0.99f64, rot in 0usize..4) {
        let r = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270][rot];
        for c in [PairCopula::clayton(theta, r), PairCopula::gumbel(1.0 + theta, r), PairCopula::frank(theta), PairCopula::gaussian((theta / 8.5).min(0.95))] {
            let w = c.h_given_v(u, v);
            prop_assert!((0.0..=1.0).contains(&w));
            // inputs are clamped near 0 and 1, where the inverse is not unique
            if !(1e-6..=1.0 - 1e-6).contains(&w) {
                continue;
            }
            let back = c.h_inv_given_v(w, v);
            prop_assert!((back - u).abs() < 1e-6, "{} u={} back={}", c.name(), u, back);
        }
    }

    #[test]
    fn pseudo_observations_lie_in_open_unit_interval(x in prop::collection::vec(-1e3..1e3f64, 1..200)) {
        for u in pseudo_observations(&x) {
            prop_assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn return_period_and_order_agree(npy in 0.5..50.0f64, period in 1.0..200.0f64) {
        prop_assume!(period * npy > 1.0);
        let p = order_for_period(period, npy);
        prop_assert!((return_period(p, npy) - period).abs() < 1e-9 * period);
    }

    #[test]
    fn bands_widen_with_confidence(seed in 0u64..1000) {
        let mut rng = substream(seed, 2);
        let obs: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let narrow = percentile_bands(&obs, &obs, &[0.25, 0.5, 0.75], 200, 0.5, seed).unwrap();
        let wide = percentile_bands(&obs, &obs, &[0.25, 0.5, 0.75], 200, 0.95, seed).unwrap();
        for (n, w) in narrow.cells.iter().zip(&wide.cells) {
            prop_assert!(w.lower <= n.lower + 1e-15 && w.upper >= n.upper - 1e-15);
        }
    }
}
