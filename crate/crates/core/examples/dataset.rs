//! Writes a synthetic record to CSV, reads it back and runs the preprocessing
//! chain: seasonal filter, per-step trend, detrending and subsampling.
//!
//! cargo run --release --example dataset

use std::collections::BTreeSet;

use extreme_series::dataset::{detrend, filter_season, fit_trend, read_dataset, subsample, write_dataset, CsvSchema};
use extreme_series::synthetic::{generate, SyntheticConfig};

fn main() -> extreme_series::Result<()> {
    let cfg = SyntheticConfig {
        n_cycles: 3000,
        trend_slope: 2e-4,
        seed: 7,
        ..Default::default()
    };
    let raw = generate(&cfg)?;

    let mut buf = Vec::new();
    write_dataset(&raw, &mut buf)?;
    let text = String::from_utf8_lossy(&buf);
    println!("CSV header: {}...", &text.lines().next().unwrap_or_default()[..40]);
    let ds = read_dataset(buf.as_slice(), &CsvSchema::default())?;
    println!("read {} cycles of length {}", ds.len(), ds.t_len());

    let winter: BTreeSet<u32> = [10, 11, 12, 1, 2, 3].into_iter().collect();
    let season = filter_season(&ds, &winter)?;
    println!("October to March: {} cycles", season.len());

    let trend = fit_trend(&season)?;
    let mid = trend.t_len() / 2;
    println!(
        "trend at step {}: intercept {:.4}, slope {:.2e} per cycle (true {:.2e})",
        mid + 1,
        trend.intercept[mid],
        trend.slope[mid],
        cfg.trend_slope
    );

    let detrended = detrend(&season, &trend)?;
    let every_third = subsample(&detrended, 3)?;
    println!(
        "subsampled every 3rd cycle: {} cycles, cycle step {}",
        every_third.len(),
        every_third.delta()
    );
    Ok(())
}
