//! Runs the file-based workflow end to end, as the command-line tool does:
//! fit, simulate, validate and diagnose, each writing its outputs and a
//! manifest under one directory.
//!
//! cargo run --release --example pipeline [OUT_DIR]

use std::fs::File;
use std::path::PathBuf;

use extreme_series::dataset::write_dataset;
use extreme_series::pipeline::{cmd_diagnose, cmd_fit, cmd_simulate, cmd_validate, RunConfig};
use extreme_series::synthetic::{generate, SyntheticConfig};

fn main() -> extreme_series::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("extreme-series-pipeline"));
    std::fs::create_dir_all(&out).map_err(|source| extreme_series::Error::Io {
        path: out.clone(),
        source,
    })?;

    let input = out.join("record.csv");
    let raw = generate(&SyntheticConfig {
        n_cycles: 12_000,
        event_tail: 3.0,
        event_scale: 3.0,
        trend_slope: 1e-5,
        seed: 4,
        ..Default::default()
    })?;
    let file = File::create(&input).map_err(|source| extreme_series::Error::Io {
        path: input.clone(),
        source,
    })?;
    write_dataset(&raw, file)?;

    // the same document the CLI reads with --config
    let toml = format!(
        r#"
seed = 17
out = "{out}"
input = "{input}"

[fit]
delta = 3
p_u = 0.05

[simulation]
n_sim = 1000
retrend = true

[validation]
reps = 20
n_trees = 100
"#,
        out = out.display(),
        input = input.display()
    );
    let cfg = RunConfig::from_toml(&toml)?.resolve()?;

    let model = cmd_fit(&cfg)?;
    println!("fit: {} extremes, J = {}, u_ell = {:.2}", model.extreme_ids.len(), model.angular.j, model.u_ell);

    let batch = cmd_simulate(&cfg, None)?;
    println!("simulate: {} series, acceptance {:.3}", batch.len(), batch.acceptance_rate());

    let report = cmd_validate(&cfg, None, None)?;
    for h in &report.hard_checks {
        println!("validate: {} {}", if h.passed { "PASS" } else { "FAIL" }, h.name);
    }

    let tables = cmd_diagnose(&cfg)?;
    println!("diagnose: {} tables", tables.len());

    let mut written: Vec<_> = walk(&out);
    written.sort();
    println!("files under {}:", out.display());
    for p in written {
        println!("  {}", p.strip_prefix(&out).unwrap_or(&p).display());
    }
    Ok(())
}

fn walk(dir: &std::path::Path) -> Vec<PathBuf> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    entries
        .flatten()
        .flat_map(|e| {
            let p = e.path();
            if p.is_dir() {
                walk(&p)
            } else {
                vec![p]
            }
        })
        .collect()
}
