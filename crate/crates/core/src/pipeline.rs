//! File-level commands behind the command-line tool: configuration, model
//! persistence, atomic output and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{detrend, filter_season, fit_trend, load_dataset, subsample, CsvSchema, FunctionalDataset, TrendModel};
use crate::error::{Error, Result, StageExt};
use crate::margins::{fit_marginal_mixture, shape_vs_k, threshold_diagnostics, Blocking, ThresholdGrid};
use crate::model::{fit_model, FitOptions, FittedModel};
use crate::polar::{angular_convergence_scan, cost};
use crate::simulator::{read_batch_series, simulate_batch, SimulationBatch, SimulationConfig};
use crate::validation::{run_validation, ValidationOptions, ValidationReport};
use crate::whitening::{acf_pacf, fit_ar};

pub const MODEL_FILE: &str = "model.json";
pub const BATCH_FILE: &str = "batch.csv";
pub const RETRENDED_BATCH_FILE: &str = "batch_retrended.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseOptions {
    pub max_lag: usize,
    pub threshold_grid: ThresholdGrid,
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
    pub j_max: usize,
    pub scan_k_min: usize,
    pub scan_k_max: usize,
    pub scan_k_step: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            max_lag: 10,
            threshold_grid: ThresholdGrid::default(),
            k_min: 10,
            k_max: 1000,
            k_step: 5,
            j_max: 8,
            scan_k_min: 50,
            scan_k_max: 1000,
            scan_k_step: 50,
        }
    }
}

/// Everything a command needs. Loaded from TOML; command-line flags are
/// applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub schema: CsvSchema,
    pub fit: FitOptions,
    pub simulation: SimulationConfig,
    pub validation: ValidationOptions,
    pub diagnose: DiagnoseOptions,
    /// Propagated to the simulation and validation seeds.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: CsvSchema::default(),
            fit: FitOptions::default(),
            simulation: SimulationConfig::default(),
            validation: ValidationOptions::default(),
            diagnose: DiagnoseOptions::default(),
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Copies the top-level seed into the per-command settings and checks
    /// numeric ranges.
    pub fn resolve(mut self) -> Result<Self> {
        self.simulation.seed = self.seed;
        self.validation.seed = self.seed;
        self.simulation.validate()?;
        let f = &self.fit;
        if f.delta < 1 {
            return Err(Error::invalid("delta must be at least 1"));
        }
        if f.ar_order < 1 {
            return Err(Error::invalid("AR order must be at least 1"));
        }
        if !(f.p_u > 0.0 && f.p_u < 1.0) {
            return Err(Error::invalid("p_u must lie in (0, 1)"));
        }
        if let Some(m) = &f.season {
            if m.iter().any(|x| !(1..=12).contains(x)) {
                return Err(Error::invalid("season months must lie in 1..=12"));
            }
        }
        let v = &self.validation;
        if !(v.confidence > 0.0 && v.confidence < 1.0) {
            return Err(Error::invalid("validation confidence must lie in (0, 1)"));
        }
        Ok(self)
    }

    fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::invalid("no input file given"))
            .stage("dataset")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = read_bytes(path)?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// Collects outputs and their digests for the manifest.
struct Outputs {
    files: Vec<FileDigest>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        write_atomic(&path, bytes)?;
        self.files.push(FileDigest {
            sha256: sha256_hex(bytes),
            path,
        });
        Ok(())
    }

    fn write_csv(&mut self, path: PathBuf, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(path, &buf)
    }

    fn finish(
        mut self,
        cfg: &RunConfig,
        command: &str,
        inputs: Vec<FileDigest>,
        summary: serde_json::Value,
    ) -> Result<PathBuf> {
        let manifest = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs,
            outputs: std::mem::take(&mut self.files),
            summary,
        };
        let path = cfg.out.join(format!("{command}_manifest.json"));
        write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(path)
    }
}

fn load_input(cfg: &RunConfig) -> Result<(FunctionalDataset, FileDigest)> {
    let path = cfg.input_path()?;
    let digest = digest_file(path).stage("dataset")?;
    let ds = load_dataset(path, &cfg.schema).stage("dataset")?;
    Ok((ds, digest))
}

fn write_fit_diagnostics(out: &mut Outputs, dir: &Path, model: &FittedModel) -> Result<()> {
    out.write_csv(dir.join("ar_coefficients.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "intercept".into()];
        header.extend((1..=model.ar.order).map(|i| format!("beta{i}")));
        header.extend(["trend_intercept".into(), "trend_slope".into()]);
        wr.write_record(&header)?;
        for t in 0..model.t_len {
            let mut rec = vec![(t + 1).to_string(), model.ar.beta0[t].to_string()];
            rec.extend(model.ar.beta[t].iter().map(|b| b.to_string()));
            rec.push(model.trend.intercept[t].to_string());
            rec.push(model.trend.slope[t].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })?;
    out.write_csv(dir.join("margins.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "n", "p_u", "u", "sigma", "gamma"])?;
        for (t, m) in model.margins.iter().enumerate() {
            wr.write_record([
                (t + 1).to_string(),
                m.n().to_string(),
                m.p_u.to_string(),
                m.u.to_string(),
                m.sigma.to_string(),
                m.gamma.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })?;
    out.write_csv(dir.join("vine.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tree", "pair", "family", "rotation", "par", "par2", "tau", "aic"])?;
        if let Some(v) = &model.angular.vine {
            for e in &v.edges {
                wr.write_record([
                    e.tree.to_string(),
                    format!("{}-{}", e.pair.0, e.pair.1),
                    e.copula.name(),
                    serde_json::to_value(e.copula.rotation)?.as_str().unwrap_or_default().to_string(),
                    e.copula.par.to_string(),
                    e.copula.par2.to_string(),
                    e.tau.to_string(),
                    e.aic.to_string(),
                ])?;
            }
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })
}

/// Fits every model and writes the bundle plus per-step diagnostics.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FittedModel> {
    let (raw, digest) = load_input(cfg)?;
    let (model, _, polar) = fit_model(&raw, &cfg.fit)?;
    let mut out = Outputs::new();
    out.write(cfg.out.join(MODEL_FILE), model.to_json()?.as_bytes())?;
    let dir = cfg.out.join("fit");
    write_fit_diagnostics(&mut out, &dir, &model)?;
    out.write_csv(dir.join("extremes.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cycle_index", "radius"])?;
        for p in &polar.extremes {
            wr.write_record([p.source_id.to_string(), p.radius.to_string()])?;
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })?;
    let summary = serde_json::json!({
        "n_cycles": raw.len(),
        "n_extremes": polar.len(),
        "u_ell": model.u_ell,
        "j": model.angular.j,
        "radius_hill_alpha": model.radius_hill_alpha,
    });
    out.finish(cfg, "fit", vec![digest], summary)?;
    Ok(model)
}

fn model_path(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| cfg.out.join(MODEL_FILE), Path::to_path_buf)
}

pub fn load_model(path: &Path) -> Result<(FittedModel, FileDigest)> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))?;
    let model = FittedModel::from_json(&text)?;
    Ok((
        model,
        FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(text.as_bytes()),
        },
    ))
}

/// Simulates a batch from a stored bundle.
pub fn cmd_simulate(cfg: &RunConfig, model: Option<&Path>) -> Result<SimulationBatch> {
    let (model, digest) = load_model(&model_path(cfg, model))?;
    let batch = simulate_batch(&model, &cfg.simulation)?;
    let mut out = Outputs::new();
    out.write_csv(cfg.out.join(BATCH_FILE), |w| batch.to_csv(w, false))?;
    if cfg.simulation.retrend {
        out.write_csv(cfg.out.join(RETRENDED_BATCH_FILE), |w| batch.to_csv(w, true))?;
    }
    let summary = serde_json::json!({
        "n_sim": batch.len(),
        "acceptance_rate": batch.acceptance_rate(),
        "total_rejections": batch.total_rejections(),
    });
    out.finish(cfg, "simulate", vec![digest], summary)?;
    Ok(batch)
}

/// Runs the validation suite. The caller decides what a failed hard check
/// means for the exit status.
pub fn cmd_validate(cfg: &RunConfig, model: Option<&Path>, batch: Option<&Path>) -> Result<ValidationReport> {
    let (model, model_digest) = load_model(&model_path(cfg, model))?;
    let (raw, data_digest) = load_input(cfg)?;
    let batch_path = batch.map_or_else(|| cfg.out.join(BATCH_FILE), Path::to_path_buf);
    let batch_digest = digest_file(&batch_path).stage("validation")?;
    let simulated = read_batch_series(read_bytes(&batch_path)?.as_slice()).stage("validation")?;
    let report = run_validation(&model, &raw, &simulated, &cfg.validation)?;
    let dir = cfg.out.join("validation");
    let mut out = Outputs::new();
    out.write(dir.join("report.json"), report.to_json()?.as_bytes())?;
    for (name, bytes) in report.csv_artifacts()? {
        out.write(dir.join(name), &bytes)?;
    }
    let summary = serde_json::json!({ "passed": report.passed, "hard_checks": report.hard_checks });
    out.finish(cfg, "validate", vec![model_digest, data_digest, batch_digest], summary)?;
    Ok(report)
}

/// Year of each cycle, for blocking exceedance counts.
fn year_labels(ds: &FunctionalDataset) -> Option<Vec<i64>> {
    use chrono::Datelike;
    ds.series().iter().map(|s| s.date().map(|d| d.year() as i64)).collect()
}

/// Exploratory tables: correlograms, threshold stability per time step,
/// shape estimates against the number of order statistics, and the angular
/// convergence scan.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (raw, digest) = load_input(cfg)?;
    let opts = &cfg.diagnose;
    let f = &cfg.fit;
    let filtered = match &f.season {
        Some(m) => filter_season(&raw, m),
        None => Ok(raw.clone()),
    }
    .stage("dataset")?;
    let trend = if f.detrend { fit_trend(&filtered) } else { Ok(TrendModel::zero(filtered.t_len())) }.stage("dataset")?;
    let detrended = subsample(&detrend(&filtered, &trend).stage("dataset")?, f.delta).stage("dataset")?;
    let (_, res) = fit_ar(&detrended, f.ar_order).stage("whitening")?;
    let residuals = res.residuals;
    let t_len = residuals.t_len();
    let dir = cfg.out.join("diagnose");
    let mut out = Outputs::new();

    out.write_csv(dir.join("acf_pacf.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["series", "t", "lag", "acf", "pacf"])?;
        for (name, ds) in [("detrended", &detrended), ("residuals", &residuals)] {
            for t in 0..t_len {
                let c = acf_pacf(&ds.column(t), opts.max_lag).map_err(|e| e.at_step(t + 1))?;
                for lag in 0..=opts.max_lag {
                    wr.write_record([name.into(), (t + 1).to_string(), lag.to_string(), c.acf[lag].to_string(), c.pacf[lag].to_string()])?;
                }
            }
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })
    .stage("whitening")?;

    let labels = year_labels(&residuals);
    let blocking = labels.as_deref().map_or(Blocking::default(), Blocking::Labels);
    out.write_csv(dir.join("thresholds.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "threshold", "n_exceed", "sigma_prime", "gamma_prime", "mrl", "dispersion"])?;
        for t in 0..t_len {
            let d = threshold_diagnostics(&residuals.column(t), &opts.threshold_grid, &blocking).map_err(|e| e.at_step(t + 1))?;
            for r in &d.rows {
                wr.write_record([
                    (t + 1).to_string(),
                    r.threshold.to_string(),
                    r.n_exceed.to_string(),
                    r.sigma_prime.to_string(),
                    r.gamma_prime.to_string(),
                    r.mrl.to_string(),
                    r.dispersion.to_string(),
                ])?;
            }
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })
    .stage("margins")?;

    let margins = (0..t_len)
        .map(|t| fit_marginal_mixture(&residuals.column(t), f.p_u).map_err(|e| e.at_step(t + 1)))
        .collect::<Result<Vec<_>>>()
        .stage("margins")?;
    let frechet_rows: Vec<Vec<f64>> = residuals
        .series()
        .iter()
        .map(|s| s.values.iter().zip(&margins).map(|(x, m)| m.to_frechet(*x)).collect())
        .collect();
    let ell_eps: Vec<f64> = residuals.series().iter().map(|s| cost(&s.values)).collect();
    let ell_z: Vec<f64> = frechet_rows.iter().map(|r| cost(r)).collect();
    let ks: Vec<usize> = (opts.k_min..=opts.k_max).step_by(opts.k_step.max(1)).collect();
    out.write_csv(dir.join("shape_vs_k.csv"), |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["quantity", "k", "hill", "mle", "moments"])?;
        for (name, sample) in [("cost_residual", &ell_eps), ("cost_frechet", &ell_z)] {
            for s in shape_vs_k(sample, &ks) {
                wr.write_record([name.into(), s.k.to_string(), s.hill.to_string(), s.mle.to_string(), s.moments.to_string()])?;
            }
        }
        wr.flush().map_err(|e| Error::Serialization(e.to_string()))
    })?;

    let frechet = FunctionalDataset::from_rows(frechet_rows).stage("polar")?;
    let k_grid: Vec<usize> = (opts.scan_k_min..=opts.scan_k_max.min(frechet.len()))
        .step_by(opts.scan_k_step.max(1))
        .collect();
    if !k_grid.is_empty() {
        let scan = angular_convergence_scan(&frechet, opts.j_max, &k_grid).stage("polar")?;
        out.write_csv(dir.join("convergence.csv"), |w| scan.to_csv(w))?;
    }

    let paths = out.files.iter().map(|f| f.path.clone()).collect();
    out.finish(cfg, "diagnose", vec![digest], serde_json::json!({ "n_residuals": residuals.len() }))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        cfg.fit.season = None;
        cfg.input = Some("data.csv".into());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[fit]\ndelta = 2\n[simulation]\nn_sim = 10\n").unwrap();
        assert_eq!(cfg.fit.delta, 2);
        assert_eq!(cfg.fit.ar_order, 1);
        assert_eq!(cfg.simulation.n_sim, 10);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.simulation.seed, 7);
        assert_eq!(r.validation.seed, 7);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        let mut cfg = RunConfig::default();
        cfg.fit.p_u = 1.5;
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
