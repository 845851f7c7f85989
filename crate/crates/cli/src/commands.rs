//! One function per subcommand. Each writes its outputs under `out` and
//! returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qamoe_core::degradation::compute_reference_stats;
use qamoe_core::evaluation::{ablate, gating_csv, grid_sweep, predict, GridMetric};
use qamoe_core::gradcheck::{self, GradcheckConfig};
use qamoe_core::synthdata;
use qamoe_core::training::train;
use qamoe_core::{
    Checkpoint, Dataset, DegradationSpec, Error, MetricsRecord, ModalitySet, ModelConfig,
    TrainMode, Variant,
};

use crate::config::{Protocol, RunConfig};

pub const DATASET_FILE: &str = "dataset.qmds";
pub const CHECKPOINT_FILE: &str = "model.qmck";
pub const LOSS_FILE: &str = "train_loss.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".fingerprint");
    PathBuf::from(s)
}

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    synthdata::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn gen(cfg: &RunConfig, out: &Path) -> Result<String> {
    ensure_dir(out)?;
    let ds = synthdata::generate(&cfg.data)?;
    let path = out.join(DATASET_FILE);
    synthdata::save(&ds, &path).with_context(|| format!("writing {}", path.display()))?;
    if load_dataset(&path)? != ds {
        bail!("dataset {} did not read back identically", path.display());
    }
    write_text(&sidecar(&path), &format!("{}\n", ds.fingerprint))?;
    Ok(format!(
        "wrote {} ({} train / {} val / {} test, fingerprint {})",
        path.display(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len(),
        ds.fingerprint
    ))
}

pub fn train_cmd(
    cfg: &RunConfig,
    out: &Path,
    dataset: &Path,
    mode: Option<TrainMode>,
) -> Result<String> {
    let ds = load_dataset(dataset)?;
    let model = ModelConfig {
        input_dims: ds.spec.modalities.map(|s| s.dim),
        ..cfg.model.clone()
    };
    let mut tcfg = cfg.train.clone();
    if let Some(m) = mode {
        tcfg.mode = m;
    }
    let result = train(&ds, &model, &tcfg).context("training")?;
    ensure_dir(out)?;
    let path = out.join(CHECKPOINT_FILE);
    result
        .checkpoint
        .save(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    if load_checkpoint(&path)? != result.checkpoint {
        bail!(
            "checkpoint {} did not read back identically",
            path.display()
        );
    }
    let fp = result.checkpoint.fingerprint();
    write_text(&sidecar(&path), &format!("{fp}\n"))?;
    write_text(&out.join(LOSS_FILE), &result.report.to_csv())?;

    let e = &result.report.epochs;
    let (first, last) = (&e[0], &e[e.len() - 1]);
    Ok(format!(
        "trained {} epochs ({} mode): loss {:.4} -> {:.4}, best val MAE {:.4} at epoch {}; wrote {}",
        e.len(),
        tcfg.mode.name(),
        first.train_loss,
        last.train_loss,
        e[result.report.best_epoch].val_mae,
        result.report.best_epoch,
        path.display()
    ))
}

/// Evaluation flags that override the `[degradation]` section.
#[derive(Debug, Clone, Default)]
pub struct EvalOverrides {
    pub protocol: Option<Protocol>,
    pub available: Option<ModalitySet>,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub gating: bool,
}

/// The degradation spec and a file-name-friendly label for it.
pub fn eval_spec(cfg: &RunConfig, o: &EvalOverrides) -> Result<(DegradationSpec, String)> {
    let e = &cfg.eval;
    let protocol = o.protocol.unwrap_or(e.protocol);
    let seed = cfg.seed;
    let (spec, label) = match protocol {
        Protocol::I => {
            // an explicit --eta wins over a configured available set
            let available = o.available.or(e.available.filter(|_| o.eta.is_none()));
            match available {
                Some(set) => {
                    let tag: String = set.iter().map(|m| m.short()).collect();
                    (
                        DegradationSpec::fixed_missing(set, seed),
                        format!("I_{tag}"),
                    )
                }
                None => {
                    let eta = o.eta.unwrap_or(e.eta);
                    (
                        DegradationSpec::random_missing(eta, seed),
                        format!("I_eta{eta}"),
                    )
                }
            }
        }
        Protocol::II => {
            let lambda = o.lambda.unwrap_or(e.lambda);
            (
                DegradationSpec::noise_only(lambda, seed),
                format!("II_lambda{lambda}"),
            )
        }
        Protocol::III => (
            DegradationSpec::mixture(e.lambda_range, e.eta_range, seed),
            "III".to_string(),
        ),
    };
    spec.validate()?;
    Ok((spec, label))
}

pub fn eval_cmd(
    cfg: &RunConfig,
    out: &Path,
    dataset: &Path,
    checkpoint: &Path,
    o: &EvalOverrides,
) -> Result<String> {
    let ds = load_dataset(dataset)?;
    let ck = load_checkpoint(checkpoint)?;
    let stats = compute_reference_stats(&ds.train)?;
    let (spec, label) = eval_spec(cfg, o)?;
    let preds = predict(&ck, &ds.test, &stats, &spec)?;
    let record = MetricsRecord::compute(&preds.predictions, &preds.labels)
        .with_context(|| format!("protocol {label}"))?;
    ensure_dir(out)?;
    let csv = format!(
        "condition,{}\n{label},{}\n",
        MetricsRecord::CSV_HEADER,
        record.csv_row()
    );
    let path = out.join(format!("eval_{label}.csv"));
    write_text(&path, &csv)?;
    if o.gating {
        write_text(
            &out.join(format!("gating_{label}.csv")),
            &gating_csv(&preds),
        )?;
    }
    Ok(format!(
        "{label}: {}\nwrote {}",
        record.csv_row(),
        path.display()
    ))
}

pub fn grid_file(metric: GridMetric) -> String {
    format!("grid_{}.csv", metric.name())
}

pub fn grid_cmd(
    cfg: &RunConfig,
    out: &Path,
    dataset: &Path,
    checkpoint: &Path,
    jobs: usize,
) -> Result<String> {
    let ds = load_dataset(dataset)?;
    let ck = load_checkpoint(checkpoint)?;
    let stats = compute_reference_stats(&ds.train)?;
    let result = grid_sweep(&ck, &ds.test, &stats, &cfg.grid, jobs)?;
    ensure_dir(out)?;
    for metric in GridMetric::ALL {
        write_text(&out.join(grid_file(metric)), &result.to_csv(metric))?;
    }
    let diag: Vec<String> = result
        .diagonal(|r| r.acc7)
        .iter()
        .map(|v| format!("{:.2}", 100.0 * v))
        .collect();
    Ok(format!(
        "evaluated {}x{} grid with checkpoint {}; ACC7 diagonal: {}\nwrote {}",
        result.eta_values.len(),
        result.lambda_values.len(),
        result.checkpoint_fingerprint,
        diag.join(" "),
        out.join(grid_file(GridMetric::Acc7)).display()
    ))
}

pub fn ablate_cmd(
    cfg: &RunConfig,
    out: &Path,
    dataset: &Path,
    variants: &[Variant],
) -> Result<String> {
    let ds = load_dataset(dataset)?;
    let model = ModelConfig {
        input_dims: ds.spec.modalities.map(|s| s.dim),
        ..cfg.model.clone()
    };
    let mut csv = format!("variant,{}\n", MetricsRecord::CSV_HEADER);
    let mut summary = String::new();
    for &v in variants {
        let (_, m) =
            ablate(v, &ds, &model, &cfg.train, cfg.seed).with_context(|| format!("variant {v}"))?;
        let _ = writeln!(csv, "{v},{}", m.csv_row());
        let _ = writeln!(
            summary,
            "{v:<18} MAE {:.4}  ACC7 {:.2}",
            m.mae,
            100.0 * m.acc7
        );
    }
    ensure_dir(out)?;
    let path = out.join(ABLATION_FILE);
    write_text(&path, &csv)?;
    let _ = write!(
        summary,
        "test distribution: lambda, eta ~ U(0, 1) per sample\nwrote {}",
        path.display()
    );
    Ok(summary)
}

pub fn gradcheck_cmd(out: &Path, seed: u64, draws: usize) -> Result<String> {
    let cfg = GradcheckConfig {
        seed,
        draws,
        ..GradcheckConfig::default()
    };
    let report = gradcheck::run(&cfg)?;
    ensure_dir(out)?;
    let mut csv = String::from("tensor,max_rel_error\n");
    for t in &report.tensors {
        let _ = writeln!(csv, "{},{:e}", t.name, t.max_rel_error);
    }
    write_text(&out.join(GRADCHECK_FILE), &csv)?;
    let worst = report.worst().map(|t| t.name.as_str()).unwrap_or("-");
    let line = format!(
        "{} draws x {} params: max relative error {:.3e} (worst tensor {worst}, tolerance {:e})",
        report.draws, report.params_per_draw, report.max_rel_error, report.tolerance
    );
    if !report.passed() {
        return Err(Error::OracleFailure(format!("gradient check failed: {line}")).into());
    }
    Ok(format!("gradient check passed: {line}"))
}
