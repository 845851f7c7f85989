//! Regression metrics, protocol evaluation and the noise × missing-rate grid.
//!
//! A grid evaluates one fixed checkpoint at every `(λ, η)` cell with no
//! retraining. Cell `(i_η, i_λ)` uses seed `grid.seed + i_η · n_λ + i_λ`,
//! so any cell can be reproduced on its own.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::degradation::{
    compute_reference_stats, degrade_sample, sample_batch_coeffs, DegradationSpec, ReferenceStats,
};
use crate::error::{invalid, Error, Result};
use crate::model::{forward, Checkpoint, ModelConfig, Variant};
use crate::numerics::SeededRng;
use crate::synthdata::{Dataset, Modality, Sample};
use crate::training::{train, TrainConfig, TrainMode};

/// Sentiment class in `-3..=3`: nearest integer (halves away from zero),
/// clamped.
pub fn acc7_bin(score: f64) -> i32 {
    score.round().clamp(-3.0, 3.0) as i32
}

/// Binary accuracy and positive-class F1, ignoring samples labelled exactly 0.
pub fn binary_metrics(preds: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if preds.len() != labels.len() {
        return Err(invalid("predictions and labels differ in length"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        if y == 0.0 {
            continue;
        }
        match (p > 0.0, y > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = tp + fp + tn + fn_;
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "no nonzero labels for binary metrics".into(),
        ));
    }
    let acc2 = (tp + tn) as f64 / n as f64;
    // F1 = 2TP / (2TP + FP + FN); zero when there are no true positives
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok((acc2, f1))
}

pub fn mae(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(invalid("mae needs equal, nonzero lengths"));
    }
    Ok(preds
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

pub fn pearson_corr(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() || preds.len() < 2 {
        return Err(invalid("correlation needs at least two paired values"));
    }
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let ml = labels.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, y) in preds.iter().zip(labels) {
        let (dp, dl) = (p - mp, y - ml);
        sxy += dp * dl;
        sxx += dp * dp;
        syy += dl * dl;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            "correlation of a constant sequence".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub acc7: f64,
    pub acc2: f64,
    pub f1: f64,
    pub mae: f64,
    pub corr: f64,
    pub n: usize,
}

impl MetricsRecord {
    pub fn compute(preds: &[f64], labels: &[f64]) -> Result<Self> {
        let (acc2, f1) = binary_metrics(preds, labels)?;
        let hits = preds
            .iter()
            .zip(labels)
            .filter(|(p, y)| acc7_bin(**p) == acc7_bin(**y))
            .count();
        Ok(MetricsRecord {
            acc7: hits as f64 / preds.len() as f64,
            acc2,
            f1,
            mae: mae(preds, labels)?,
            corr: pearson_corr(preds, labels)?,
            n: preds.len(),
        })
    }

    pub const CSV_HEADER: &'static str = "acc7,acc2,f1,mae,corr,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.2},{:.2},{:.2},{:.4},{:.4},{}",
            100.0 * self.acc7,
            100.0 * self.acc2,
            100.0 * self.f1,
            self.mae,
            self.corr,
            self.n
        )
    }
}

/// Raw model outputs over a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub predictions: Vec<f64>,
    pub log_variances: Vec<f64>,
    pub labels: Vec<f64>,
    pub qualities: Vec<[f64; 3]>,
    /// Dense router distribution per sample and modality.
    pub gates: Vec<[Vec<f64>; 3]>,
}

/// The corrupted copy of `samples[index]` that evaluation under `spec` feeds
/// the model.
pub fn degraded_for_eval(
    sample: &Sample,
    index: usize,
    stats: &ReferenceStats,
    spec: &DegradationSpec,
) -> Result<Sample> {
    let rng = SeededRng::new(spec.seed)
        .split("eval")
        .split_index(index as u64);
    let concrete = if spec.is_heterogeneous() {
        let (lambda, eta) = sample_batch_coeffs(&spec.protocol, &mut rng.split("coeffs"))?;
        spec.with_coeffs(lambda, eta)
    } else {
        *spec
    };
    Ok(degrade_sample(sample, &concrete, stats, &mut rng.split("degrade")).0)
}

/// Eval-mode forward passes over `samples` corrupted per `spec`.
pub fn predict(
    ckpt: &Checkpoint,
    samples: &[Sample],
    stats: &ReferenceStats,
    spec: &DegradationSpec,
) -> Result<Predictions> {
    spec.validate()?;
    let mut out = Predictions {
        predictions: Vec::with_capacity(samples.len()),
        log_variances: Vec::with_capacity(samples.len()),
        labels: Vec::with_capacity(samples.len()),
        qualities: Vec::with_capacity(samples.len()),
        gates: Vec::with_capacity(samples.len()),
    };
    for (i, sample) in samples.iter().enumerate() {
        let input = degraded_for_eval(sample, i, stats, spec)?;
        let trace = forward(&input, &ckpt.params, &ckpt.config)?;
        out.predictions.push(trace.prediction);
        out.log_variances.push(trace.log_variance);
        out.labels.push(sample.label);
        out.qualities.push(trace.qualities());
        out.gates
            .push([0, 1, 2].map(|k| trace.modalities[k].dense_gate.to_vec()));
    }
    Ok(out)
}

pub fn evaluate(
    ckpt: &Checkpoint,
    samples: &[Sample],
    stats: &ReferenceStats,
    spec: &DegradationSpec,
) -> Result<MetricsRecord> {
    let p = predict(ckpt, samples, stats, spec)?;
    MetricsRecord::compute(&p.predictions, &p.labels)
}

/// Mean quality score per modality over `samples` corrupted per `spec`.
pub fn mean_quality(
    ckpt: &Checkpoint,
    samples: &[Sample],
    stats: &ReferenceStats,
    spec: &DegradationSpec,
) -> Result<[f64; 3]> {
    let p = predict(ckpt, samples, stats, spec)?;
    let mut acc = [0.0; 3];
    for q in &p.qualities {
        for k in 0..3 {
            acc[k] += q[k] / p.qualities.len() as f64;
        }
    }
    Ok(acc)
}

/// Gating dump: `sample_id,modality,r,g_1..g_N` per sample and modality.
pub fn gating_csv(p: &Predictions) -> String {
    let n = p.gates.first().map_or(0, |g| g[0].len());
    let mut out = String::from("sample_id,modality,r");
    for i in 1..=n {
        let _ = write!(out, ",g_{i}");
    }
    out.push('\n');
    for (id, (gates, q)) in p.gates.iter().zip(&p.qualities).enumerate() {
        for m in Modality::ALL {
            let _ = write!(out, "{id},{},{:.6}", m.name(), q[m.index()]);
            for g in &gates[m.index()] {
                let _ = write!(out, ",{g:.6}");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lambda_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        let steps: Vec<f64> = (0..8).map(|i| i as f64 / 10.0).collect();
        GridSpec {
            lambda_values: steps.clone(),
            eta_values: steps,
            seed: 1111,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, values) in [("lambda", &self.lambda_values), ("eta", &self.eta_values)] {
            if values.is_empty() {
                return Err(invalid(format!("{name} grid is empty")));
            }
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid(format!("{name} grid values must lie in [0, 1]")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!("{name} grid must be strictly increasing")));
            }
        }
        Ok(())
    }

    pub fn cell_seed(&self, eta_idx: usize, lambda_idx: usize) -> u64 {
        self.seed
            .wrapping_add((eta_idx * self.lambda_values.len() + lambda_idx) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub lambda_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    /// Indexed `[eta][lambda]`.
    pub cells: Vec<Vec<MetricsRecord>>,
    pub checkpoint_fingerprint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMetric {
    Acc7,
    Acc2,
    F1,
    Mae,
    Corr,
}

impl GridMetric {
    pub const ALL: [GridMetric; 5] = [
        GridMetric::Acc7,
        GridMetric::Acc2,
        GridMetric::F1,
        GridMetric::Mae,
        GridMetric::Corr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridMetric::Acc7 => "acc7",
            GridMetric::Acc2 => "acc2",
            GridMetric::F1 => "f1",
            GridMetric::Mae => "mae",
            GridMetric::Corr => "corr",
        }
    }

    fn format(self, r: &MetricsRecord) -> String {
        match self {
            GridMetric::Acc7 => format!("{:.2}", 100.0 * r.acc7),
            GridMetric::Acc2 => format!("{:.2}", 100.0 * r.acc2),
            GridMetric::F1 => format!("{:.2}", 100.0 * r.f1),
            GridMetric::Mae => format!("{:.4}", r.mae),
            GridMetric::Corr => format!("{:.4}", r.corr),
        }
    }
}

impl GridResult {
    pub fn cell(&self, eta_idx: usize, lambda_idx: usize) -> &MetricsRecord {
        &self.cells[eta_idx][lambda_idx]
    }

    /// Table layout: header `eta\lambda,0.0,...`, one row per missing rate
    /// labelled as a percentage.
    pub fn to_csv(&self, metric: GridMetric) -> String {
        let mut out = String::from("eta\\lambda");
        for l in &self.lambda_values {
            let _ = write!(out, ",{l:.1}");
        }
        out.push('\n');
        for (eta, row) in self.eta_values.iter().zip(&self.cells) {
            let _ = write!(out, "{}%", (eta * 100.0).round() as i64);
            for r in row {
                let _ = write!(out, ",{}", metric.format(r));
            }
            out.push('\n');
        }
        out
    }

    /// Main-diagonal values of `metric` (as stored, not as percentages).
    pub fn diagonal(&self, pick: impl Fn(&MetricsRecord) -> f64) -> Vec<f64> {
        let n = self.eta_values.len().min(self.lambda_values.len());
        (0..n).map(|i| pick(&self.cells[i][i])).collect()
    }
}

/// Evaluates every `(η, λ)` cell against one checkpoint. `jobs` bounds the
/// worker count; the result does not depend on it.
pub fn grid_sweep(
    ckpt: &Checkpoint,
    samples: &[Sample],
    stats: &ReferenceStats,
    grid: &GridSpec,
    jobs: usize,
) -> Result<GridResult> {
    grid.validate()?;
    let n_l = grid.lambda_values.len();
    let coords: Vec<(usize, usize)> = (0..grid.eta_values.len())
        .flat_map(|e| (0..n_l).map(move |l| (e, l)))
        .collect();
    let run = |&(e, l): &(usize, usize)| -> Result<MetricsRecord> {
        let (lambda, eta) = (grid.lambda_values[l], grid.eta_values[e]);
        let spec = DegradationSpec::cell(lambda, eta, grid.cell_seed(e, l));
        evaluate(ckpt, samples, stats, &spec).map_err(|err| {
            invalid(format!(
                "grid cell (lambda={lambda:.1}, eta={eta:.1}) failed: {err}"
            ))
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    let flat: Vec<MetricsRecord> =
        pool.install(|| coords.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    let cells = flat.chunks(n_l).map(|c| c.to_vec()).collect();
    Ok(GridResult {
        lambda_values: grid.lambda_values.clone(),
        eta_values: grid.eta_values.clone(),
        cells,
        checkpoint_fingerprint: ckpt.fingerprint(),
    })
}

/// The heterogeneous test distribution used for ablations: `λ, η ~ U(0, 1)`
/// drawn per sample.
pub fn mixed_test_spec(seed: u64) -> DegradationSpec {
    DegradationSpec::mixture((0.0, 1.0), (0.0, 1.0), seed)
}

/// Trains `variant` with spectrum training and scores it on the mixed test
/// split.
pub fn ablate(
    variant: Variant,
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    eval_seed: u64,
) -> Result<(Checkpoint, MetricsRecord)> {
    let cfg = ModelConfig {
        variant,
        ..model_cfg.clone()
    };
    let tcfg = TrainConfig {
        mode: TrainMode::Spectrum,
        ..train_cfg.clone()
    };
    let out = train(dataset, &cfg, &tcfg)?;
    let stats = compute_reference_stats(&dataset.train)?;
    let metrics = evaluate(
        &out.checkpoint,
        &dataset.test,
        &stats,
        &mixed_test_spec(eval_seed),
    )?;
    Ok((out.checkpoint, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acc7_cases() {
        assert_eq!(acc7_bin(0.2), 0);
        assert_eq!(acc7_bin(-3.7), -3);
        assert_eq!(acc7_bin(1.5), 2);
        assert_eq!(acc7_bin(-1.5), -2);
        assert_eq!(acc7_bin(9.0), 3);
    }

    #[test]
    fn binary_cases() {
        assert_eq!(
            binary_metrics(&[1.0, -2.0], &[0.5, -0.1]).unwrap(),
            (1.0, 1.0)
        );
        let (acc2, _) = binary_metrics(&[1.0, 1.0, 1.0, 1.0], &[1.0, -1.0, 2.0, -2.0]).unwrap();
        assert_eq!(acc2, 0.5);
        // preds [+,+,−], labels [+,−,−]: precision 1/2, recall 1
        let (acc2, f1) = binary_metrics(&[1.0, 1.0, -1.0], &[1.0, -1.0, -1.0]).unwrap();
        assert!((acc2 - 2.0 / 3.0).abs() < 1e-15);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_labels_excluded() {
        let (acc2, _) = binary_metrics(&[1.0, -1.0, 5.0], &[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(acc2, 1.0);
        assert!(matches!(
            binary_metrics(&[1.0], &[0.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn mae_corr_cases() {
        let y = [0.5, -1.0, 2.0, 0.1];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert!((pearson_corr(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson_corr(&neg, &y).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(mae(&[0.0, 1.0], &[1.0, 3.0]).unwrap(), 1.5);
        assert!(matches!(
            pearson_corr(&[1.0, 1.0], &[0.0, 2.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn shuffled_labels_uncorrelated() {
        let mut rng = SeededRng::new(42);
        let labels: Vec<f64> = (0..2000).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let mut shuffled = labels.clone();
        rng.shuffle(&mut shuffled);
        assert!(pearson_corr(&shuffled, &labels).unwrap().abs() < 0.1);
    }

    #[test]
    fn grid_spec_defaults_and_validation() {
        let g = GridSpec::default();
        assert_eq!(g.lambda_values.len(), 8);
        assert_eq!(g.eta_values[7], 0.7);
        assert!(g.validate().is_ok());
        let bad = GridSpec {
            lambda_values: vec![0.2, 0.1],
            ..GridSpec::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(g.cell_seed(0, 0), g.seed);
        assert_eq!(g.cell_seed(1, 2), g.seed + 10);
    }

    #[test]
    fn record_bounds() {
        let preds = [0.4, -2.2, 1.1, 2.9, -0.3];
        let labels = [0.5, -2.0, -1.0, 3.0, -0.6];
        let r = MetricsRecord::compute(&preds, &labels).unwrap();
        assert!((0.0..=1.0).contains(&r.acc7) && (0.0..=1.0).contains(&r.acc2));
        assert!((0.0..=1.0).contains(&r.f1) && r.mae >= 0.0 && r.corr.abs() <= 1.0);
        assert_eq!(r.n, 5);
    }
}
