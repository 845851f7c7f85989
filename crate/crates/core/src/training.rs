//! Heteroscedastic objective, analytic backpropagation through the whole
//! forward trace, Adam, and the spectrum-aware training loop.

use std::fmt::Write as _;

use crate::degradation::{
    compute_reference_stats, degrade_sample, sample_batch_coeffs, DegradationSpec, ProtocolKind,
};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{self, mae};
use crate::model::{
    forward_with, Checkpoint, DropoutMasks, ForwardOptions, ForwardTrace, ModelConfig, ModelParams,
    ParamKind,
};
use crate::numerics::linalg::dot;
use crate::numerics::{sigmoid, SeededRng};
use crate::synthdata::{Dataset, Modality, Sample};

/// Log-variance is clamped to this range before exponentiation.
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// No degradation during training.
    Clean,
    /// Every batch draws `(λ, η)` from the training protocol.
    Spectrum,
}

impl TrainMode {
    pub fn parse(s: &str) -> Result<TrainMode> {
        match s {
            "clean" => Ok(TrainMode::Clean),
            "spectrum" => Ok(TrainMode::Spectrum),
            other => Err(invalid(format!("unknown training mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Clean => "clean",
            TrainMode::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub dropout: f64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Coefficient distribution used in spectrum mode.
    pub protocol: ProtocolKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
            grad_clip: 1.0,
            dropout: 0.1,
            seed: 1111,
            mode: TrainMode::Spectrum,
            protocol: ProtocolKind::FULL_SPECTRUM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(invalid(format!(
                "grad_clip must be positive, got {}",
                self.grad_clip
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("adam betas must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(invalid("weight_decay must be nonnegative"));
        }
        if matches!(self.protocol, ProtocolKind::FixedMissing { .. })
            && self.mode == TrainMode::Spectrum
        {
            return Err(invalid(
                "spectrum training needs a sampling protocol, not fixed-missing",
            ));
        }
        self.protocol.validate()
    }

    /// Cosine-annealed learning rate for `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let t = epoch as f64 / self.epochs as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// `½ e^{-s} (y − ŷ)² + ½ s`, with `s` clamped inside the exponential.
pub fn nll_loss(y_hat: f64, s: f64, y: f64) -> f64 {
    let r = y - y_hat;
    0.5 * (-s.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp() * r * r + 0.5 * s
}

/// Mean of [`nll_loss`] over a batch.
pub fn batch_nll(preds: &[(f64, f64)], labels: &[f64]) -> f64 {
    preds
        .iter()
        .zip(labels)
        .map(|(&(y_hat, s), &y)| nll_loss(y_hat, s, y))
        .sum::<f64>()
        / preds.len() as f64
}

/// `∂ℒ/∂s = ½ − ½ e^{-s} (y − ŷ)²` (the first term vanishes outside the clamp).
pub fn loss_grad_s(y_hat: f64, s: f64, y: f64) -> f64 {
    let r = y - y_hat;
    if s.abs() < LOGVAR_CLAMP {
        0.5 - 0.5 * (-s).exp() * r * r
    } else {
        0.5
    }
}

/// `∂ℒ/∂ŷ = −e^{-s} (y − ŷ)`.
pub fn loss_grad_y_hat(y_hat: f64, s: f64, y: f64) -> f64 {
    -(-s.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp() * (y - y_hat)
}

/// One gradient tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

impl Gradients {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Gradients(ModelParams::zeros(cfg))
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, _, t) in self.0.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

/// Rescales `grads` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Gradient of the per-sample loss for one trace.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    cfg: &ModelConfig,
    y: f64,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros(cfg);
    backward_into(trace, params, cfg, y, 1.0, &mut grads)?;
    Ok(grads)
}

fn check_trace(trace: &ForwardTrace, params: &ModelParams, cfg: &ModelConfig) -> Result<()> {
    let d = cfg.d_model;
    let ok = trace.modalities.len() == Modality::COUNT
        && trace.fused.len() == d
        && params.value_w.len() == d
        && params.experts.len() == cfg.n_experts
        && trace
            .modalities
            .iter()
            .zip(&params.modalities)
            .all(|(t, p)| {
                t.input.len() == d
                    && t.pooled_raw.len() == p.proj_w.cols()
                    && t.dense_gate.len() == cfg.n_experts
                    && t.experts
                        .iter()
                        .all(|e| e.index < cfg.n_experts && e.linear.len() == cfg.glu_hidden)
            });
    if ok {
        Ok(())
    } else {
        Err(invalid("forward trace does not match the parameter shapes"))
    }
}

/// Accumulates `scale · ∂ℓ/∂θ` into `grads` and returns the sample loss.
pub fn backward_into(
    trace: &ForwardTrace,
    params: &ModelParams,
    cfg: &ModelConfig,
    y: f64,
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    check_trace(trace, params, cfg)?;
    let g = &mut grads.0;
    let d = cfg.d_model;
    let (y_hat, s) = (trace.prediction, trace.log_variance);
    let loss = nll_loss(y_hat, s, y);
    let d_yhat = scale * loss_grad_y_hat(y_hat, s, y);
    let d_s = scale * loss_grad_s(y_hat, s, y);

    // heads
    let h = &trace.fused;
    for j in 0..d {
        g.value_w[j] += d_yhat * h[j];
        g.logvar_w[j] += d_s * h[j];
    }
    g.value_b[0] += d_yhat;
    g.logvar_b[0] += d_s;
    let mut dh: Vec<f64> = (0..d)
        .map(|j| d_yhat * params.value_w[j] + d_s * params.logvar_w[j])
        .collect();
    if let Some(masks) = &trace.masks {
        for (v, k) in dh.iter_mut().zip(masks.fused.iter()) {
            *v *= k;
        }
    }

    // fusion
    let concat: Vec<f64> = trace
        .modalities
        .iter()
        .flat_map(|t| t.output.iter().copied())
        .collect();
    g.fusion_w.add_outer(&dh, &concat);
    for (b, v) in g.fusion_b.iter_mut().zip(&dh) {
        *b += v;
    }
    let mut d_concat = vec![0.0; concat.len()];
    params.fusion_w.matvec_t_acc(&dh, &mut d_concat);

    let hidden = cfg.glu_hidden;
    let mut hid = vec![0.0; hidden];
    let mut d_hid = vec![0.0; hidden];
    let mut d_lin = vec![0.0; hidden];
    let mut d_gate = vec![0.0; hidden];
    let zero_prior = vec![0.0; d];
    for m in Modality::ALL {
        let t = &trace.modalities[m.index()];
        let mp = &params.modalities[m.index()];
        let d_y = &d_concat[m.index() * d..(m.index() + 1) * d];
        let pi = cfg.prior_index(m);
        let prior: &[f64] = if cfg.variant.learns_prior() {
            &params.priors[pi]
        } else {
            &zero_prior
        };
        let w = t.gate_weight;

        // aggregation: y = w·mix + (1 − w)·prior
        if cfg.variant.learns_prior() {
            for (p, dy) in g.priors[pi].iter_mut().zip(d_y) {
                *p += (1.0 - w) * dy;
            }
        }
        let quality_path = t.quality_gated;
        let d_r = if quality_path {
            d_y.iter()
                .zip(t.mixture.iter().zip(prior.iter()))
                .map(|(dy, (mx, p))| dy * (mx - p))
                .sum::<f64>()
        } else {
            0.0
        };
        let d_mix: Vec<f64> = d_y.iter().map(|dy| w * dy).collect();

        // experts and gate
        let mu = &t.latent.mu;
        let mut d_mu = vec![0.0; d];
        let mut d_sparse = vec![0.0; cfg.n_experts];
        for et in &t.experts {
            let i = et.index;
            let e = &params.experts[i];
            let ge = &mut g.experts[i];
            let gate_i = t.sparse_gate[i];
            d_sparse[i] = dot(&d_mix, &et.output);
            let d_out: Vec<f64> = d_mix.iter().map(|v| gate_i * v).collect();
            for j in 0..hidden {
                hid[j] = et.linear[j] * et.gate[j];
            }
            ge.wo.add_outer(&d_out, &hid);
            for (b, v) in ge.bo.iter_mut().zip(&d_out) {
                *b += v;
            }
            d_hid.fill(0.0);
            e.wo.matvec_t_acc(&d_out, &mut d_hid);
            for j in 0..hidden {
                let gt = et.gate[j];
                d_lin[j] = d_hid[j] * gt;
                d_gate[j] = d_hid[j] * et.linear[j] * gt * (1.0 - gt);
            }
            ge.wa.add_outer(&d_lin, mu);
            ge.wb.add_outer(&d_gate, mu);
            for j in 0..hidden {
                ge.ba[j] += d_lin[j];
                ge.bb[j] += d_gate[j];
            }
            e.wa.matvec_t_acc(&d_lin, &mut d_mu);
            e.wb.matvec_t_acc(&d_gate, &mut d_mu);
        }
        // the renormalised top-k gate is a softmax over the surviving logits
        let inner: f64 = t
            .selected
            .iter()
            .map(|&i| t.sparse_gate[i] * d_sparse[i])
            .sum();
        let mut d_logits = vec![0.0; cfg.n_experts];
        for &i in &t.selected {
            d_logits[i] = t.sparse_gate[i] * (d_sparse[i] - inner);
        }
        g.router.add_outer(&d_logits, mu);
        params.router.matvec_t_acc(&d_logits, &mut d_mu);

        // probabilistic heads
        let x = &t.input;
        let mut d_x = vec![0.0; d];
        if quality_path && d_r != 0.0 {
            let r = t.quality;
            let d_var_each = -d_r * r * r / d as f64;
            let d_pre: Vec<f64> = t
                .sigma_pre
                .iter()
                .map(|&a| d_var_each * sigmoid(a))
                .collect();
            let gm = &mut g.modalities[m.index()];
            gm.sigma_w.add_outer(&d_pre, x);
            for (b, v) in gm.sigma_b.iter_mut().zip(&d_pre) {
                *b += v;
            }
            mp.sigma_w.matvec_t_acc(&d_pre, &mut d_x);
        }
        let gm = &mut g.modalities[m.index()];
        gm.mu_w.add_outer(&d_mu, x);
        for (b, v) in gm.mu_b.iter_mut().zip(&d_mu) {
            *b += v;
        }
        mp.mu_w.matvec_t_acc(&d_mu, &mut d_x);

        // input projection
        if let Some(masks) = &trace.masks {
            for (v, k) in d_x.iter_mut().zip(masks.inputs[m.index()].iter()) {
                *v *= k;
            }
        }
        gm.proj_w.add_outer(&d_x, &t.pooled_raw);
        for (b, v) in gm.proj_b.iter_mut().zip(&d_x) {
            *b += v;
        }
    }
    Ok(loss)
}

/// Adam moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: ModelParams,
    pub second: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(cfg: &ModelConfig) -> Self {
        OptimizerState {
            first: ModelParams::zeros(cfg),
            second: ModelParams::zeros(cfg),
            step: 0,
        }
    }
}

/// Clip to the global norm, then one bias-corrected Adam update with
/// decoupled weight decay on weight matrices (biases and priors excluded).
pub fn adam_step(
    params: &mut ModelParams,
    grads: &mut Gradients,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    let norm = clip_global_norm(grads, cfg.grad_clip);
    if !norm.is_finite() || !grads.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            step: state.step as usize,
            message: format!("non-finite gradient (norm {norm})"),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    let grads_t = grads.0.tensors();
    let iter = params
        .tensors_mut()
        .into_iter()
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut())
        .zip(grads_t.iter());
    for ((((kind, _, p), (_, _, m)), (_, _, v)), g) in iter {
        let decayed = kind == ParamKind::Weight && cfg.weight_decay > 0.0;
        for j in 0..p.len() {
            let gj = g.data[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            if decayed {
                p[j] *= decay;
            }
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub mean_r: [f64; 3],
    pub lambda_mean: f64,
    pub eta_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    pub epochs: Vec<EpochReport>,
    pub best_epoch: usize,
    /// Number of `degrade_sample` calls made on training batches.
    pub degradation_calls: u64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,val_mae,mean_r_text,mean_r_audio,mean_r_vision,lambda_mean,eta_mean";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                e.epoch,
                e.train_loss,
                e.val_mae,
                e.mean_r[0],
                e.mean_r[1],
                e.mean_r[2],
                e.lambda_mean,
                e.eta_mean
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters of the epoch with the lowest validation MAE.
    pub checkpoint: Checkpoint,
    pub report: LossReport,
}

/// Validation corruption matching the training distribution.
pub fn validation_spec(cfg: &TrainConfig) -> DegradationSpec {
    let seed = cfg.seed ^ 0x7A11_DA7E;
    match (cfg.mode, cfg.protocol) {
        (TrainMode::Clean, _) => DegradationSpec::clean(seed),
        (
            TrainMode::Spectrum,
            ProtocolKind::StochasticMixture {
                lambda_range,
                eta_range,
            },
        ) => DegradationSpec::mixture(lambda_range, eta_range, seed),
        (TrainMode::Spectrum, ProtocolKind::RandomMissing { eta }) => {
            DegradationSpec::random_missing(eta, seed)
        }
        (TrainMode::Spectrum, ProtocolKind::NoiseOnly { lambda }) => {
            DegradationSpec::noise_only(lambda, seed)
        }
        (TrainMode::Spectrum, ProtocolKind::FixedMissing { available }) => {
            DegradationSpec::fixed_missing(available, seed)
        }
    }
}

pub fn train(dataset: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutput> {
    model_cfg.validate()?;
    cfg.validate()?;
    let expected = dataset.spec.modalities.map(|s| s.dim);
    if expected != model_cfg.input_dims {
        return Err(invalid(format!(
            "model input dims {:?} do not match dataset dims {expected:?}",
            model_cfg.input_dims
        )));
    }
    let stats = compute_reference_stats(&dataset.train)?;
    let root = SeededRng::new(cfg.seed);
    let mut params = ModelParams::init(model_cfg, &mut root.split("init"))?;
    let mut state = OptimizerState::new(model_cfg);
    let val_spec = validation_spec(cfg);

    let n = dataset.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = LossReport::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        root.split("shuffle")
            .split_index(epoch as u64)
            .shuffle(&mut order);
        let mut loss_sum = 0.0;
        let (mut lambda_sum, mut eta_sum, mut n_batches) = (0.0, 0.0, 0usize);

        for batch in order.chunks(cfg.batch_size) {
            let (lambda, eta) = match cfg.mode {
                TrainMode::Clean => (0.0, 0.0),
                TrainMode::Spectrum => {
                    sample_batch_coeffs(&cfg.protocol, &mut root.split("coeffs").split_index(step))?
                }
            };
            lambda_sum += lambda;
            eta_sum += eta;
            n_batches += 1;
            let spec = validation_spec(cfg).with_coeffs(lambda, eta);

            let mut grads = Gradients::zeros(model_cfg);
            let scale = 1.0 / batch.len() as f64;
            for (pos, &idx) in batch.iter().enumerate() {
                let sample = &dataset.train[idx];
                let degraded;
                let input: &Sample = match cfg.mode {
                    TrainMode::Clean => sample,
                    TrainMode::Spectrum => {
                        let mut rng = root
                            .split("degradation")
                            .split_index(step)
                            .split_index(pos as u64);
                        degraded = degrade_sample(sample, &spec, &stats, &mut rng).0;
                        report.degradation_calls += 1;
                        &degraded
                    }
                };
                let masks = (cfg.dropout > 0.0).then(|| {
                    let mut rng = root
                        .split("dropout")
                        .split_index(step)
                        .split_index(pos as u64);
                    DropoutMasks::sample(model_cfg, cfg.dropout, &mut rng)
                });
                let opts = ForwardOptions {
                    dropout: masks.as_ref(),
                    force_quality: None,
                };
                let trace = forward_with(input, &params, model_cfg, opts)?;
                loss_sum +=
                    backward_into(&trace, &params, model_cfg, sample.label, scale, &mut grads)?;
            }
            adam_step(&mut params, &mut grads, &mut state, cfg, lr).map_err(|e| match e {
                Error::Divergence { step, message, .. } => Error::Divergence {
                    epoch,
                    step,
                    message,
                },
                other => other,
            })?;
            step += 1;
        }

        let ckpt = Checkpoint {
            config: model_cfg.clone(),
            params: params.clone(),
        };
        let val = evaluation::predict(&ckpt, &dataset.val, &stats, &val_spec)?;
        let val_mae = mae(&val.predictions, &val.labels)?;
        let mut mean_r = [0.0; 3];
        for q in &val.qualities {
            for k in 0..3 {
                mean_r[k] += q[k] / val.qualities.len() as f64;
            }
        }
        report.epochs.push(EpochReport {
            epoch,
            train_loss: loss_sum / n as f64,
            val_mae,
            mean_r,
            lambda_mean: lambda_sum / n_batches as f64,
            eta_mean: eta_sum / n_batches as f64,
        });
        if best.as_ref().is_none_or(|(b, _)| val_mae < *b) {
            best = Some((val_mae, params.clone()));
            report.best_epoch = epoch;
        }
    }

    let (_, best_params) = best.expect("at least one epoch");
    Ok(TrainOutput {
        checkpoint: Checkpoint::new(model_cfg.clone(), best_params)?,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nll_cases() {
        assert_eq!(nll_loss(1.3, 0.0, 1.3), 0.0);
        assert_eq!(nll_loss(0.0, 0.0, 1.0), 0.5);
        // ½·(1/4)·4 + ½·ln 4
        let expect = 0.5 + 0.5 * 4f64.ln();
        assert!((nll_loss(0.0, 4f64.ln(), 2.0) - expect).abs() < 1e-12);
        assert!((expect - 1.19315).abs() < 1e-5);
    }

    #[test]
    fn grad_s_cases() {
        assert_eq!(loss_grad_s(0.0, 0.0, 1.0), 0.0);
        assert!(loss_grad_s(0.0, 4f64.ln(), 2.0).abs() < 1e-15);
        for s in [-3.0, 0.0, 2.5] {
            assert_eq!(loss_grad_s(0.7, s, 0.7), 0.5);
        }
    }

    #[test]
    fn grad_s_matches_fd() {
        for &(yh, s, y) in &[(0.2, -1.0, 1.4), (0.0, 2.0, -2.0), (1.0, 0.3, 1.1)] {
            let h = 1e-6;
            let fd = (nll_loss(yh, s + h, y) - nll_loss(yh, s - h, y)) / (2.0 * h);
            assert!((fd - loss_grad_s(yh, s, y)).abs() < 1e-8);
            let fd = (nll_loss(yh + h, s, y) - nll_loss(yh - h, s, y)) / (2.0 * h);
            assert!((fd - loss_grad_y_hat(yh, s, y)).abs() < 1e-8);
        }
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        assert!(nll_loss(0.0, -1e6, 3.0).is_finite());
        assert_eq!(loss_grad_s(0.0, -50.0, 3.0), 0.5);
    }

    #[test]
    fn cosine_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), cfg.learning_rate);
        assert!((cfg.lr_at(cfg.epochs / 2) - cfg.learning_rate / 2.0).abs() < 1e-15);
        assert!(cfg.lr_at(cfg.epochs - 1) < 0.01 * cfg.learning_rate);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            epochs: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            grad_clip: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
