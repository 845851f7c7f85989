//! Finite-difference verification of [`training::backward`].
//!
//! Each draw builds random parameters and a random sample, computes the
//! loss as a plain function of the flattened parameter vector (forward pass
//! only) and compares its central differences with the analytic gradient,
//! tensor by tensor.

use crate::error::Result;
use crate::model::{
    forward_with, DropoutMasks, ForwardOptions, ModelConfig, ModelParams, ParamKind,
};
use crate::numerics::{finite_diff_grad, relative_error, Matrix, SeededRng};
use crate::synthdata::{Modality, Sample};
use crate::training::{backward, nll_loss};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub model: ModelConfig,
    pub seq_len: usize,
    pub draws: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            model: ModelConfig {
                d_model: 8,
                n_experts: 4,
                top_k: 2,
                glu_hidden: 16,
                input_dims: [6, 4, 4],
                ..ModelConfig::default()
            },
            seq_len: 3,
            draws: 20,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 1111,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub draws: usize,
    pub params_per_draw: usize,
    /// Worst error per tensor across all draws.
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Minimum gap between the k-th and (k+1)-th gate so that a step of size
/// `h` cannot change the expert selection.
const SELECTION_MARGIN: f64 = 1e-4;

fn random_params(cfg: &ModelConfig, rng: &mut SeededRng) -> Result<ModelParams> {
    let mut p = ModelParams::init(cfg, rng)?;
    for (kind, _, data) in p.tensors_mut() {
        match kind {
            ParamKind::Weight => {
                // wider than the default init so every nonlinearity is exercised
                data.iter_mut().for_each(|v| *v *= 2.0);
            }
            ParamKind::Bias | ParamKind::Prior => {
                data.iter_mut()
                    .for_each(|v| *v += rng.uniform_range(-0.5, 0.5));
            }
        }
    }
    Ok(p)
}

fn random_sample(
    cfg: &ModelConfig,
    seq_len: usize,
    rng: &mut SeededRng,
    missing: Option<Modality>,
) -> Sample {
    let features = Modality::ALL.map(|m| {
        let dim = cfg.input_dims[m.index()];
        if Some(m) == missing {
            Matrix::zeros(seq_len, dim)
        } else {
            Matrix::from_fn(seq_len, dim, |_, _| rng.normal())
        }
    });
    Sample {
        features,
        label: rng.uniform_range(-3.0, 3.0),
    }
}

fn selection_is_stable(trace: &crate::model::ForwardTrace, k: usize) -> bool {
    trace.modalities.iter().all(|t| {
        let mut g = t.dense_gate.to_vec();
        if k >= g.len() {
            return true;
        }
        g.sort_by(|a, b| b.total_cmp(a));
        g[k - 1] - g[k] > SELECTION_MARGIN
    })
}

/// Runs `cfg.draws` independent draws and reports the worst relative error
/// per tensor.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let model = &cfg.model;
    model.validate()?;
    let root = SeededRng::new(cfg.seed).split("gradcheck");
    let names: Vec<String> = ModelParams::zeros(model)
        .tensors()
        .into_iter()
        .map(|t| t.name)
        .collect();
    let mut worst = vec![0.0f64; names.len()];
    let mut params_per_draw = 0;

    for draw in 0..cfg.draws {
        let mut rng = root.split_index(draw as u64);
        // retry until the top-k selection has a safe margin
        let (params, sample, masks) = loop {
            let params = random_params(model, &mut rng)?;
            let missing = (draw % 4 == 3).then(|| Modality::ALL[draw % 3]);
            let sample = random_sample(model, cfg.seq_len, &mut rng, missing);
            let masks = (draw % 2 == 1).then(|| DropoutMasks::sample(model, 0.3, &mut rng));
            let opts = ForwardOptions {
                dropout: masks.as_ref(),
                force_quality: None,
            };
            let trace = forward_with(&sample, &params, model, opts)?;
            if selection_is_stable(&trace, model.top_k) && trace.log_variance.abs() < 5.0 {
                break (params, sample, masks);
            }
        };
        let opts = ForwardOptions {
            dropout: masks.as_ref(),
            force_quality: None,
        };
        let trace = forward_with(&sample, &params, model, opts)?;
        let analytic = backward(&trace, &params, model, sample.label)?;

        let flat = params.flatten();
        params_per_draw = flat.len();
        let mut probe = params.clone();
        let loss_at = |theta: &[f64]| -> f64 {
            probe.unflatten(theta).expect("same length");
            match forward_with(&sample, &probe, model, opts) {
                Ok(t) => nll_loss(t.prediction, t.log_variance, sample.label),
                Err(_) => f64::NAN,
            }
        };
        let numeric = finite_diff_grad(loss_at, &flat, cfg.step)?;

        let mut off = 0;
        for (k, t) in analytic.0.tensors().iter().enumerate() {
            for (j, &a) in t.data.iter().enumerate() {
                let e = relative_error(a, numeric[off + j]);
                worst[k] = worst[k].max(e);
            }
            off += t.data.len();
        }
    }

    let tensors: Vec<TensorCheck> = names
        .into_iter()
        .zip(&worst)
        .map(|(name, &max_rel_error)| TensorCheck {
            name,
            max_rel_error,
        })
        .collect();
    let max_rel_error = worst.iter().copied().fold(0.0, f64::max);
    Ok(GradcheckReport {
        draws: cfg.draws,
        params_per_draw,
        tensors,
        max_rel_error,
        tolerance: cfg.tolerance,
    })
}
