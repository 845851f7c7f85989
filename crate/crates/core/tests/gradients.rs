use proptest::prelude::*;
use qamoe_core::gradcheck::{self, GradcheckConfig};
use qamoe_core::model::{forward, ModelParams};
use qamoe_core::numerics::finite_diff_grad;
use qamoe_core::training::{
    adam_step, backward, clip_global_norm, loss_grad_s, nll_loss, OptimizerState,
};
use qamoe_core::{
    Error, Gradients, Matrix, Modality, ModelConfig, Sample, SeededRng, TrainConfig, Variant,
};

#[test]
fn gradcheck_full_variant() {
    let report = gradcheck::run(&GradcheckConfig::default()).unwrap();
    assert_eq!(report.draws, 20);
    assert!(report.passed(), "worst {:?}", report.worst());
    assert_eq!(
        report.tensors.len(),
        ModelParams::zeros(&GradcheckConfig::default().model)
            .tensors()
            .len()
    );
}

#[test]
fn gradcheck_every_variant_and_prior_layout() {
    for variant in [
        Variant::NoQualityGating,
        Variant::NoVariance,
        Variant::NoPrior,
    ] {
        for per_modality in [false, true] {
            let base = GradcheckConfig::default();
            let cfg = GradcheckConfig {
                model: ModelConfig {
                    variant,
                    prior_per_modality: per_modality,
                    ..base.model.clone()
                },
                draws: 6,
                ..base
            };
            let report = gradcheck::run(&cfg).unwrap();
            assert!(
                report.passed(),
                "{variant} per_modality={per_modality}: {:?}",
                report.worst()
            );
        }
    }
}

fn tiny() -> ModelConfig {
    ModelConfig {
        d_model: 4,
        n_experts: 3,
        top_k: 2,
        glu_hidden: 6,
        input_dims: [3, 2, 2],
        ..ModelConfig::default()
    }
}

fn sample(cfg: &ModelConfig, rng: &mut SeededRng) -> Sample {
    Sample {
        features: Modality::ALL
            .map(|m| Matrix::from_fn(2, cfg.input_dims[m.index()], |_, _| rng.normal())),
        label: 0.0,
    }
}

#[test]
fn zero_residual_leaves_value_head_still() {
    let cfg = tiny();
    let mut rng = SeededRng::new(10);
    let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
    p.logvar_w.fill(0.0);
    p.logvar_b[0] = 0.0;
    let mut s = sample(&cfg, &mut rng);
    s.label = forward(&s, &p, &cfg).unwrap().prediction;
    let g = backward(&forward(&s, &p, &cfg).unwrap(), &p, &cfg, s.label).unwrap();
    assert!(g.0.value_w.iter().all(|&v| v == 0.0));
    assert_eq!(g.0.value_b[0], 0.0);
    assert!(g.0.logvar_w.iter().any(|&v| v != 0.0));
    assert_eq!(g.0.logvar_b[0], 0.5);
}

#[test]
fn loss_pressure_raises_variance() {
    // Experts pull far from the target while the prior sits on it, so the
    // loss falls as quality drops.
    let cfg = tiny();
    let mut rng = SeededRng::new(11);
    let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
    for e in &mut p.experts {
        e.bo.fill(5.0);
    }
    p.priors[0].fill(0.0);
    p.fusion_w = Matrix::from_fn(cfg.d_model, 3 * cfg.d_model, |i, j| {
        if j % cfg.d_model == i {
            1.0
        } else {
            0.0
        }
    });
    p.fusion_b.fill(0.0);
    p.value_w.fill(1.0);
    p.value_b[0] = 0.0;
    let s = sample(&cfg, &mut rng);
    let trace = forward(&s, &p, &cfg).unwrap();
    assert!(trace.prediction > 10.0);
    let g = backward(&trace, &p, &cfg, s.label).unwrap();

    let text = Modality::Text.index();
    let base = p.modalities[text].sigma_b.to_vec();
    let numeric = finite_diff_grad(
        |b| {
            let mut q = p.clone();
            q.modalities[text].sigma_b.copy_from_slice(b);
            let t = forward(&s, &q, &cfg).unwrap();
            nll_loss(t.prediction, t.log_variance, s.label)
        },
        &base,
        1e-6,
    )
    .unwrap();
    for (a, n) in g.0.modalities[text].sigma_b.iter().zip(&numeric) {
        assert!(*a < 0.0, "descent must raise variance");
        assert!((a - n).abs() < 1e-6 * n.abs().max(1.0));
    }
}

#[test]
fn stationarity_in_log_variance() {
    for r in [0.1f64, 1.0, 2.0, 5.0] {
        let s = (r * r).ln();
        assert!(loss_grad_s(0.0, s, r).abs() < 1e-10);
        assert!(loss_grad_s(1.0, s, 1.0 - r).abs() < 1e-10);
    }
    assert_eq!(nll_loss(0.4, 0.0, 0.4), 0.0);
}

fn single_scalar() -> ModelConfig {
    ModelConfig {
        d_model: 1,
        n_experts: 1,
        top_k: 1,
        glu_hidden: 1,
        input_dims: [1, 1, 1],
        ..ModelConfig::default()
    }
}

#[test]
fn adam_zero_gradient_is_noop() {
    let cfg = tiny();
    let p0 = ModelParams::init(&cfg, &mut SeededRng::new(1)).unwrap();
    let mut p = p0.clone();
    let mut state = OptimizerState::new(&cfg);
    let tc = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    for _ in 0..3 {
        adam_step(&mut p, &mut Gradients::zeros(&cfg), &mut state, &tc, 1e-3).unwrap();
    }
    assert_eq!(p, p0);
    assert_eq!(state.step, 3);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let cfg = single_scalar();
    let mut p = ModelParams::zeros(&cfg);
    let mut g = Gradients::zeros(&cfg);
    g.0.value_b[0] = 1.0;
    let mut state = OptimizerState::new(&cfg);
    let tc = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    adam_step(&mut p, &mut g, &mut state, &tc, 0.1).unwrap();
    // m̂ = 1, v̂ = 1 → Δ = lr / (1 + ε)
    assert!((p.value_b[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    assert!(p.value_w.iter().all(|&v| v == 0.0));
}

#[test]
fn weight_decay_spares_biases_and_prior() {
    let cfg = single_scalar();
    let mut p = ModelParams::zeros(&cfg);
    p.value_w.fill(2.0);
    p.value_b[0] = 2.0;
    p.priors[0].fill(2.0);
    let mut state = OptimizerState::new(&cfg);
    let tc = TrainConfig {
        weight_decay: 0.5,
        ..TrainConfig::default()
    };
    adam_step(&mut p, &mut Gradients::zeros(&cfg), &mut state, &tc, 0.1).unwrap();
    assert!((p.value_w[0] - 2.0 * 0.95).abs() < 1e-15);
    assert_eq!(p.value_b[0], 2.0);
    assert_eq!(p.priors[0][0], 2.0);
}

#[test]
fn clip_scales_norm_ten_by_a_tenth() {
    let cfg = single_scalar();
    let mut g = Gradients::zeros(&cfg);
    g.0.value_b[0] = 6.0;
    g.0.logvar_b[0] = 8.0;
    let before = clip_global_norm(&mut g, 1.0);
    assert!((before - 10.0).abs() < 1e-12);
    assert!((g.0.value_b[0] - 0.6).abs() < 1e-12 && (g.0.logvar_b[0] - 0.8).abs() < 1e-12);
}

#[test]
fn non_finite_gradient_is_divergence() {
    let cfg = single_scalar();
    let mut p = ModelParams::zeros(&cfg);
    let mut g = Gradients::zeros(&cfg);
    g.0.value_b[0] = f64::NAN;
    let mut state = OptimizerState::new(&cfg);
    let err = adam_step(&mut p, &mut g, &mut state, &TrainConfig::default(), 1e-3).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }));
    assert_eq!(p, ModelParams::zeros(&cfg));
}

proptest! {
    #[test]
    fn clipped_norm_never_exceeds_threshold(
        vals in prop::collection::vec(-1e6..1e6f64, 1..40),
        max_norm in 0.01..10.0f64,
    ) {
        let cfg = tiny();
        let mut g = Gradients::zeros(&cfg);
        let flat_len = g.0.num_params();
        let mut flat = vec![0.0; flat_len];
        for (k, v) in vals.iter().enumerate() {
            flat[(k * 7919) % flat_len] = *v;
        }
        g.0.unflatten(&flat).unwrap();
        clip_global_norm(&mut g, max_norm);
        prop_assert!(g.global_norm() <= max_norm * (1.0 + 1e-12));
    }
}
