//! Quality-aware mixture-of-experts forward pass.
//!
//! Per modality:
//!
//! ```text
//! u_m ─mean─► proj ─► x_m ─┬─► μ_m = W_μ x + b_μ ──► router ─► top-k ─► Σ g_i E_i(μ_m) ─┐
//!                          └─► σ²_m = softplus(W_σ x + b_σ) ─► r_m = 1/(1+mean σ²) ───────┤
//!                                           y_m = r_m · mixture + (1 − r_m) · y_prior ◄──┘
//! ```
//!
//! The three `y_m` are concatenated (t, a, v), fused by one affine layer, and
//! read out by two scalar heads: the prediction `ŷ` and the log-variance `s`.
//! The expert bank and the router are shared by all modalities.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::numerics::linalg::{dot, softmax_in_place, softplus_scalar};
use crate::numerics::{sigmoid, Matrix, SeededRng, Vector};
use crate::synthdata::{hex_digest, DatasetSpec, Modality, Sample};
use crate::util::ByteReader;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QMCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Architecture switches used by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Quality score forced to 1 inside the aggregation.
    NoQualityGating,
    /// Variance head unused and untrained; quality fixed at 1.
    NoVariance,
    /// Prior pinned to zero and never trained.
    NoPrior,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoQualityGating,
        Variant::NoVariance,
        Variant::NoPrior,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoQualityGating => "no-quality-gating",
            Variant::NoVariance => "no-variance",
            Variant::NoPrior => "no-prior",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown variant '{s}'")))
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Variant> {
        Variant::ALL.get(c as usize).copied()
    }

    /// Whether the variance head contributes to the output at all.
    pub fn uses_variance(self) -> bool {
        !matches!(self, Variant::NoVariance)
    }

    pub fn gates_quality(self) -> bool {
        !matches!(self, Variant::NoQualityGating | Variant::NoVariance)
    }

    pub fn learns_prior(self) -> bool {
        !matches!(self, Variant::NoPrior)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_experts: usize,
    pub top_k: usize,
    pub glu_hidden: usize,
    /// Raw feature width of text, audio and vision.
    pub input_dims: [usize; 3],
    /// One prior embedding per modality instead of a shared one.
    pub prior_per_modality: bool,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 32,
            n_experts: 8,
            top_k: 3,
            glu_hidden: 64,
            input_dims: [32, 16, 16],
            prior_per_modality: false,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub fn for_dataset(spec: &DatasetSpec) -> Self {
        ModelConfig {
            input_dims: spec.modalities.map(|s| s.dim),
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.glu_hidden == 0 {
            return Err(invalid("d_model and glu_hidden must be positive"));
        }
        if self.n_experts == 0 || self.top_k == 0 || self.top_k > self.n_experts {
            return Err(invalid(format!(
                "need 1 <= top_k <= n_experts, got top_k={} n_experts={}",
                self.top_k, self.n_experts
            )));
        }
        if self.input_dims.contains(&0) {
            return Err(invalid("input dims must be positive"));
        }
        Ok(())
    }

    fn n_priors(&self) -> usize {
        if self.prior_per_modality {
            Modality::COUNT
        } else {
            1
        }
    }

    pub(crate) fn prior_index(&self, m: Modality) -> usize {
        if self.prior_per_modality {
            m.index()
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Prior,
}

/// Input projection and probabilistic head of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityParams {
    pub proj_w: Matrix,
    pub proj_b: Vector,
    pub mu_w: Matrix,
    pub mu_b: Vector,
    pub sigma_w: Matrix,
    pub sigma_b: Vector,
}

/// One GLU expert: `Wo · ((Wa μ + ba) ⊙ σ(Wb μ + bb)) + bo`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub wa: Matrix,
    pub ba: Vector,
    pub wb: Matrix,
    pub bb: Vector,
    pub wo: Matrix,
    pub bo: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub modalities: Vec<ModalityParams>,
    pub router: Matrix,
    pub experts: Vec<ExpertParams>,
    pub priors: Vec<Vector>,
    pub fusion_w: Matrix,
    pub fusion_b: Vector,
    pub value_w: Vector,
    pub value_b: Vector,
    pub logvar_w: Vector,
    pub logvar_b: Vector,
}

/// Read-only view of one parameter tensor.
pub struct TensorView<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: (usize, usize),
    pub data: &'a [f64],
}

/// Bias giving `softplus(b) = 0.1`, i.e. an initial quality near 0.91.
pub fn initial_sigma_bias() -> f64 {
    0.1f64.exp_m1().ln()
}

impl ModelParams {
    /// All-zero parameters with the shapes `cfg` implies.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let h = cfg.glu_hidden;
        ModelParams {
            modalities: cfg
                .input_dims
                .iter()
                .map(|&dm| ModalityParams {
                    proj_w: Matrix::zeros(d, dm),
                    proj_b: Vector::zeros(d),
                    mu_w: Matrix::zeros(d, d),
                    mu_b: Vector::zeros(d),
                    sigma_w: Matrix::zeros(d, d),
                    sigma_b: Vector::zeros(d),
                })
                .collect(),
            router: Matrix::zeros(cfg.n_experts, d),
            experts: (0..cfg.n_experts)
                .map(|_| ExpertParams {
                    wa: Matrix::zeros(h, d),
                    ba: Vector::zeros(h),
                    wb: Matrix::zeros(h, d),
                    bb: Vector::zeros(h),
                    wo: Matrix::zeros(d, h),
                    bo: Vector::zeros(d),
                })
                .collect(),
            priors: (0..cfg.n_priors()).map(|_| Vector::zeros(d)).collect(),
            fusion_w: Matrix::zeros(d, Modality::COUNT * d),
            fusion_b: Vector::zeros(d),
            value_w: Vector::zeros(d),
            value_b: Vector::zeros(1),
            logvar_w: Vector::zeros(d),
            logvar_b: Vector::zeros(1),
        }
    }

    /// Weights `U(-1/√fan_in, 1/√fan_in)`, zero biases and prior, variance
    /// bias at [`initial_sigma_bias`].
    pub fn init(cfg: &ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        let mut p = ModelParams::zeros(cfg);
        for t in p.tensors_mut() {
            if t.0 == ParamKind::Weight {
                let bound = 1.0 / (t.1 as f64).sqrt();
                for v in t.2.iter_mut() {
                    *v = rng.uniform_range(-bound, bound);
                }
            }
        }
        let sb = initial_sigma_bias();
        for m in &mut p.modalities {
            m.sigma_b.fill(sb);
        }
        Ok(p)
    }

    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        use ParamKind::*;
        let mut out = Vec::new();
        fn mat<'a>(name: String, kind: ParamKind, m: &'a Matrix, out: &mut Vec<TensorView<'a>>) {
            out.push(TensorView {
                name,
                kind,
                shape: m.shape(),
                data: m.as_slice(),
            })
        }
        fn vecv<'a>(name: String, kind: ParamKind, v: &'a Vector, out: &mut Vec<TensorView<'a>>) {
            out.push(TensorView {
                name,
                kind,
                shape: (v.len(), 1),
                data: v,
            })
        }
        for (m, mp) in Modality::ALL.iter().zip(&self.modalities) {
            mat(format!("{m}.proj_w"), Weight, &mp.proj_w, &mut out);
            vecv(format!("{m}.proj_b"), Bias, &mp.proj_b, &mut out);
            mat(format!("{m}.mu_w"), Weight, &mp.mu_w, &mut out);
            vecv(format!("{m}.mu_b"), Bias, &mp.mu_b, &mut out);
            mat(format!("{m}.sigma_w"), Weight, &mp.sigma_w, &mut out);
            vecv(format!("{m}.sigma_b"), Bias, &mp.sigma_b, &mut out);
        }
        mat("router".into(), Weight, &self.router, &mut out);
        for (i, e) in self.experts.iter().enumerate() {
            mat(format!("expert{i}.wa"), Weight, &e.wa, &mut out);
            vecv(format!("expert{i}.ba"), Bias, &e.ba, &mut out);
            mat(format!("expert{i}.wb"), Weight, &e.wb, &mut out);
            vecv(format!("expert{i}.bb"), Bias, &e.bb, &mut out);
            mat(format!("expert{i}.wo"), Weight, &e.wo, &mut out);
            vecv(format!("expert{i}.bo"), Bias, &e.bo, &mut out);
        }
        for (i, p) in self.priors.iter().enumerate() {
            vecv(format!("prior{i}"), Prior, p, &mut out);
        }
        mat("fusion_w".into(), Weight, &self.fusion_w, &mut out);
        vecv("fusion_b".into(), Bias, &self.fusion_b, &mut out);
        vecv("value_w".into(), Weight, &self.value_w, &mut out);
        vecv("value_b".into(), Bias, &self.value_b, &mut out);
        vecv("logvar_w".into(), Weight, &self.logvar_w, &mut out);
        vecv("logvar_b".into(), Bias, &self.logvar_b, &mut out);
        out
    }

    /// Mutable tensors in the same order as [`tensors`](Self::tensors), as
    /// `(kind, fan_in, data)`.
    pub fn tensors_mut(&mut self) -> Vec<(ParamKind, usize, &mut [f64])> {
        use ParamKind::*;
        let mut out: Vec<(ParamKind, usize, &mut [f64])> = Vec::new();
        for mp in &mut self.modalities {
            let fan = mp.proj_w.cols();
            out.push((Weight, fan, mp.proj_w.as_mut_slice()));
            out.push((Bias, 1, &mut mp.proj_b));
            let fan = mp.mu_w.cols();
            out.push((Weight, fan, mp.mu_w.as_mut_slice()));
            out.push((Bias, 1, &mut mp.mu_b));
            let fan = mp.sigma_w.cols();
            out.push((Weight, fan, mp.sigma_w.as_mut_slice()));
            out.push((Bias, 1, &mut mp.sigma_b));
        }
        let fan = self.router.cols();
        out.push((Weight, fan, self.router.as_mut_slice()));
        for e in &mut self.experts {
            let fan = e.wa.cols();
            out.push((Weight, fan, e.wa.as_mut_slice()));
            out.push((Bias, 1, &mut e.ba));
            let fan = e.wb.cols();
            out.push((Weight, fan, e.wb.as_mut_slice()));
            out.push((Bias, 1, &mut e.bb));
            let fan = e.wo.cols();
            out.push((Weight, fan, e.wo.as_mut_slice()));
            out.push((Bias, 1, &mut e.bo));
        }
        for p in &mut self.priors {
            out.push((Prior, 1, p));
        }
        let fan = self.fusion_w.cols();
        out.push((Weight, fan, self.fusion_w.as_mut_slice()));
        out.push((Bias, 1, &mut self.fusion_b));
        let fan = self.value_w.len();
        out.push((Weight, fan, &mut self.value_w));
        out.push((Bias, 1, &mut self.value_b));
        let fan = self.logvar_w.len();
        out.push((Weight, fan, &mut self.logvar_w));
        out.push((Bias, 1, &mut self.logvar_b));
        out
    }

    /// Whether the shapes match `cfg` exactly.
    pub fn conforms_to(&self, cfg: &ModelConfig) -> bool {
        let reference = ModelParams::zeros(cfg);
        let a = self.tensors();
        let b = reference.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape == y.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Concatenation of every tensor in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let mut tensors = self.tensors_mut();
        let total: usize = tensors.iter().map(|t| t.2.len()).sum();
        if total != flat.len() {
            return Err(invalid(format!(
                "expected {total} values, got {}",
                flat.len()
            )));
        }
        let mut off = 0;
        for (_, _, data) in tensors.iter_mut() {
            let n = data.len();
            data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the latent of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLatent {
    pub mu: Vector,
    pub var: Vector,
}

/// Activations of one selected expert, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertTrace {
    pub index: usize,
    /// `Wa μ + ba`
    pub linear: Vector,
    /// `σ(Wb μ + bb)`
    pub gate: Vector,
    pub output: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTrace {
    /// Temporal mean of the raw features.
    pub pooled_raw: Vector,
    /// Projected pooled input after dropout.
    pub input: Vector,
    /// Pre-activation of the variance head.
    pub sigma_pre: Vector,
    pub latent: GaussianLatent,
    /// `1 / (1 + mean σ²)`.
    pub quality: f64,
    /// Weight actually given to the expert mixture (1 for ablations without
    /// quality gating).
    pub gate_weight: f64,
    /// Whether `gate_weight` is the live quality score (and so carries gradient).
    pub quality_gated: bool,
    pub dense_gate: Vector,
    pub sparse_gate: Vector,
    /// Surviving expert indices, highest gate first.
    pub selected: Vec<usize>,
    pub experts: Vec<ExpertTrace>,
    pub mixture: Vector,
    pub output: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub modalities: Vec<ModalityTrace>,
    /// Fusion output after dropout.
    pub fused: Vector,
    pub prediction: f64,
    pub log_variance: f64,
    pub masks: Option<DropoutMasks>,
}

impl ForwardTrace {
    pub fn modality(&self, m: Modality) -> &ModalityTrace {
        &self.modalities[m.index()]
    }

    pub fn qualities(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.modalities[i].quality)
    }
}

/// Inverted-dropout masks (entries are 0 or `1/(1-p)`) for the pooled
/// inputs and the fused representation.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub inputs: Vec<Vector>,
    pub fused: Vector,
}

impl DropoutMasks {
    pub fn sample(cfg: &ModelConfig, rate: f64, rng: &mut SeededRng) -> Self {
        let keep = 1.0 - rate;
        let mut draw = |n: usize| -> Vector {
            (0..n)
                .map(|_| if rng.bernoulli(rate) { 0.0 } else { 1.0 / keep })
                .collect::<Vec<_>>()
                .into()
        };
        let inputs = (0..Modality::COUNT).map(|_| draw(cfg.d_model)).collect();
        let fused = draw(cfg.d_model);
        DropoutMasks { inputs, fused }
    }
}

/// Knobs for [`forward_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    pub dropout: Option<&'a DropoutMasks>,
    /// Replace every quality score by this value before aggregation.
    pub force_quality: Option<f64>,
}

/// Temporal mean of `u` followed by the input projection.
pub fn pool(u: &Matrix, proj_w: &Matrix, proj_b: &[f64]) -> Result<Vector> {
    let mean = u.column_means()?;
    crate::numerics::affine(proj_w, proj_b, &mean)
}

/// Mean and variance heads.
pub fn encode_probabilistic(x: &[f64], head: &ModalityParams) -> Result<GaussianLatent> {
    let mu = crate::numerics::affine(&head.mu_w, &head.mu_b, x)?;
    let pre = crate::numerics::affine(&head.sigma_w, &head.sigma_b, x)?;
    let var = crate::numerics::softplus(&pre);
    Ok(GaussianLatent { mu, var })
}

/// `1 / (1 + mean(var))`.
pub fn quality_score(latent: &GaussianLatent) -> f64 {
    quality_from_var(&latent.var)
}

fn quality_from_var(var: &[f64]) -> f64 {
    let mean = var.iter().sum::<f64>() / var.len() as f64;
    1.0 / (1.0 + mean)
}

/// Indices of the `k` largest entries; ties go to the lower index.
pub fn top_k_indices(dense: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dense.len()).collect();
    // stable sort keeps lower indices first among equal gates
    idx.sort_by(|&a, &b| {
        dense[b]
            .partial_cmp(&dense[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx.truncate(k);
    idx
}

/// Keeps the top `k` entries of a dense gate and renormalises them.
pub fn sparsify(dense: &[f64], k: usize) -> (Vector, Vec<usize>) {
    let selected = top_k_indices(dense, k);
    let z: f64 = selected.iter().map(|&i| dense[i]).sum();
    let mut sparse = vec![0.0; dense.len()];
    for &i in &selected {
        sparse[i] = dense[i] / z;
    }
    (sparse.into(), selected)
}

/// Dense softmax gate over experts and its renormalised top-k version.
pub fn route(mu: &[f64], router: &Matrix, k: usize) -> Result<(Vector, Vector)> {
    if k == 0 || k > router.rows() {
        return Err(invalid(format!("top_k {k} outside 1..={}", router.rows())));
    }
    let logits = crate::numerics::affine(router, &vec![0.0; router.rows()], mu)?;
    let dense = crate::numerics::softmax(&logits)?;
    let (sparse, _) = sparsify(&dense, k);
    Ok((dense, sparse))
}

/// `r · Σ gᵢ Eᵢ + (1 − r) · prior`.
pub fn aggregate(
    r: f64,
    sparse_gate: &[f64],
    expert_outs: &[Vector],
    prior: &[f64],
) -> Result<Vector> {
    if sparse_gate.len() != expert_outs.len() {
        return Err(invalid("one expert output per gate entry required"));
    }
    let mut mix = vec![0.0; prior.len()];
    for (g, e) in sparse_gate.iter().zip(expert_outs) {
        if *g == 0.0 {
            continue;
        }
        if e.len() != prior.len() {
            return Err(invalid("expert output width differs from prior"));
        }
        for (m, v) in mix.iter_mut().zip(e.iter()) {
            *m += g * v;
        }
    }
    Ok(blend(r, &mix, prior))
}

fn blend(r: f64, mix: &[f64], prior: &[f64]) -> Vector {
    mix.iter()
        .zip(prior)
        .map(|(m, p)| r * m + (1.0 - r) * p)
        .collect::<Vec<_>>()
        .into()
}

/// Concatenate per-modality outputs in (t, a, v) order and apply the fusion layer.
pub fn fuse(outputs: &[Vector], fusion_w: &Matrix, fusion_b: &[f64]) -> Result<Vector> {
    if outputs.len() != Modality::COUNT {
        return Err(invalid(format!(
            "fusion expects {} modality vectors, got {}",
            Modality::COUNT,
            outputs.len()
        )));
    }
    let concat: Vec<f64> = outputs.iter().flat_map(|v| v.iter().copied()).collect();
    crate::numerics::affine(fusion_w, fusion_b, &concat)
}

/// Value and log-variance heads.
pub fn predict(h: &[f64], params: &ModelParams) -> Result<(f64, f64)> {
    if h.len() != params.value_w.len() {
        return Err(invalid(format!(
            "head expects width {}, got {}",
            params.value_w.len(),
            h.len()
        )));
    }
    Ok((
        dot(&params.value_w, h) + params.value_b[0],
        dot(&params.logvar_w, h) + params.logvar_b[0],
    ))
}

fn check_sample(sample: &Sample, cfg: &ModelConfig) -> Result<()> {
    for m in Modality::ALL {
        let f = sample.feature(m);
        if f.cols() != cfg.input_dims[m.index()] || f.rows() == 0 {
            return Err(invalid(format!(
                "{m} features are {}x{}, model expects width {}",
                f.rows(),
                f.cols(),
                cfg.input_dims[m.index()]
            )));
        }
    }
    Ok(())
}

/// Evaluation-mode forward pass (no dropout).
pub fn forward(sample: &Sample, params: &ModelParams, cfg: &ModelConfig) -> Result<ForwardTrace> {
    forward_with(sample, params, cfg, ForwardOptions::default())
}

pub fn forward_with(
    sample: &Sample,
    params: &ModelParams,
    cfg: &ModelConfig,
    opts: ForwardOptions<'_>,
) -> Result<ForwardTrace> {
    check_sample(sample, cfg)?;
    let d = cfg.d_model;
    let mut traces = Vec::with_capacity(Modality::COUNT);
    let mut logits = vec![0.0; cfg.n_experts];
    for m in Modality::ALL {
        let mp = &params.modalities[m.index()];
        let pooled_raw = sample.feature(m).column_means()?;
        let mut x = vec![0.0; d];
        mp.proj_w.matvec_into(&pooled_raw, &mut x);
        for (xi, b) in x.iter_mut().zip(mp.proj_b.iter()) {
            *xi += b;
        }
        if let Some(masks) = opts.dropout {
            for (xi, k) in x.iter_mut().zip(masks.inputs[m.index()].iter()) {
                *xi *= k;
            }
        }

        let mut mu = vec![0.0; d];
        mp.mu_w.matvec_into(&x, &mut mu);
        let mut sigma_pre = vec![0.0; d];
        mp.sigma_w.matvec_into(&x, &mut sigma_pre);
        for j in 0..d {
            mu[j] += mp.mu_b[j];
            sigma_pre[j] += mp.sigma_b[j];
        }
        let var: Vec<f64> = sigma_pre.iter().map(|&a| softplus_scalar(a)).collect();
        let latent = GaussianLatent {
            mu: mu.into(),
            var: var.into(),
        };

        let quality = if cfg.variant.uses_variance() {
            quality_score(&latent)
        } else {
            1.0
        };
        let quality_gated = opts.force_quality.is_none() && cfg.variant.gates_quality();
        let gate_weight = match opts.force_quality {
            Some(q) => q,
            None if cfg.variant.gates_quality() => quality,
            None => 1.0,
        };

        params.router.matvec_into(&latent.mu, &mut logits);
        let mut dense = logits.clone();
        softmax_in_place(&mut dense);
        let (sparse_gate, selected) = sparsify(&dense, cfg.top_k);

        let mut experts = Vec::with_capacity(cfg.top_k);
        let mut mixture = vec![0.0; d];
        for &i in &selected {
            let e = &params.experts[i];
            let h = cfg.glu_hidden;
            let mut linear = vec![0.0; h];
            e.wa.matvec_into(&latent.mu, &mut linear);
            let mut gate = vec![0.0; h];
            e.wb.matvec_into(&latent.mu, &mut gate);
            let mut hidden = vec![0.0; h];
            for j in 0..h {
                linear[j] += e.ba[j];
                gate[j] = sigmoid(gate[j] + e.bb[j]);
                hidden[j] = linear[j] * gate[j];
            }
            let mut output = vec![0.0; d];
            e.wo.matvec_into(&hidden, &mut output);
            for (o, b) in output.iter_mut().zip(e.bo.iter()) {
                *o += b;
            }
            let g = sparse_gate[i];
            for (acc, o) in mixture.iter_mut().zip(&output) {
                *acc += g * o;
            }
            experts.push(ExpertTrace {
                index: i,
                linear: linear.into(),
                gate: gate.into(),
                output: output.into(),
            });
        }

        let zero_prior;
        let prior: &[f64] = if cfg.variant.learns_prior() {
            &params.priors[cfg.prior_index(m)]
        } else {
            zero_prior = vec![0.0; d];
            &zero_prior
        };
        let output = blend(gate_weight, &mixture, prior);
        traces.push(ModalityTrace {
            pooled_raw,
            input: x.into(),
            sigma_pre: sigma_pre.into(),
            latent,
            quality,
            gate_weight,
            quality_gated,
            dense_gate: dense.into(),
            sparse_gate,
            selected,
            experts,
            mixture: mixture.into(),
            output,
        });
    }

    let outputs: Vec<Vector> = traces.iter().map(|t| t.output.clone()).collect();
    let mut fused = fuse(&outputs, &params.fusion_w, &params.fusion_b)?;
    if let Some(masks) = opts.dropout {
        for (h, k) in fused.iter_mut().zip(masks.fused.iter()) {
            *h *= k;
        }
    }
    let (prediction, log_variance) = predict(&fused, params)?;
    Ok(ForwardTrace {
        modalities: traces,
        fused,
        prediction,
        log_variance,
        masks: opts.dropout.cloned(),
    })
}

/// Model configuration plus trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        if !params.conforms_to(&config) {
            return Err(invalid("parameter shapes do not match the model config"));
        }
        Ok(Checkpoint { config, params })
    }

    /// Hash over the serialised checkpoint.
    pub fn fingerprint(&self) -> String {
        hex_digest(&self.encode())
    }

    pub fn forward(&self, sample: &Sample) -> Result<ForwardTrace> {
        forward(sample, &self.params, &self.config)
    }

    /// Layout (little-endian): magic, version u16, config block
    /// (d_model, n_experts, top_k, glu_hidden, three input dims as u32;
    /// prior_per_modality u8; variant u8), tensor count u32, then per tensor
    /// rows u32, cols u32 and the row-major f64 data.
    pub fn encode(&self) -> Vec<u8> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(64 + 8 * self.params.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [cfg.d_model, cfg.n_experts, cfg.top_k, cfg.glu_hidden] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in cfg.input_dims {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(cfg.prior_per_modality as u8);
        out.push(cfg.variant.code());
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in &tensors {
            out.extend_from_slice(&(t.shape.0 as u32).to_le_bytes());
            out.extend_from_slice(&(t.shape.1 as u32).to_le_bytes());
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let d_model = r.u32()? as usize;
        let n_experts = r.u32()? as usize;
        let top_k = r.u32()? as usize;
        let glu_hidden = r.u32()? as usize;
        let input_dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let prior_per_modality = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(r.error(format!("bad prior flag {other}"))),
        };
        let code = r.u8()?;
        let variant = Variant::from_code(code)
            .ok_or_else(|| r.error(format!("unknown variant code {code}")))?;
        let config = ModelConfig {
            d_model,
            n_experts,
            top_k,
            glu_hidden,
            input_dims,
            prior_per_modality,
            variant,
        };
        config
            .validate()
            .map_err(|e| r.error(format!("invalid config block: {e}")))?;

        let mut params = ModelParams::zeros(&config);
        let count = r.u32()? as usize;
        let expected: Vec<(usize, usize)> = params.tensors().iter().map(|t| t.shape).collect();
        if count != expected.len() {
            return Err(r.error(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        for (shape, (_, _, data)) in expected.iter().zip(params.tensors_mut()) {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if (rows, cols) != *shape {
                return Err(r.error(format!(
                    "tensor shape {rows}x{cols} does not match expected {}x{}",
                    shape.0, shape.1
                )));
            }
            data.copy_from_slice(&r.f64_vec(rows * cols)?);
        }
        r.finish()?;
        Ok(Checkpoint { config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&self.encode())?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::decode(&std::fs::read(path)?)
    }
}
