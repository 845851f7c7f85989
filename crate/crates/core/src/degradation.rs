//! Feature-space corruption: token dropout for text, additive Gaussian
//! noise for audio and vision, and whole-modality missingness.
//!
//! A degraded modality is `(1 - miss) · (u + ε)`: noise first, then the
//! missingness mask, so a dropped modality is exactly zero whatever the
//! noise level.

use crate::error::{invalid, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::synthdata::{Modality, ModalitySet, Sample};

/// Which corruption regime a [`DegradationSpec`] follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolKind {
    /// Only the listed modalities survive; the rest are zeroed.
    FixedMissing { available: ModalitySet },
    /// Each modality is dropped independently with probability `eta`.
    RandomMissing { eta: f64 },
    /// Noise at intensity `lambda` on every modality, nothing dropped.
    NoiseOnly { lambda: f64 },
    /// Noise intensity and missing rate drawn uniformly from the ranges.
    StochasticMixture {
        lambda_range: (f64, f64),
        eta_range: (f64, f64),
    },
}

impl ProtocolKind {
    /// The full-spectrum training distribution: `λ, η ~ U(0, 1)`.
    pub const FULL_SPECTRUM: ProtocolKind = ProtocolKind::StochasticMixture {
        lambda_range: (0.0, 1.0),
        eta_range: (0.0, 1.0),
    };

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        match *self {
            ProtocolKind::FixedMissing { available } => {
                if available.is_empty() {
                    return Err(invalid(
                        "fixed-missing protocol needs at least one available modality",
                    ));
                }
                Ok(())
            }
            ProtocolKind::RandomMissing { eta } => unit("eta", eta),
            ProtocolKind::NoiseOnly { lambda } => unit("lambda", lambda),
            ProtocolKind::StochasticMixture {
                lambda_range,
                eta_range,
            } => {
                for (name, (lo, hi)) in [("lambda range", lambda_range), ("eta range", eta_range)] {
                    unit(name, lo)?;
                    unit(name, hi)?;
                    if lo > hi {
                        return Err(invalid(format!("{name} is inverted: [{lo}, {hi}]")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Concrete corruption for one evaluation or training draw.
///
/// `lambda` and `eta` are the coefficients actually applied; `protocol`
/// decides which of them take effect (noise-only never drops, random-missing
/// never adds noise, fixed-missing drops a deterministic set).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    pub lambda: [f64; 3],
    pub eta: f64,
    pub protocol: ProtocolKind,
    pub seed: u64,
}

impl DegradationSpec {
    /// Identity corruption.
    pub fn clean(seed: u64) -> Self {
        Self::cell(0.0, 0.0, seed)
    }

    /// A single grid cell: uniform `lambda` on every modality, missing rate `eta`.
    pub fn cell(lambda: f64, eta: f64, seed: u64) -> Self {
        DegradationSpec {
            lambda: [lambda; 3],
            eta,
            protocol: ProtocolKind::StochasticMixture {
                lambda_range: (lambda, lambda),
                eta_range: (eta, eta),
            },
            seed,
        }
    }

    pub fn fixed_missing(available: ModalitySet, seed: u64) -> Self {
        DegradationSpec {
            lambda: [0.0; 3],
            eta: 0.0,
            protocol: ProtocolKind::FixedMissing { available },
            seed,
        }
    }

    pub fn random_missing(eta: f64, seed: u64) -> Self {
        DegradationSpec {
            lambda: [0.0; 3],
            eta,
            protocol: ProtocolKind::RandomMissing { eta },
            seed,
        }
    }

    pub fn noise_only(lambda: f64, seed: u64) -> Self {
        DegradationSpec {
            lambda: [lambda; 3],
            eta: 0.0,
            protocol: ProtocolKind::NoiseOnly { lambda },
            seed,
        }
    }

    /// Heterogeneous mixture; per-sample coefficients are drawn at use.
    pub fn mixture(lambda_range: (f64, f64), eta_range: (f64, f64), seed: u64) -> Self {
        DegradationSpec {
            lambda: [lambda_range.0; 3],
            eta: eta_range.0,
            protocol: ProtocolKind::StochasticMixture {
                lambda_range,
                eta_range,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (m, &l) in Modality::ALL.iter().zip(&self.lambda) {
            if !(0.0..=1.0).contains(&l) {
                return Err(invalid(format!(
                    "lambda for {m} must lie in [0, 1], got {l}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        self.protocol.validate()
    }

    /// True when the protocol asks for per-sample coefficient draws.
    pub fn is_heterogeneous(&self) -> bool {
        matches!(self.protocol, ProtocolKind::StochasticMixture { lambda_range, eta_range }
            if lambda_range.0 < lambda_range.1 || eta_range.0 < eta_range.1)
    }

    /// Same protocol with coefficients replaced by a fresh draw.
    pub fn with_coeffs(&self, lambda: f64, eta: f64) -> Self {
        DegradationSpec {
            lambda: [lambda; 3],
            eta,
            ..*self
        }
    }
}

/// Per-modality reference standard deviation from the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceStats {
    pub sigma_ref: [f64; 3],
}

/// Which modalities were zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MissMask {
    pub flags: [bool; 3],
}

impl MissMask {
    pub fn is_missing(&self, m: Modality) -> bool {
        self.flags[m.index()]
    }
}

/// Population standard deviation of every scalar entry of each modality.
pub fn compute_reference_stats(train: &[Sample]) -> Result<ReferenceStats> {
    if train.is_empty() {
        return Err(invalid(
            "reference statistics need a nonempty training split",
        ));
    }
    let sigma_ref = Modality::ALL.map(|m| {
        // two-pass for accuracy
        let n: usize = train.iter().map(|s| s.feature(m).as_slice().len()).sum();
        let mean = train
            .iter()
            .flat_map(|s| s.feature(m).as_slice())
            .sum::<f64>()
            / n as f64;
        let var = train
            .iter()
            .flat_map(|s| s.feature(m).as_slice())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        var.sqrt()
    });
    Ok(ReferenceStats { sigma_ref })
}

/// Adds i.i.d. `N(0, (λ·σ_ref)²)` noise. `λ = 0` (or `σ_ref = 0`) returns
/// the input unchanged.
pub fn apply_awgn(u: &Matrix, lambda: f64, sigma_ref: f64, rng: &mut SeededRng) -> Matrix {
    let mut out = u.clone();
    let std = lambda * sigma_ref;
    if std > 0.0 {
        for v in out.as_mut_slice() {
            *v += std * rng.normal();
        }
    }
    out
}

/// Zeroes each row (token) independently with probability `λ`.
pub fn apply_token_dropout(u: &Matrix, lambda: f64, rng: &mut SeededRng) -> Matrix {
    let mut out = u.clone();
    if lambda > 0.0 {
        for t in 0..out.rows() {
            if rng.bernoulli(lambda) {
                out.row_mut(t).fill(0.0);
            }
        }
    }
    out
}

/// Zeroes each modality independently with probability `η`.
pub fn apply_missingness(sample: &Sample, eta: f64, rng: &mut SeededRng) -> (Sample, MissMask) {
    let mut out = sample.clone();
    let mut mask = MissMask::default();
    if eta > 0.0 {
        for m in Modality::ALL {
            if rng.bernoulli(eta) {
                mask.flags[m.index()] = true;
                out.feature_mut(m).as_mut_slice().fill(0.0);
            }
        }
    }
    (out, mask)
}

/// Draws one `(λ, η)` pair for a batch.
pub fn sample_batch_coeffs(protocol: &ProtocolKind, rng: &mut SeededRng) -> Result<(f64, f64)> {
    match *protocol {
        ProtocolKind::FixedMissing { .. } => Err(invalid(
            "fixed-missing protocol has no coefficients to sample",
        )),
        ProtocolKind::RandomMissing { eta } => Ok((0.0, eta)),
        ProtocolKind::NoiseOnly { lambda } => Ok((lambda, 0.0)),
        ProtocolKind::StochasticMixture {
            lambda_range,
            eta_range,
        } => {
            let lambda = rng.uniform_range(lambda_range.0, lambda_range.1);
            let eta = rng.uniform_range(eta_range.0, eta_range.1);
            Ok((lambda, eta))
        }
    }
}

/// Full corruption of one sample: per-modality noise (token dropout for
/// text, AWGN otherwise), then missingness.
pub fn degrade_sample(
    sample: &Sample,
    spec: &DegradationSpec,
    stats: &ReferenceStats,
    rng: &mut SeededRng,
) -> (Sample, MissMask) {
    let apply_noise = !matches!(spec.protocol, ProtocolKind::RandomMissing { .. });
    let mut out = sample.clone();
    if apply_noise {
        for m in Modality::ALL {
            let lambda = spec.lambda[m.index()];
            if lambda == 0.0 {
                continue;
            }
            let mut sub = rng.split(m.name());
            let u = sample.feature(m);
            out.features[m.index()] = match m {
                Modality::Text => apply_token_dropout(u, lambda, &mut sub),
                _ => apply_awgn(u, lambda, stats.sigma_ref[m.index()], &mut sub),
            };
        }
    }

    match spec.protocol {
        ProtocolKind::FixedMissing { available } => {
            let mut mask = MissMask::default();
            for m in Modality::ALL {
                if !available.contains(m) {
                    mask.flags[m.index()] = true;
                    out.feature_mut(m).as_mut_slice().fill(0.0);
                }
            }
            (out, mask)
        }
        ProtocolKind::NoiseOnly { .. } => (out, MissMask::default()),
        _ => apply_missingness(&out, spec.eta, &mut rng.split("missing")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, DatasetSpec};

    fn dataset() -> crate::synthdata::Dataset {
        generate(&DatasetSpec {
            n_train: 20,
            n_val: 1,
            n_test: 1,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    fn one_sample(v: f64) -> Sample {
        let m = Matrix::from_vec(1, 2, vec![v, v]).unwrap();
        Sample {
            features: [m.clone(), m.clone(), m],
            label: 0.0,
        }
    }

    #[test]
    fn reference_stats_cases() {
        let s = compute_reference_stats(&[one_sample(3.0), one_sample(3.0)]).unwrap();
        assert_eq!(s.sigma_ref, [0.0; 3]);
        // entries {0, 0, 2, 2}: population std 1
        let s = compute_reference_stats(&[one_sample(0.0), one_sample(2.0)]).unwrap();
        assert_eq!(s.sigma_ref, [1.0; 3]);
        assert!(compute_reference_stats(&[]).is_err());
    }

    #[test]
    fn awgn_zero_lambda_is_identity() {
        let d = dataset();
        let u = d.train[0].feature(Modality::Audio);
        let mut rng = SeededRng::new(1);
        assert_eq!(&apply_awgn(u, 0.0, 2.0, &mut rng), u);
    }

    #[test]
    fn awgn_deterministic() {
        let d = dataset();
        let u = d.train[0].feature(Modality::Audio);
        let a = apply_awgn(u, 0.4, 1.5, &mut SeededRng::new(9));
        let b = apply_awgn(u, 0.4, 1.5, &mut SeededRng::new(9));
        assert_eq!(a, b);
        assert_ne!(&a, u);
    }

    #[test]
    fn token_dropout_extremes() {
        let d = dataset();
        let u = d.train[0].feature(Modality::Text);
        let mut rng = SeededRng::new(2);
        assert_eq!(&apply_token_dropout(u, 0.0, &mut rng), u);
        let all = apply_token_dropout(u, 1.0, &mut rng);
        assert!(all.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn token_dropout_keeps_survivors() {
        let d = dataset();
        let u = d.train[0].feature(Modality::Text);
        let out = apply_token_dropout(u, 0.5, &mut SeededRng::new(4));
        for t in 0..u.rows() {
            let row = out.row(t);
            assert!(row.iter().all(|&v| v == 0.0) || row == u.row(t));
        }
    }

    #[test]
    fn missingness_extremes() {
        let d = dataset();
        let s = &d.train[0];
        let mut rng = SeededRng::new(3);
        let (out, mask) = apply_missingness(s, 0.0, &mut rng);
        assert_eq!(&out, s);
        assert_eq!(mask.flags, [false; 3]);
        let (out, mask) = apply_missingness(s, 1.0, &mut rng);
        assert_eq!(mask.flags, [true; 3]);
        assert!(out
            .features
            .iter()
            .all(|f| f.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn batch_coeff_cases() {
        let mut rng = SeededRng::new(0);
        let point = ProtocolKind::StochasticMixture {
            lambda_range: (0.0, 0.0),
            eta_range: (0.0, 0.0),
        };
        assert_eq!(sample_batch_coeffs(&point, &mut rng).unwrap(), (0.0, 0.0));
        let point = ProtocolKind::StochasticMixture {
            lambda_range: (0.3, 0.3),
            eta_range: (0.7, 0.7),
        };
        assert_eq!(sample_batch_coeffs(&point, &mut rng).unwrap(), (0.3, 0.7));
        let fixed = ProtocolKind::FixedMissing {
            available: ModalitySet::ALL,
        };
        assert!(sample_batch_coeffs(&fixed, &mut rng).is_err());
    }

    #[test]
    fn clean_spec_is_bit_identity() {
        let d = dataset();
        let stats = compute_reference_stats(&d.train).unwrap();
        for s in &d.train {
            let (out, mask) = degrade_sample(
                s,
                &DegradationSpec::clean(5),
                &stats,
                &mut SeededRng::new(5),
            );
            assert_eq!(&out, s);
            assert_eq!(mask.flags, [false; 3]);
        }
    }

    #[test]
    fn fixed_missing_text_only() {
        let d = dataset();
        let stats = compute_reference_stats(&d.train).unwrap();
        let spec = DegradationSpec::fixed_missing(ModalitySet::of(&[Modality::Text]), 1);
        let s = &d.train[3];
        let (out, mask) = degrade_sample(s, &spec, &stats, &mut SeededRng::new(1));
        assert_eq!(out.feature(Modality::Text), s.feature(Modality::Text));
        for m in [Modality::Audio, Modality::Vision] {
            assert!(mask.is_missing(m));
            assert!(out.feature(m).as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn compound_cell_marks_and_zeroes() {
        let d = dataset();
        let stats = compute_reference_stats(&d.train).unwrap();
        let spec = DegradationSpec::cell(0.3, 0.2, 11);
        spec.validate().unwrap();
        let mut any_noise = false;
        for (i, s) in d.train.iter().enumerate() {
            let mut rng = SeededRng::new(11).split_index(i as u64);
            let (out, mask) = degrade_sample(s, &spec, &stats, &mut rng);
            for m in Modality::ALL {
                if mask.is_missing(m) {
                    assert!(out.feature(m).as_slice().iter().all(|&v| v == 0.0));
                } else if out.feature(m) != s.feature(m) {
                    any_noise = true;
                }
            }
        }
        assert!(any_noise);
    }

    #[test]
    fn zero_absorption_under_heavy_noise() {
        let d = dataset();
        let stats = compute_reference_stats(&d.train).unwrap();
        let spec = DegradationSpec::cell(1.0, 0.5, 2);
        for (i, s) in d.train.iter().enumerate() {
            let (out, mask) = degrade_sample(s, &spec, &stats, &mut SeededRng::new(i as u64));
            for m in Modality::ALL.into_iter().filter(|&m| mask.is_missing(m)) {
                assert!(out.feature(m).as_slice().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn protocol_purity() {
        let d = dataset();
        let stats = compute_reference_stats(&d.train).unwrap();
        let noise = DegradationSpec::noise_only(0.9, 0);
        let missing = DegradationSpec::random_missing(0.5, 0);
        for (i, s) in d.train.iter().enumerate() {
            let (_, mask) = degrade_sample(s, &noise, &stats, &mut SeededRng::new(i as u64));
            assert_eq!(mask.flags, [false; 3]);
            let (out, mask) = degrade_sample(s, &missing, &stats, &mut SeededRng::new(i as u64));
            for m in Modality::ALL.into_iter().filter(|&m| !mask.is_missing(m)) {
                assert_eq!(out.feature(m), s.feature(m));
            }
        }
    }

    #[test]
    fn validation() {
        assert!(DegradationSpec::cell(1.5, 0.0, 0).validate().is_err());
        assert!(DegradationSpec::random_missing(-0.1, 0).validate().is_err());
        assert!(DegradationSpec::fixed_missing(ModalitySet::EMPTY, 0)
            .validate()
            .is_err());
        assert!(DegradationSpec::mixture((0.6, 0.2), (0.0, 1.0), 0)
            .validate()
            .is_err());
        assert!(DegradationSpec::mixture((0.0, 1.0), (0.0, 1.0), 0)
            .validate()
            .is_ok());
    }
}
