//! Synthetic tri-modal regression data.
//!
//! Every sample carries a latent sentiment `y ~ U(-3, 3)`. Each modality
//! sees the same nonlinear basis `φ(y) = [y, y², sin y, tanh y, 1]` through
//! its own fixed random mixing matrix, plus i.i.d. Gaussian noise scaled
//! to hit the requested per-entry signal-to-noise ratio. Text defaults to a
//! higher SNR than audio and vision.
//!
//! Dataset file layout (all little-endian):
//!
//! ```text
//! "QMDS"                    4 bytes magic
//! version                   u16 (currently 1)
//! n_train n_val n_test      u64 ×3
//! per modality (t, a, v):   seq_len u32, dim u32, snr f64
//! seed                      u64
//! samples                   train, then val, then test; each is
//!                           label f64, then for t, a, v a row-major
//!                           seq_len × dim block of f64
//! ```
//!
//! Nothing may follow the last sample.

use std::fmt;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::util::ByteReader;

pub const DATASET_MAGIC: &[u8; 4] = b"QMDS";
pub const DATASET_VERSION: u16 = 1;

pub const LABEL_MIN: f64 = -3.0;
pub const LABEL_MAX: f64 = 3.0;

const BASIS_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Text,
    Audio,
    Vision,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Vision];
    pub const COUNT: usize = 3;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Vision => "vision",
        }
    }

    pub fn short(self) -> char {
        match self {
            Modality::Text => 't',
            Modality::Audio => 'a',
            Modality::Vision => 'v',
        }
    }

    pub fn parse(s: &str) -> Result<Modality> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t" | "text" => Ok(Modality::Text),
            "a" | "audio" => Ok(Modality::Audio),
            "v" | "vision" | "visual" => Ok(Modality::Vision),
            other => Err(invalid(format!("unknown modality '{other}'"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A subset of the three modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub const EMPTY: ModalitySet = ModalitySet(0);
    pub const ALL: ModalitySet = ModalitySet(0b111);

    pub fn of(mods: &[Modality]) -> Self {
        ModalitySet(mods.iter().fold(0, |acc, m| acc | (1 << m.index())))
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// Parses comma separated names such as `t,a` or `text,vision`.
    pub fn parse(s: &str) -> Result<Self> {
        let mods = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Modality::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(ModalitySet::of(&mods))
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|m| m.short().to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Shape and noise level of one modality's feature sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalityShape {
    pub seq_len: usize,
    pub dim: usize,
    /// Per-entry signal variance over noise variance. `f64::INFINITY`
    /// disables the noise term.
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub modalities: [ModalityShape; 3],
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_train: 2000,
            n_val: 400,
            n_test: 1000,
            modalities: [
                ModalityShape {
                    seq_len: 8,
                    dim: 32,
                    snr: 4.0,
                },
                ModalityShape {
                    seq_len: 8,
                    dim: 16,
                    snr: 1.0,
                },
                ModalityShape {
                    seq_len: 8,
                    dim: 16,
                    snr: 1.0,
                },
            ],
            seed: 1111,
        }
    }
}

impl DatasetSpec {
    pub fn shape(&self, m: Modality) -> &ModalityShape {
        &self.modalities[m.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(invalid(format!(
                "split sizes must be positive (train={}, val={}, test={})",
                self.n_train, self.n_val, self.n_test
            )));
        }
        for m in Modality::ALL {
            let s = self.shape(m);
            if s.seq_len == 0 || s.dim == 0 {
                return Err(invalid(format!("{m}: seq_len and dim must be positive")));
            }
            if !(s.snr > 0.0) {
                return Err(invalid(format!("{m}: snr must be positive, got {}", s.snr)));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    fn encode(&self, out: &mut Vec<u8>) {
        for n in [self.n_train, self.n_val, self.n_test] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for s in &self.modalities {
            out.extend_from_slice(&(s.seq_len as u32).to_le_bytes());
            out.extend_from_slice(&(s.dim as u32).to_le_bytes());
            out.extend_from_slice(&s.snr.to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
    }

    fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let n_train = r.u64()? as usize;
        let n_val = r.u64()? as usize;
        let n_test = r.u64()? as usize;
        let mut modalities = [ModalityShape {
            seq_len: 0,
            dim: 0,
            snr: 0.0,
        }; 3];
        for s in modalities.iter_mut() {
            s.seq_len = r.u32()? as usize;
            s.dim = r.u32()? as usize;
            s.snr = r.f64()?;
        }
        let seed = r.u64()?;
        let spec = DatasetSpec {
            n_train,
            n_val,
            n_test,
            modalities,
            seed,
        };
        spec.validate()
            .map_err(|e| r.error(format!("invalid spec block: {e}")))?;
        Ok(spec)
    }

    /// Hex digest over the encoded spec (which includes the seed).
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        self.encode(&mut bytes);
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: [Matrix; 3],
    pub label: f64,
}

impl Sample {
    pub fn feature(&self, m: Modality) -> &Matrix {
        &self.features[m.index()]
    }

    pub fn feature_mut(&mut self, m: Modality) -> &mut Matrix {
        &mut self.features[m.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub fingerprint: String,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Nonlinear label basis shared by all modalities.
pub fn basis(y: f64) -> [f64; BASIS_LEN] {
    [y, y * y, y.sin(), y.tanh(), 1.0]
}

/// Fixed mixing matrix for one modality of a dataset seed.
fn mixing_matrix(seed: u64, m: Modality, dim: usize) -> Matrix {
    let mut rng = SeededRng::new(seed)
        .split("data")
        .split("mixing")
        .split_index(m.index() as u64);
    let scale = 1.0 / (BASIS_LEN as f64).sqrt();
    Matrix::from_fn(dim, BASIS_LEN, |_, _| rng.normal() * scale)
}

/// Average per-entry variance of `M φ(y)` for `y ~ U(-3, 3)`, by midpoint
/// quadrature.
fn signal_variance(mix: &Matrix) -> f64 {
    const NODES: usize = 20_000;
    let width = (LABEL_MAX - LABEL_MIN) / NODES as f64;
    let mut sum = vec![0.0; mix.rows()];
    let mut sum_sq = vec![0.0; mix.rows()];
    let mut s = vec![0.0; mix.rows()];
    for k in 0..NODES {
        let y = LABEL_MIN + (k as f64 + 0.5) * width;
        mix.matvec_into(&basis(y), &mut s);
        for j in 0..s.len() {
            sum[j] += s[j];
            sum_sq[j] += s[j] * s[j];
        }
    }
    let n = NODES as f64;
    let per_row: f64 = sum
        .iter()
        .zip(&sum_sq)
        .map(|(a, b)| b / n - (a / n) * (a / n))
        .sum();
    per_row / mix.rows() as f64
}

fn noise_scale(signal_var: f64, snr: f64) -> f64 {
    if snr.is_infinite() {
        0.0
    } else {
        (signal_var / snr).sqrt()
    }
}

pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mixes: Vec<Matrix> = Modality::ALL
        .iter()
        .map(|&m| mixing_matrix(spec.seed, m, spec.shape(m).dim))
        .collect();
    let noise: Vec<f64> = Modality::ALL
        .iter()
        .map(|&m| noise_scale(signal_variance(&mixes[m.index()]), spec.shape(m).snr))
        .collect();

    let sample_root = SeededRng::new(spec.seed).split("data").split("samples");
    let make = |index: usize| -> Sample {
        let mut rng = sample_root.split_index(index as u64);
        let label = rng.uniform_range(LABEL_MIN, LABEL_MAX);
        let phi = basis(label);
        let features = Modality::ALL.map(|m| {
            let shape = spec.shape(m);
            let mix = &mixes[m.index()];
            let mut clean = vec![0.0; shape.dim];
            mix.matvec_into(&phi, &mut clean);
            let rho = noise[m.index()];
            Matrix::from_fn(shape.seq_len, shape.dim, |_, j| {
                if rho == 0.0 {
                    clean[j]
                } else {
                    clean[j] + rho * rng.normal()
                }
            })
        });
        Sample { features, label }
    };

    let train = (0..spec.n_train).map(make).collect();
    let val = (spec.n_train..spec.n_train + spec.n_val)
        .map(make)
        .collect();
    let test = (spec.n_train + spec.n_val..spec.total())
        .map(make)
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        train,
        val,
        test,
        fingerprint: spec.fingerprint(),
    })
}

pub fn encode(dataset: &Dataset) -> Vec<u8> {
    let spec = &dataset.spec;
    let per_sample: usize = 8 + spec
        .modalities
        .iter()
        .map(|s| 8 * s.seq_len * s.dim)
        .sum::<usize>();
    let mut out = Vec::with_capacity(64 + per_sample * spec.total());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    spec.encode(&mut out);
    for sample in dataset
        .train
        .iter()
        .chain(&dataset.val)
        .chain(&dataset.test)
    {
        out.extend_from_slice(&sample.label.to_le_bytes());
        for f in &sample.features {
            for v in f.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let spec = DatasetSpec::decode(&mut r)?;
    let mut read_split = |n: usize| -> Result<Vec<Sample>> {
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let label = r.f64()?;
            let mut feats = Vec::with_capacity(3);
            for s in &spec.modalities {
                let data = r.f64_vec(s.seq_len * s.dim)?;
                feats.push(Matrix::from_vec(s.seq_len, s.dim, data)?);
            }
            let features: [Matrix; 3] = feats.try_into().expect("three modalities");
            samples.push(Sample { features, label });
        }
        Ok(samples)
    };
    let train = read_split(spec.n_train)?;
    let val = read_split(spec.n_val)?;
    let test = read_split(spec.n_test)?;
    r.finish()?;
    let fingerprint = spec.fingerprint();
    Ok(Dataset {
        spec,
        train,
        val,
        test,
        fingerprint,
    })
}

pub fn save(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(&encode(dataset))?;
    file.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    decode(&std::fs::read(path)?)
}
