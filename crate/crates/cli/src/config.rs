//! Run configuration: flat INI sections of `key = value` pairs.
//!
//! ```text
//! [run]          seed, out_dir
//! [data]         n_train, n_val, n_test, {text,audio,vision}_{seq_len,dim,snr}
//! [model]        d_model, n_experts, top_k, glu_hidden, prior_per_modality, variant
//! [train]        epochs, batch_size, learning_rate, beta1, beta2, epsilon,
//!                weight_decay, grad_clip, dropout, mode,
//!                lambda_min, lambda_max, eta_min, eta_max
//! [degradation]  protocol (I|II|III), available, eta, lambda,
//!                lambda_min, lambda_max, eta_min, eta_max
//! [grid]         lambda_values, eta_values, jobs
//! ```
//!
//! Lines starting with `#` or `;` are comments. Unknown sections and keys are
//! rejected. Every missing key takes its default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qamoe_core::synthdata::ModalityShape;
use qamoe_core::{
    DatasetSpec, GridSpec, Modality, ModalitySet, ModelConfig, ProtocolKind, TrainConfig,
    TrainMode, Variant,
};

/// A config problem, pointing at the offending line when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["seed", "out_dir"]),
    (
        "data",
        &[
            "n_train",
            "n_val",
            "n_test",
            "text_seq_len",
            "text_dim",
            "text_snr",
            "audio_seq_len",
            "audio_dim",
            "audio_snr",
            "vision_seq_len",
            "vision_dim",
            "vision_snr",
        ],
    ),
    (
        "model",
        &[
            "d_model",
            "n_experts",
            "top_k",
            "glu_hidden",
            "prior_per_modality",
            "variant",
        ],
    ),
    (
        "train",
        &[
            "epochs",
            "batch_size",
            "learning_rate",
            "beta1",
            "beta2",
            "epsilon",
            "weight_decay",
            "grad_clip",
            "dropout",
            "mode",
            "lambda_min",
            "lambda_max",
            "eta_min",
            "eta_max",
        ],
    ),
    (
        "degradation",
        &[
            "protocol",
            "available",
            "eta",
            "lambda",
            "lambda_min",
            "lambda_max",
            "eta_min",
            "eta_max",
        ],
    ),
    ("grid", &["lambda_values", "eta_values", "jobs"]),
];

/// Evaluation protocol as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Modality missingness: a fixed available set, or random at rate `eta`.
    I,
    /// Noise only at intensity `lambda`.
    II,
    /// Stochastic mixture over the configured ranges.
    III,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "I" | "1" => Ok(Protocol::I),
            "II" | "2" => Ok(Protocol::II),
            "III" | "3" => Ok(Protocol::III),
            other => Err(format!(
                "unknown protocol '{other}' (expected I, II or III)"
            )),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::I => "I",
            Protocol::II => "II",
            Protocol::III => "III",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub available: Option<ModalitySet>,
    pub eta: f64,
    pub lambda: f64,
    pub lambda_range: (f64, f64),
    pub eta_range: (f64, f64),
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            protocol: Protocol::III,
            available: None,
            eta: 0.0,
            lambda: 0.0,
            lambda_range: (0.0, 1.0),
            eta_range: (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub grid: GridSpec,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1111,
            out_dir: PathBuf::from("out"),
            data: DatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            grid: GridSpec::default(),
            jobs: 1,
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Raw `section.key → value` table with source lines.
struct Table(BTreeMap<(String, String), Entry>);

impl Table {
    fn parse(text: &str) -> Result<Table, ConfigError> {
        let mut map = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        err(Some(line_no), format!("malformed section header '{line}'"))
                    })?
                    .trim();
                let known = SECTIONS.iter().find(|(s, _)| *s == name);
                section = Some(
                    known
                        .ok_or_else(|| err(Some(line_no), format!("unknown section [{name}]")))?
                        .0,
                );
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                err(
                    Some(line_no),
                    format!("expected 'key = value', got '{line}'"),
                )
            })?;
            let key = key.trim();
            let sec = section.ok_or_else(|| {
                err(
                    Some(line_no),
                    format!("key '{key}' appears before any section"),
                )
            })?;
            let keys = SECTIONS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(err(
                    Some(line_no),
                    format!("unknown key '{key}' in [{sec}]"),
                ));
            }
            let slot = (sec.to_string(), key.to_string());
            if let Some(prev) = map.get(&slot) {
                let prev: &Entry = prev;
                return Err(err(
                    Some(line_no),
                    format!(
                        "duplicate key '{key}' in [{sec}] (first set on line {})",
                        prev.line
                    ),
                ));
            }
            map.insert(
                slot,
                Entry {
                    value: value.trim().to_string(),
                    line: line_no,
                },
            );
        }
        Ok(Table(map))
    }

    fn entry(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.0.get(&(sec.to_string(), key.to_string()))
    }

    fn line(&self, sec: &str, key: &str) -> Option<usize> {
        self.entry(sec, key).map(|e| e.line)
    }

    fn get<T: FromStr>(&self, sec: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entry(sec, key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|x| err(Some(e.line), format!("[{sec}] {key} = '{}': {x}", e.value))),
        }
    }

    fn unit(&self, sec: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.get(sec, key, default)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(err(
                self.line(sec, key),
                format!("[{sec}] {key} = {v} must lie in [0, 1]"),
            ));
        }
        Ok(v)
    }

    fn list(&self, sec: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.entry(sec, key) {
            None => Ok(default.to_vec()),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|x| err(Some(e.line), format!("[{sec}] {key}: {x}"))),
        }
    }
}

fn check(r: qamoe_core::Result<()>, line: Option<usize>, sec: &str) -> Result<(), ConfigError> {
    r.map_err(|e| err(line, format!("invalid [{sec}] section: {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let t = Table::parse(text)?;
        let d = RunConfig::default();
        let first_line = |sec: &str| t.0.iter().find(|((s, _), _)| s == sec).map(|(_, e)| e.line);

        let seed = t.get("run", "seed", d.seed)?;
        let out_dir = PathBuf::from(t.get("run", "out_dir", d.out_dir.display().to_string())?);

        let mut data = DatasetSpec { seed, ..d.data };
        data.n_train = t.get("data", "n_train", data.n_train)?;
        data.n_val = t.get("data", "n_val", data.n_val)?;
        data.n_test = t.get("data", "n_test", data.n_test)?;
        for m in Modality::ALL {
            let s: &mut ModalityShape = &mut data.modalities[m.index()];
            s.seq_len = t.get("data", &format!("{}_seq_len", m.name()), s.seq_len)?;
            s.dim = t.get("data", &format!("{}_dim", m.name()), s.dim)?;
            s.snr = t.get("data", &format!("{}_snr", m.name()), s.snr)?;
        }
        check(data.validate(), first_line("data"), "data")?;

        let mut model = ModelConfig::for_dataset(&data);
        model.d_model = t.get("model", "d_model", model.d_model)?;
        model.n_experts = t.get("model", "n_experts", model.n_experts)?;
        model.top_k = t.get("model", "top_k", model.top_k)?;
        model.glu_hidden = t.get("model", "glu_hidden", 2 * model.d_model)?;
        model.prior_per_modality =
            t.get("model", "prior_per_modality", model.prior_per_modality)?;
        if let Some(e) = t.entry("model", "variant") {
            model.variant = Variant::parse(&e.value)
                .map_err(|x| err(Some(e.line), format!("[model] variant: {x}")))?;
        }
        check(model.validate(), first_line("model"), "model")?;

        let tr = TrainConfig { seed, ..d.train };
        let mode = match t.entry("train", "mode") {
            None => tr.mode,
            Some(e) => TrainMode::parse(&e.value)
                .map_err(|x| err(Some(e.line), format!("[train] mode: {x}")))?,
        };
        let train_ranges = (
            (
                t.unit("train", "lambda_min", 0.0)?,
                t.unit("train", "lambda_max", 1.0)?,
            ),
            (
                t.unit("train", "eta_min", 0.0)?,
                t.unit("train", "eta_max", 1.0)?,
            ),
        );
        let train = TrainConfig {
            epochs: t.get("train", "epochs", tr.epochs)?,
            batch_size: t.get("train", "batch_size", tr.batch_size)?,
            learning_rate: t.get("train", "learning_rate", tr.learning_rate)?,
            beta1: t.get("train", "beta1", tr.beta1)?,
            beta2: t.get("train", "beta2", tr.beta2)?,
            epsilon: t.get("train", "epsilon", tr.epsilon)?,
            weight_decay: t.get("train", "weight_decay", tr.weight_decay)?,
            grad_clip: t.get("train", "grad_clip", tr.grad_clip)?,
            dropout: t.get("train", "dropout", tr.dropout)?,
            mode,
            protocol: ProtocolKind::StochasticMixture {
                lambda_range: train_ranges.0,
                eta_range: train_ranges.1,
            },
            seed,
        };
        check(train.validate(), first_line("train"), "train")?;

        let mut eval = EvalConfig::default();
        if let Some(e) = t.entry("degradation", "protocol") {
            eval.protocol = e
                .value
                .parse()
                .map_err(|x: String| err(Some(e.line), format!("[degradation] protocol: {x}")))?;
        }
        if let Some(e) = t.entry("degradation", "available") {
            let set = ModalitySet::parse(&e.value)
                .map_err(|x| err(Some(e.line), format!("[degradation] available: {x}")))?;
            eval.available = Some(set);
        }
        eval.eta = t.unit("degradation", "eta", eval.eta)?;
        eval.lambda = t.unit("degradation", "lambda", eval.lambda)?;
        eval.lambda_range = (
            t.unit("degradation", "lambda_min", eval.lambda_range.0)?,
            t.unit("degradation", "lambda_max", eval.lambda_range.1)?,
        );
        eval.eta_range = (
            t.unit("degradation", "eta_min", eval.eta_range.0)?,
            t.unit("degradation", "eta_max", eval.eta_range.1)?,
        );
        for (key, (lo, hi)) in [
            ("lambda_min", eval.lambda_range),
            ("eta_min", eval.eta_range),
        ] {
            if lo > hi {
                return Err(err(
                    t.line("degradation", key),
                    format!("[degradation] {key} = {lo} exceeds its max {hi}"),
                ));
            }
        }

        let grid = GridSpec {
            lambda_values: t.list("grid", "lambda_values", &d.grid.lambda_values)?,
            eta_values: t.list("grid", "eta_values", &d.grid.eta_values)?,
            seed,
        };
        check(grid.validate(), first_line("grid"), "grid")?;
        let jobs: usize = t.get("grid", "jobs", d.jobs)?;
        if jobs == 0 {
            return Err(err(
                t.line("grid", "jobs"),
                "[grid] jobs must be at least 1",
            ));
        }

        Ok(RunConfig {
            seed,
            out_dir,
            data,
            model,
            train,
            eval,
            grid,
            jobs,
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            anyhow::Error::new(e).context(format!("reading config {}", path.display()))
        })?;
        RunConfig::parse(&text)
            .map_err(|e| anyhow::Error::new(e).context(format!("in {}", path.display())))
    }

    /// Replaces every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        self.data.seed = seed;
        self.train.seed = seed;
        self.grid.seed = seed;
        self
    }
}
