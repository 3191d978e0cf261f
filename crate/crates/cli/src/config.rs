//! Experiment configuration: one JSON document, optionally starting from a
//! named preset, with dotted-path leaf overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use swat_core::data::{synth::synthetic_text, BatchSpec, Corpus, Split, VOCAB_SIZE};
use swat_core::eval::EvalMode;
use swat_core::model::ModelConfig;
use swat_core::train::TrainConfig;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Authoritative seed; copied into `model.seed` and `train.seed`.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalAxes,
    /// Training regimes for `compare-regimes`; each shares `model` and
    /// `train` and overrides the sequence geometry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regimes: Vec<RegimeSpec>,
    /// Output root; falls back to `$SWAT_LAB_OUTPUT`, then `runs/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Text files or directories (searched recursively for `.txt`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corpus: Vec<PathBuf>,
    /// Generated corpus used when `corpus` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    pub batch: BatchSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub bytes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalAxes {
    pub windows: Vec<usize>,
    pub lengths: Vec<usize>,
    pub max_examples: usize,
    pub mode: EvalMode,
    #[serde(default = "default_split")]
    pub split: Split,
}

fn default_split() -> Split {
    Split::Test
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub name: String,
    pub train_length: usize,
    /// Defaults to `model.window`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_window: Option<usize>,
}

pub struct Preset {
    pub name: &'static str,
    pub json: &'static str,
}

macro_rules! preset {
    ($name:literal, $file:literal) => {
        Preset {
            name: $name,
            json: include_str!(concat!("../presets/", $file)),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("toy", "toy.json"),
    preset!("vanilla-softmax-rope-w32", "vanilla-softmax-rope-w32.json"),
    preset!("vanilla-sigmoid-rope-w32", "vanilla-sigmoid-rope-w32.json"),
    preset!(
        "sliding-sigmoid-alibi-6:6",
        "sliding-sigmoid-alibi-6-6.json"
    ),
    preset!(
        "sliding-sigmoid-alirope-6:6",
        "sliding-sigmoid-alirope-6-6.json"
    ),
    preset!(
        "vanilla-softmax-rope-w256",
        "vanilla-softmax-rope-w256.json"
    ),
    preset!(
        "vanilla-sigmoid-alibi-w256",
        "vanilla-sigmoid-alibi-w256.json"
    ),
    preset!("regimes-softmax-rope-w64", "regimes-softmax-rope-w64.json"),
    preset!(
        "regimes-sigmoid-alirope-w64",
        "regimes-sigmoid-alirope-w64.json"
    ),
];

pub fn preset(name: &str) -> Result<&'static Preset, CliError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        CliError::validation(format!(
            "unknown preset {name:?}; available: {}",
            names.join(", ")
        ))
    })
}

/// Where the base document comes from before overrides.
pub enum Source<'a> {
    File(&'a Path),
    Preset(&'a str),
}

/// Loads, overrides, resolves and validates a configuration.
pub fn load(source: Source<'_>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut doc: Value = match source {
        Source::File(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
        }
        Source::Preset(name) => {
            serde_json::from_str(preset(name)?.json).expect("shipped presets are valid JSON")
        }
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(doc)
        .map_err(|e| CliError::validation(format!("at `{}`: {}", e.path(), e.inner())))?;
    cfg.model.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Sets the leaf at dotted `path` to `value`, parsed as JSON when possible
/// and as a string otherwise. Numeric segments index arrays.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::validation(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    CliError::validation(format!(
                        "override `{path}`: `{seg}` is not an array index"
                    ))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::validation(format!(
                        "override `{path}`: index {idx} out of range ({len})"
                    ))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::validation(format!(
                    "override `{path}`: `{}` is not an object",
                    segments[..i].join(".")
                )))
            }
        };
    }
    Err(CliError::validation("empty override path"))
}

fn at(field: &str, e: swat_core::Error) -> CliError {
    CliError::validation(format!("at `{field}`: {e}"))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| at("model", e))?;
        self.train.validate().map_err(|e| at("train", e))?;
        if self.model.vocab_size != VOCAB_SIZE {
            return Err(CliError::validation(format!(
                "at `model.vocab_size`: the byte tokenizer needs {VOCAB_SIZE}, got {}",
                self.model.vocab_size
            )));
        }
        self.data
            .batch
            .validate()
            .map_err(|e| at("data.batch", e))?;
        if self.data.batch.train_window != self.model.window {
            return Err(CliError::validation(format!(
                "at `data.batch.train_window`: {} differs from model.window {}",
                self.data.batch.train_window, self.model.window
            )));
        }
        match (&self.data.corpus.is_empty(), &self.data.synthetic) {
            (true, None) => {
                return Err(CliError::validation(
                    "at `data`: set either `corpus` or `synthetic`",
                ))
            }
            (false, Some(_)) => {
                return Err(CliError::validation(
                    "at `data`: `corpus` and `synthetic` are exclusive",
                ))
            }
            _ => {}
        }
        for (i, p) in self.data.corpus.iter().enumerate() {
            if !p.exists() {
                return Err(CliError::validation(format!(
                    "at `data.corpus[{i}]`: path {} does not exist",
                    p.display()
                )));
            }
        }
        if self.eval.windows.is_empty() || self.eval.lengths.is_empty() {
            return Err(CliError::validation(
                "at `eval`: windows and lengths must be non-empty",
            ));
        }
        if self.eval.max_examples == 0 {
            return Err(CliError::validation(
                "at `eval.max_examples`: must be positive",
            ));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            self.regime_batch(r)
                .validate()
                .map_err(|e| at(&format!("regimes[{i}]"), e))?;
        }
        Ok(())
    }

    /// Batch geometry of a regime: the shared token batch with the regime's
    /// window and length.
    pub fn regime_batch(&self, r: &RegimeSpec) -> BatchSpec {
        BatchSpec {
            train_window: r.train_window.unwrap_or(self.model.window),
            train_length: r.train_length,
            ..self.data.batch
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus, CliError> {
        let corpus = match &self.data.synthetic {
            Some(s) if self.data.corpus.is_empty() => {
                Corpus::from_text("synthetic", &synthetic_text(s.bytes, s.seed))
            }
            _ => Corpus::from_paths(&self.data.corpus),
        };
        corpus.map_err(|e| at("data", e))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
