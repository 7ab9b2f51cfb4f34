//! Classification model backends.
//!
//! Everything downstream (metrics, LIME) talks to a model through the
//! [`ClassifierProbe`] trait: a black box from text batches to probability
//! rows over the pinned class order (positive, neutral, negative). Two
//! probes live here: a deterministic lexicon oracle for testing, and the
//! native trainable encoder with its layer-freezing machinery.

pub mod encoder;
pub mod tokenizer;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::segment;

pub use encoder::{group_names, softmax3, EncoderConfig, EncoderTensors};
pub use tokenizer::{Padding, TokenizerSettings};

/// Black-box classifier interface. Each output row is a probability
/// distribution over [`Label::ALL`] summing to 1 within 1e-6, and identical
/// input batches yield identical outputs.
pub trait ClassifierProbe {
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<[f64; 3]>>;
}

/// Argmax under the pinned class order; ties resolve to the lowest index.
pub fn argmax_label(row: &[f64; 3]) -> Label {
    let mut best = 0;
    for i in 1..3 {
        if row[i] > row[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("index in range")
}

/// Deterministic linear oracle: class logits are bias plus scale times the
/// count of lexicon words of each polarity, pushed through a softmax.
/// Analytically tractable, which makes it the reference model for LIME and
/// metrics tests.
pub struct LexiconProbe {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
    bias: [f64; 3],
    scale: f64,
}

impl LexiconProbe {
    pub fn new(
        positive: impl IntoIterator<Item = impl Into<String>>,
        negative: impl IntoIterator<Item = impl Into<String>>,
        bias: [f64; 3],
        scale: f64,
    ) -> Result<LexiconProbe> {
        let positive: BTreeSet<String> =
            positive.into_iter().map(|w| w.into().to_lowercase()).collect();
        let negative: BTreeSet<String> =
            negative.into_iter().map(|w| w.into().to_lowercase()).collect();
        if let Some(shared) = positive.intersection(&negative).next() {
            return Err(Error::Argument(format!(
                "lexicon word sets overlap on {shared:?}"
            )));
        }
        Ok(LexiconProbe { positive, negative, bias, scale })
    }

    fn logits(&self, text: &str) -> [f64; 3] {
        let mut pos = 0usize;
        let mut neg = 0usize;
        for unit in segment::word_units(text, None) {
            if self.positive.contains(&unit.text) {
                pos += 1;
            } else if self.negative.contains(&unit.text) {
                neg += 1;
            }
        }
        [
            self.bias[0] + self.scale * pos as f64,
            self.bias[1],
            self.bias[2] + self.scale * neg as f64,
        ]
    }
}

impl ClassifierProbe for LexiconProbe {
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<[f64; 3]>> {
        Ok(texts.iter().map(|t| softmax3(self.logits(t))).collect())
    }
}

/// Declarative description of which encoder layers stay frozen during
/// fine-tuning. The standard `first8` plan freezes the embeddings and the
/// first 8 of 12 layers, leaving the last 4 plus the head trainable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePlan {
    pub total_layers: usize,
    pub frozen_layer_indices: BTreeSet<usize>,
    pub freeze_embeddings: bool,
    /// Freezing the newly initialized head is only useful for degenerate
    /// sanity checks; defaults stay false.
    #[serde(default)]
    pub freeze_head: bool,
}

impl FreezePlan {
    /// First 8 of `total_layers` frozen, embeddings included.
    pub fn first8(total_layers: usize) -> FreezePlan {
        FreezePlan {
            total_layers,
            frozen_layer_indices: (0..8.min(total_layers)).collect(),
            freeze_embeddings: true,
            freeze_head: false,
        }
    }

    /// Nothing frozen (the "Unfrozen" comparison rows).
    pub fn none(total_layers: usize) -> FreezePlan {
        FreezePlan {
            total_layers,
            frozen_layer_indices: BTreeSet::new(),
            freeze_embeddings: false,
            freeze_head: false,
        }
    }

    /// Everything frozen, head included.
    pub fn full(total_layers: usize) -> FreezePlan {
        FreezePlan {
            total_layers,
            frozen_layer_indices: (0..total_layers).collect(),
            freeze_embeddings: true,
            freeze_head: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&bad) = self.frozen_layer_indices.iter().find(|&&i| i >= self.total_layers) {
            return Err(Error::Argument(format!(
                "frozen layer index {bad} out of range for {} layers",
                self.total_layers
            )));
        }
        Ok(())
    }

    /// Parse a CLI freeze spec: `first8`, `none`, or
    /// `custom:<idx>,<idx>,...[,emb][,head]`.
    pub fn parse(spec: &str, total_layers: usize) -> Result<FreezePlan> {
        match spec {
            "first8" => Ok(FreezePlan::first8(total_layers)),
            "none" => Ok(FreezePlan::none(total_layers)),
            custom => {
                let body = custom.strip_prefix("custom:").ok_or_else(|| {
                    Error::Argument(format!(
                        "unknown freeze spec {spec:?}; expected first8|none|custom:<spec>"
                    ))
                })?;
                let mut plan = FreezePlan::none(total_layers);
                for part in body.split(',').filter(|p| !p.is_empty()) {
                    match part {
                        "emb" => plan.freeze_embeddings = true,
                        "head" => plan.freeze_head = true,
                        idx => {
                            let i: usize = idx.parse().map_err(|_| {
                                Error::Argument(format!("bad freeze layer index {idx:?}"))
                            })?;
                            plan.frozen_layer_indices.insert(i);
                        }
                    }
                }
                plan.validate()?;
                Ok(plan)
            }
        }
    }

    fn frozen_groups(&self) -> BTreeSet<String> {
        let mut groups = BTreeSet::new();
        if self.freeze_embeddings {
            groups.insert("embeddings".to_string());
        }
        for &i in &self.frozen_layer_indices {
            groups.insert(format!("layer.{i}"));
        }
        if self.freeze_head {
            groups.insert("head".to_string());
        }
        groups
    }
}

/// Exact parameter counts after applying a freeze plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeSummary {
    pub frozen_param_count: usize,
    pub trainable_param_count: usize,
}

/// A classifier backed by the native encoder: architecture, weights, the
/// tokenizer contract, and the set of currently frozen parameter groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainableModel {
    pub backend_id: String,
    pub config: EncoderConfig,
    pub tokenizer: TokenizerSettings,
    pub tensors: EncoderTensors,
    #[serde(default)]
    pub frozen_groups: BTreeSet<String>,
    #[serde(default)]
    pub plan: Option<FreezePlan>,
}

impl TrainableModel {
    pub fn group_names(&self) -> Vec<String> {
        group_names(self.config.num_layers)
    }

    pub fn is_trainable(&self, group: &str) -> bool {
        !self.frozen_groups.contains(group)
    }

    pub fn trainable_param_count(&self) -> usize {
        self.group_names()
            .iter()
            .filter(|g| self.is_trainable(g))
            .map(|g| self.tensors.group_param_count(g))
            .sum()
    }
}

/// Known encoder architectures, keyed by their public identifiers. The three
/// full-size backends resolve to their real 12-layer shapes; `tiny-12` is the
/// desk-scale substitute, and `tiny:<layers>x<hidden>` builds ad-hoc toys.
pub fn backend_arch(backend_id: &str) -> Option<EncoderConfig> {
    match backend_id {
        "bert-base-multilingual-cased" => Some(EncoderConfig {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            ff_dim: 3072,
            vocab_size: 119_547,
            max_position: 512,
            num_labels: 3,
        }),
        "roberta-base" => Some(EncoderConfig {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            ff_dim: 3072,
            vocab_size: 50_265,
            max_position: 512,
            num_labels: 3,
        }),
        "xlm-roberta-base" => Some(EncoderConfig {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            ff_dim: 3072,
            vocab_size: 250_002,
            max_position: 512,
            num_labels: 3,
        }),
        "tiny-12" => Some(EncoderConfig {
            num_layers: 12,
            hidden_dim: 16,
            num_heads: 2,
            ff_dim: 32,
            vocab_size: 2048,
            max_position: 128,
            num_labels: 3,
        }),
        custom => {
            let body = custom.strip_prefix("tiny:")?;
            let (layers, hidden) = body.split_once('x')?;
            let num_layers: usize = layers.parse().ok()?;
            let hidden_dim: usize = hidden.parse().ok()?;
            if num_layers == 0 || hidden_dim == 0 || hidden_dim % 2 != 0 {
                return None;
            }
            Some(EncoderConfig {
                num_layers,
                hidden_dim,
                num_heads: 2,
                ff_dim: hidden_dim * 2,
                vocab_size: 512,
                max_position: 64,
                num_labels: 3,
            })
        }
    }
}

fn is_pretrained_only(backend_id: &str) -> bool {
    matches!(
        backend_id,
        "bert-base-multilingual-cased" | "roberta-base" | "xlm-roberta-base"
    )
}

/// Directory for cached model weights, overridable via `EXPLICAR_CACHE_DIR`.
pub fn cache_dir() -> std::path::PathBuf {
    if let Ok(dir) = std::env::var("EXPLICAR_CACHE_DIR") {
        return std::path::PathBuf::from(dir);
    }
    let home = std::env::var("HOME").unwrap_or_else(|_| ".".into());
    Path::new(&home).join(".cache").join("explicar")
}

/// Resolve a backend id into a model with per-group parameters and a 3-way
/// head.
///
/// Resolution order: a filesystem path to a saved checkpoint directory, a
/// cached copy of a known id, then fresh deterministic initialization for
/// the tiny architectures. The three full-size backends require weights in
/// the cache; this tool never downloads them.
pub fn load_encoder_backend(backend_id: &str, num_labels: usize) -> Result<TrainableModel> {
    if num_labels != 3 {
        return Err(Error::Argument(format!(
            "this artifact is a 3-way classifier; got num_labels {num_labels}"
        )));
    }
    let as_path = Path::new(backend_id);
    if as_path.join("model.json").is_file() {
        return load_model_dir(as_path);
    }
    let arch = backend_arch(backend_id).ok_or_else(|| {
        Error::Load(format!("unresolvable backend id {backend_id:?}"))
    })?;
    debug_assert_eq!(arch.num_labels, 3);
    if is_pretrained_only(backend_id) {
        assert_eq!(arch.num_layers, 12);
        let cached = cache_dir().join(backend_id);
        if cached.join("model.json").is_file() {
            return load_model_dir(&cached);
        }
        return Err(Error::Load(format!(
            "no cached weights for {backend_id:?} under {}; place a saved model there \
             (this artifact does not download weights)",
            cached.display()
        )));
    }
    // tiny architectures initialize deterministically from their id
    let seed = tokenizer::fnv1a64(backend_id.as_bytes());
    let max_length = arch.max_position.min(128);
    Ok(TrainableModel {
        backend_id: backend_id.to_string(),
        config: arch,
        tokenizer: TokenizerSettings::new(max_length)?,
        tensors: EncoderTensors::init(&arch, seed)?,
        frozen_groups: BTreeSet::new(),
        plan: None,
    })
}

/// Mark the plan's groups as frozen. Idempotent; returns exact parameter
/// counts. Frozen + trainable always equals the total parameter count.
pub fn apply_freeze_plan(model: &mut TrainableModel, plan: &FreezePlan) -> Result<FreezeSummary> {
    plan.validate()?;
    if plan.total_layers != model.config.num_layers {
        return Err(Error::Argument(format!(
            "freeze plan depth {} does not match model depth {}",
            plan.total_layers, model.config.num_layers
        )));
    }
    model.frozen_groups = plan.frozen_groups();
    model.plan = Some(plan.clone());
    let frozen: usize = model
        .frozen_groups
        .iter()
        .map(|g| model.tensors.group_param_count(g))
        .sum();
    let total = model.tensors.total_param_count();
    Ok(FreezeSummary { frozen_param_count: frozen, trainable_param_count: total - frozen })
}

/// Inference probe over a trained (or initialized) model.
pub struct EncoderProbe<'a> {
    model: &'a TrainableModel,
    settings: TokenizerSettings,
    chunk: usize,
}

/// Wrap tokenize → forward → softmax as a [`ClassifierProbe`].
pub fn probe_from_model<'a>(
    model: &'a TrainableModel,
    settings: TokenizerSettings,
) -> Result<EncoderProbe<'a>> {
    if settings.max_length > model.config.max_position {
        return Err(Error::Capability(format!(
            "tokenizer max_length {} exceeds model max_position {}",
            settings.max_length, model.config.max_position
        )));
    }
    Ok(EncoderProbe { model, settings, chunk: 64 })
}

impl ClassifierProbe for EncoderProbe<'_> {
    fn predict_proba(&self, texts: &[&str]) -> Result<Vec<[f64; 3]>> {
        let mut rows = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.chunk.max(1)) {
            for text in chunk {
                let encoded =
                    tokenizer::encode(text, self.model.config.vocab_size, &self.settings);
                let tape = encoder::forward_example(&self.model.tensors, &self.model.config, &encoded);
                rows.push(tape.probs);
            }
        }
        Ok(rows)
    }
}

const MODEL_FILE: &str = "model.json";
const FREEZE_FILE: &str = "freeze_plan.json";

#[derive(Serialize, Deserialize)]
struct FreezeSidecar {
    plan: FreezePlan,
    frozen_param_count: usize,
    trainable_param_count: usize,
}

/// Save a model into `dir` as the native checkpoint layout: `model.json`
/// plus a `freeze_plan.json` sidecar when a plan has been applied.
pub fn save_model_dir(model: &TrainableModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let model_path = dir.join(MODEL_FILE);
    let json = serde_json::to_string(model)
        .map_err(|e| Error::Checkpoint(format!("serialize model: {e}")))?;
    fs::write(&model_path, json).map_err(|e| Error::io(&model_path, e))?;
    if let Some(plan) = &model.plan {
        let frozen: usize = model
            .frozen_groups
            .iter()
            .map(|g| model.tensors.group_param_count(g))
            .sum();
        let sidecar = FreezeSidecar {
            plan: plan.clone(),
            frozen_param_count: frozen,
            trainable_param_count: model.tensors.total_param_count() - frozen,
        };
        let path = dir.join(FREEZE_FILE);
        fs::write(&path, serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Load a model from the native checkpoint layout, restoring the freeze
/// plan from its sidecar when present.
pub fn load_model_dir(dir: &Path) -> Result<TrainableModel> {
    let model_path = dir.join(MODEL_FILE);
    let content = fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let mut model: TrainableModel = serde_json::from_str(&content)
        .map_err(|e| Error::Checkpoint(format!("corrupt {}: {e}", model_path.display())))?;
    model.config.validate()?;
    let freeze_path = dir.join(FREEZE_FILE);
    if freeze_path.is_file() {
        let sidecar = fs::read_to_string(&freeze_path).map_err(|e| Error::io(&freeze_path, e))?;
        let sidecar: FreezeSidecar = serde_json::from_str(&sidecar)
            .map_err(|e| Error::Checkpoint(format!("corrupt {}: {e}", freeze_path.display())))?;
        apply_freeze_plan(&mut model, &sidecar.plan)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_probe_matches_hand_computed_softmax() {
        let probe =
            LexiconProbe::new(["good"], ["awful"], [0.0; 3], 1.0).unwrap();
        let rows = probe.predict_proba(&["good good"]).unwrap();
        // softmax(2, 0, 0) computed independently
        assert!((rows[0][0] - 0.7869860421615985).abs() < 1e-12);
        assert!((rows[0][1] - 0.10650697891920075).abs() < 1e-12);
        assert!((rows[0][2] - 0.10650697891920075).abs() < 1e-12);
    }

    #[test]
    fn lexicon_probe_uniform_without_matches() {
        let probe = LexiconProbe::new(["good"], ["awful"], [0.0; 3], 1.0).unwrap();
        let rows = probe.predict_proba(&["nothing matches here"]).unwrap();
        for p in rows[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lexicon_probe_negative_word_wins() {
        let probe = LexiconProbe::new(["good"], ["awful"], [0.0; 3], 1.0).unwrap();
        let rows = probe.predict_proba(&["awful"]).unwrap();
        assert_eq!(argmax_label(&rows[0]), Label::Negative);
    }

    #[test]
    fn overlapping_lexicons_rejected() {
        assert!(LexiconProbe::new(["fine"], ["fine"], [0.0; 3], 1.0).is_err());
    }

    #[test]
    fn probe_rows_sum_to_one() {
        let probe = LexiconProbe::new(["up"], ["down"], [0.3, -0.2, 0.1], 2.5).unwrap();
        let rows = probe
            .predict_proba(&["up down up", "", "down down", "不良品"])
            .unwrap();
        for row in rows {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn argmax_tie_breaks_to_lowest_index() {
        assert_eq!(argmax_label(&[0.4, 0.4, 0.2]), Label::Positive);
        assert_eq!(argmax_label(&[0.2, 0.4, 0.4]), Label::Neutral);
    }

    #[test]
    fn full_size_backends_are_twelve_layers() {
        for id in ["bert-base-multilingual-cased", "roberta-base", "xlm-roberta-base"] {
            let arch = backend_arch(id).unwrap();
            assert_eq!(arch.num_layers, 12, "{id}");
            assert_eq!(arch.num_labels, 3);
        }
    }

    #[test]
    fn full_size_backend_without_cached_weights_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var("EXPLICAR_CACHE_DIR", dir.path());
        let err = load_encoder_backend("xlm-roberta-base", 3).unwrap_err();
        std::env::remove_var("EXPLICAR_CACHE_DIR");
        assert!(matches!(err, Error::Load(_)), "{err:?}");
    }

    #[test]
    fn unresolvable_id_is_a_load_error() {
        assert!(matches!(load_encoder_backend("no-such-model", 3), Err(Error::Load(_))));
    }

    #[test]
    fn wrong_label_count_rejected() {
        assert!(load_encoder_backend("tiny-12", 2).is_err());
    }

    #[test]
    fn tiny_backend_loads_with_named_groups() {
        let model = load_encoder_backend("tiny:2x8", 3).unwrap();
        assert_eq!(model.config.num_layers, 2);
        let names = model.group_names();
        assert_eq!(names, vec!["embeddings", "layer.0", "layer.1", "head"]);
        assert!(model.group_names().iter().all(|g| model.is_trainable(g)));
    }

    #[test]
    fn tiny_backend_init_is_deterministic() {
        let a = load_encoder_backend("tiny:2x8", 3).unwrap();
        let b = load_encoder_backend("tiny:2x8", 3).unwrap();
        for name in a.group_names() {
            assert!(a.tensors.group_bits_equal(&b.tensors, &name));
        }
    }

    #[test]
    fn freeze_plan_counts_are_exact_and_idempotent() {
        let mut model = load_encoder_backend("tiny:4x8", 3).unwrap();
        let total = model.tensors.total_param_count();

        let none = apply_freeze_plan(&mut model, &FreezePlan::none(4)).unwrap();
        assert_eq!(none.trainable_param_count, total);
        assert_eq!(none.frozen_param_count, 0);

        let plan = FreezePlan {
            total_layers: 4,
            frozen_layer_indices: (0..2).collect(),
            freeze_embeddings: true,
            freeze_head: false,
        };
        let first = apply_freeze_plan(&mut model, &plan).unwrap();
        let second = apply_freeze_plan(&mut model, &plan).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.frozen_param_count + first.trainable_param_count, total);
        let expected_frozen = model.tensors.group_param_count("embeddings")
            + model.tensors.group_param_count("layer.0")
            + model.tensors.group_param_count("layer.1");
        assert_eq!(first.frozen_param_count, expected_frozen);
        assert!(!model.is_trainable("layer.0"));
        assert!(model.is_trainable("layer.2"));
        assert!(model.is_trainable("head"));

        let full = apply_freeze_plan(&mut model, &FreezePlan::full(4)).unwrap();
        assert_eq!(full.trainable_param_count, 0);
    }

    #[test]
    fn first8_plan_freezes_first_eight_of_twelve() {
        let plan = FreezePlan::first8(12);
        assert_eq!(plan.frozen_layer_indices, (0..8).collect());
        assert!(plan.freeze_embeddings);
        assert!(!plan.freeze_head);
        let mut model = load_encoder_backend("tiny-12", 3).unwrap();
        apply_freeze_plan(&mut model, &plan).unwrap();
        for i in 0..8 {
            assert!(!model.is_trainable(&format!("layer.{i}")));
        }
        for i in 8..12 {
            assert!(model.is_trainable(&format!("layer.{i}")));
        }
        assert!(!model.is_trainable("embeddings"));
        assert!(model.is_trainable("head"));
    }

    #[test]
    fn depth_mismatch_rejected() {
        let mut model = load_encoder_backend("tiny:2x8", 3).unwrap();
        assert!(apply_freeze_plan(&mut model, &FreezePlan::first8(12)).is_err());
    }

    #[test]
    fn freeze_spec_parsing() {
        assert_eq!(FreezePlan::parse("first8", 12).unwrap(), FreezePlan::first8(12));
        assert_eq!(FreezePlan::parse("none", 12).unwrap(), FreezePlan::none(12));
        let custom = FreezePlan::parse("custom:0,1,emb", 12).unwrap();
        assert_eq!(custom.frozen_layer_indices, (0..2).collect());
        assert!(custom.freeze_embeddings);
        assert!(FreezePlan::parse("custom:99", 12).is_err());
        assert!(FreezePlan::parse("nothing", 12).is_err());
    }

    #[test]
    fn encoder_probe_rows_are_distributions() {
        let model = load_encoder_backend("tiny:2x8", 3).unwrap();
        let probe = probe_from_model(&model, TokenizerSettings::new(16).unwrap()).unwrap();
        let rows = probe
            .predict_proba(&["short text", "", "不良品です", "a much longer piece of text here"])
            .unwrap();
        assert_eq!(rows.len(), 4);
        for row in rows {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn probe_settings_exceeding_model_positions_rejected() {
        let model = load_encoder_backend("tiny:2x8", 3).unwrap();
        let settings = TokenizerSettings::new(model.config.max_position + 1).unwrap();
        assert!(matches!(probe_from_model(&model, settings), Err(Error::Capability(_))));
    }

    mod properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            /// Probability rows sum to 1 within 1e-6 for arbitrary batches,
            /// for both probe implementations.
            #[test]
            fn probe_rows_sum_to_one(texts in prop::collection::vec("\\PC{0,40}", 1..6)) {
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                let lexicon =
                    LexiconProbe::new(["good"], ["awful"], [0.2, -0.1, 0.3], 1.7).unwrap();
                for row in lexicon.predict_proba(&refs).unwrap() {
                    let sum: f64 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-6);
                    prop_assert!(row.iter().all(|&p| p >= 0.0));
                }
                let model = load_encoder_backend("tiny:2x8", 3).unwrap();
                let probe = probe_from_model(&model, TokenizerSettings::new(8).unwrap()).unwrap();
                for row in probe.predict_proba(&refs).unwrap() {
                    let sum: f64 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn save_load_round_trip_preserves_weights_and_plan() {
        let mut model = load_encoder_backend("tiny:2x8", 3).unwrap();
        apply_freeze_plan(&mut model, &FreezePlan::parse("custom:0,emb", 2).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model_dir(&model, dir.path()).unwrap();
        assert!(dir.path().join("freeze_plan.json").is_file());
        let back = load_model_dir(dir.path()).unwrap();
        assert_eq!(back.frozen_groups, model.frozen_groups);
        for name in model.group_names() {
            assert!(model.tensors.group_bits_equal(&back.tensors, &name), "group {name}");
        }
        // loading by path through the backend resolver works too
        let via_id = load_encoder_backend(dir.path().to_str().unwrap(), 3).unwrap();
        assert_eq!(via_id.backend_id, model.backend_id);
    }
}
