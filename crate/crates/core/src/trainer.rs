//! Fine-tuning loop: schedule derivation, AdamW with linear warmup/decay,
//! per-epoch evaluation and checkpointing, seeded reproducibility.
//!
//! The optimizer touches only trainable parameter groups; frozen groups stay
//! bit-identical across any number of steps. Training always runs in full
//! f64 precision; the mixed-precision flag is recorded for configuration
//! fidelity but has no numeric effect on this CPU backend.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::backend::encoder::{forward_backward_batch, EncoderTensors};
use crate::backend::tokenizer::{encode, Encoded};
use crate::backend::{
    apply_freeze_plan, probe_from_model, save_model_dir, FreezePlan, TrainableModel,
};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const WEIGHT_DECAY: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStrategy {
    Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaveStrategy {
    Epoch,
}

/// Training hyperparameters. The defaults are the full-scale recipe that
/// the `paper` profile resolves to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub train_batch_size: usize,
    pub eval_batch_size: usize,
    pub grad_accumulation_steps: usize,
    pub epochs: usize,
    pub warmup_ratio: f64,
    pub mixed_precision: bool,
    pub seed: u64,
    pub eval_strategy: EvalStrategy,
    pub save_strategy: SaveStrategy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            train_batch_size: 512,
            eval_batch_size: 512,
            grad_accumulation_steps: 2,
            epochs: 5,
            warmup_ratio: 0.01,
            mixed_precision: true,
            seed: 42,
            eval_strategy: EvalStrategy::Epoch,
            save_strategy: SaveStrategy::Epoch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_batch_size == 0
            || self.eval_batch_size == 0
            || self.grad_accumulation_steps == 0
            || self.epochs == 0
        {
            return Err(Error::Argument("train config counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::Argument(format!(
                "warmup_ratio must be in [0, 1), got {}",
                self.warmup_ratio
            )));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Argument("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// Derived step counts for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub steps_per_epoch: usize,
    pub total_optimizer_steps: usize,
    pub warmup_steps: usize,
    pub effective_batch_size: usize,
}

/// Compute the schedule from a config and the training-set size.
pub fn derive_schedule(config: &TrainConfig, train_set_size: usize) -> Result<TrainSchedule> {
    config.validate()?;
    if train_set_size == 0 {
        return Err(Error::Argument("training set is empty".into()));
    }
    let effective_batch_size = config.train_batch_size * config.grad_accumulation_steps;
    let steps_per_epoch = train_set_size.div_ceil(effective_batch_size);
    let total_optimizer_steps = steps_per_epoch * config.epochs;
    let warmup_steps = (config.warmup_ratio * total_optimizer_steps as f64).ceil() as usize;
    Ok(TrainSchedule { steps_per_epoch, total_optimizer_steps, warmup_steps, effective_batch_size })
}

/// Linear warmup to the peak rate, then linear decay toward zero. The
/// factor for the first step is nonzero so a one-step run still moves.
pub fn lr_factor(schedule: &TrainSchedule, completed_steps: usize) -> f64 {
    let total = schedule.total_optimizer_steps;
    let warmup = schedule.warmup_steps;
    if completed_steps >= total {
        return 0.0;
    }
    if warmup > 0 && completed_steps < warmup {
        return (completed_steps + 1) as f64 / warmup as f64;
    }
    (total - completed_steps) as f64 / (total - warmup).max(1) as f64
}

struct AdamState {
    m: EncoderTensors,
    v: EncoderTensors,
    t: u32,
}

impl AdamState {
    fn new(template: &EncoderTensors) -> AdamState {
        AdamState { m: template.zeros_like(), v: template.zeros_like(), t: 0 }
    }

    fn step(
        &mut self,
        tensors: &mut EncoderTensors,
        grads: &EncoderTensors,
        trainable_groups: &[String],
        lr: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for name in trainable_groups {
            let params = tensors.group_mut(name).expect("known group");
            let gs = grads.group(name).expect("known group");
            let ms = self.m.group_mut(name).expect("known group");
            let vs = self.v.group_mut(name).expect("known group");
            for (((p, g), m), v) in params.into_iter().zip(gs).zip(ms).zip(vs) {
                let p = p.as_slice_mut().expect("standard layout");
                let g = g.as_slice().expect("standard layout");
                let m = m.as_slice_mut().expect("standard layout");
                let v = v.as_slice_mut().expect("standard layout");
                for i in 0..p.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + WEIGHT_DECAY * p[i]);
                }
            }
        }
    }
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval: Option<EvalReport>,
    pub checkpoint_path: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line, one line per epoch.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

const TRAIN_STATE_FILE: &str = "train_state.json";

#[derive(Serialize, Deserialize)]
struct TrainState {
    config: TrainConfig,
    completed_epochs: usize,
}

/// Fine-tune a model under a freeze plan. Writes one checkpoint directory
/// per epoch under `out_dir` plus `history.jsonl`, and returns the trained
/// model with its history.
pub fn train(
    mut model: TrainableModel,
    plan: &FreezePlan,
    train_set: &Corpus,
    val_set: &Corpus,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<(TrainableModel, TrainHistory)> {
    apply_freeze_plan(&mut model, plan)?;
    run_epochs(model, train_set, val_set, config, out_dir, 0)
}

/// Load a checkpoint directory: the model (freeze plan restored from its
/// sidecar), the run config, and how many epochs completed.
pub fn resume(checkpoint_dir: &Path) -> Result<(TrainableModel, TrainConfig, usize)> {
    let model = crate::backend::load_model_dir(checkpoint_dir)?;
    let state_path = checkpoint_dir.join(TRAIN_STATE_FILE);
    let raw = fs::read_to_string(&state_path).map_err(|e| {
        Error::Checkpoint(format!("missing sidecar {}: {e}", state_path.display()))
    })?;
    let state: TrainState = serde_json::from_str(&raw)
        .map_err(|e| Error::Checkpoint(format!("corrupt {}: {e}", state_path.display())))?;
    Ok((model, state.config, state.completed_epochs))
}

/// Continue a checkpointed run until it reaches its configured epoch count.
pub fn resume_training(
    checkpoint_dir: &Path,
    train_set: &Corpus,
    val_set: &Corpus,
    out_dir: &Path,
) -> Result<(TrainableModel, TrainHistory)> {
    let (model, config, completed) = resume(checkpoint_dir)?;
    if completed >= config.epochs {
        return Ok((model, TrainHistory::default()));
    }
    run_epochs(model, train_set, val_set, &config, out_dir, completed)
}

fn run_epochs(
    mut model: TrainableModel,
    train_set: &Corpus,
    val_set: &Corpus,
    config: &TrainConfig,
    out_dir: &Path,
    start_epoch: usize,
) -> Result<(TrainableModel, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let schedule = derive_schedule(config, train_set.len())?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let encoded: Vec<(Encoded, usize)> = train_set
        .iter()
        .map(|ex| {
            (encode(&ex.text, model.config.vocab_size, &model.tokenizer), ex.label.index())
        })
        .collect();
    let trainable_groups: Vec<String> =
        model.group_names().into_iter().filter(|g| model.is_trainable(g)).collect();

    let mut opt = AdamState::new(&model.tensors);
    let mut history = TrainHistory::default();
    let mut global_step = start_epoch * schedule.steps_per_epoch;

    for epoch in start_epoch + 1..=config.epochs {
        let started = Instant::now();
        // shuffle order is a pure function of (seed, epoch)
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for step_chunk in order.chunks(schedule.effective_batch_size) {
            let micros: Vec<&[usize]> = step_chunk.chunks(config.train_batch_size).collect();
            let accumulation = micros.len() as f64;
            let mut grads = model.tensors.zeros_like();
            let mut step_loss = 0.0;
            for micro in micros {
                let batch: Vec<(Encoded, usize)> =
                    micro.iter().map(|&i| encoded[i].clone()).collect();
                step_loss += forward_backward_batch(
                    &model.tensors,
                    &model.config,
                    &batch,
                    &mut grads,
                    1.0 / accumulation,
                );
            }
            let lr = config.learning_rate * lr_factor(&schedule, global_step);
            opt.step(&mut model.tensors, &grads, &trainable_groups, lr);
            global_step += 1;
            loss_sum += step_loss / accumulation;
            loss_count += 1;
        }

        let eval = if val_set.is_empty() {
            None
        } else {
            let probe = probe_from_model(&model, model.tokenizer)?;
            Some(metrics::evaluate(&probe, val_set)?)
        };

        let checkpoint_dir = out_dir.join(format!("checkpoint-{epoch}"));
        save_model_dir(&model, &checkpoint_dir)?;
        let state = TrainState { config: config.clone(), completed_epochs: epoch };
        let state_path = checkpoint_dir.join(TRAIN_STATE_FILE);
        fs::write(&state_path, serde_json::to_string_pretty(&state).expect("state serializes"))
            .map_err(|e| Error::io(&state_path, e))?;

        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / loss_count.max(1) as f64,
            eval,
            checkpoint_path: checkpoint_dir.display().to_string(),
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    history.save_jsonl(&out_dir.join("history.jsonl"))?;
    Ok((model, history))
}
