use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{training_items, Item, SequenceContext};
use super::{io_err, loss_and_grads, Model, PipelineError, Result, Split, TrainConfig};
use crate::flow::tensor_points;
use crate::metrics::{total_loss_with_grad, MetricError};
use crate::nn::{cosine_lr, AdamConfig, Graph, NnError};
use crate::synth::{derive_seed, Sequence};

const LOSS_DRAWS: u64 = 0x6472617773;

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen, initialization
    /// included.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub init_val_loss: f64,
    pub best_val_loss: f64,
    /// `None` when no epoch improved on initialization.
    pub best_epoch: Option<usize>,
    pub steps: usize,
}

struct Data<'a> {
    seqs: &'a [Sequence],
    ctx: Vec<Option<SequenceContext>>,
    cfg: &'a TrainConfig,
}

impl Data<'_> {
    fn ctx(&self, item: Item) -> &SequenceContext {
        self.ctx[item.sequence].as_ref().expect("context built for every split sequence")
    }

    fn non_finite(&self, what: impl Into<String>, step: usize, item: Item) -> PipelineError {
        let seq = &self.seqs[item.sequence];
        PipelineError::NonFinite { what: what.into(), step, object: seq.object.clone(), frame: seq.frames[item.frame].index }
    }

    fn item_loss(&self, model: &Model, item: Item) -> Result<f64> {
        let seq = &self.seqs[item.sequence];
        let s = self.ctx(item).sample(seq, item.frame, self.cfg, None)?;
        let mut g = Graph::new();
        let (y, _) = model.deform_graph(&mut g, &model.store, s.template.vertices(), &s.history)?;
        let pred = tensor_points(g.value(y));
        Ok(total_loss_with_grad(&pred, s.template.faces(), &s.provenance, &s.gt, &s.gt_samples, &s.contact)?.total)
    }

    fn val_loss(&self, model: &Model, items: &[Item], step: usize) -> Result<f64> {
        let mut sum = 0.0;
        for &it in items {
            let l = match self.item_loss(model, it) {
                Err(PipelineError::Metric(MetricError::NonFinite { .. })) => f64::NAN,
                r => r?,
            };
            if !l.is_finite() {
                return Err(self.non_finite("validation loss", step, it));
            }
            sum += l;
        }
        Ok(sum / items.len() as f64)
    }
}

/// Evenly spaced subset of at most `n` items.
fn thin(items: Vec<Item>, n: Option<usize>) -> Vec<Item> {
    match n {
        Some(n) if n < items.len() => (0..n).map(|k| items[k * items.len() / n]).collect(),
        _ => items,
    }
}

/// Trains a fresh model on `split.train`, scoring `split.validation` after
/// every epoch. With `out`, writes the config echo, the JSON-lines log and
/// the best checkpoint there.
pub fn train(cfg: &TrainConfig, seqs: &[Sequence], split: &Split, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut ctx = vec![None; seqs.len()];
    for &i in split.train.iter().chain(&split.validation) {
        let seq = seqs.get(i).ok_or_else(|| PipelineError::Data(format!("split references sequence {i}")))?;
        ctx[i] = Some(SequenceContext::new(seq, cfg.loss_samples)?);
    }
    let data = Data { seqs, ctx, cfg };
    let train_items = training_items(seqs, &split.train, cfg.contact_threshold);
    let val_items = thin(training_items(seqs, &split.validation, cfg.contact_threshold), cfg.val_frames);
    if train_items.is_empty() || val_items.is_empty() {
        return Err(PipelineError::Data("no curated training or validation frames".into()));
    }
    info!("training {} on {} items, validating on {}", cfg.model.modality, train_items.len(), val_items.len());

    let mut model = Model::new(cfg.model, cfg.seed)?;
    let init_val_loss = data.val_loss(&model, &val_items, 0)?;
    let mut best = model.clone();
    let mut best_val_loss = init_val_loss;
    let mut best_epoch = None;

    let mut log_file = None;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let echo = dir.join("train_config.json");
        let text = serde_json::to_string_pretty(cfg).expect("config serializes");
        std::fs::write(&echo, text).map_err(io_err(&echo))?;
        let path = dir.join(TRAIN_LOG);
        log_file = Some((BufWriter::new(File::create(&path).map_err(io_err(&path))?), path));
        save_best(dir, &best, cfg, split, None, best_val_loss, init_val_loss)?;
    }

    let mut adam = AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() };
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        adam.lr = cosine_lr(epoch, cfg.epochs - 1, cfg.lr, cfg.lr_min)?;
        let mut order = train_items.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64)));
        order.truncate(cfg.frames_per_epoch.unwrap_or(usize::MAX));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut grads = model.store.zero_grads();
            for (k, &it) in batch.iter().enumerate() {
                let ctx = data.ctx(it);
                let draws = ctx.draw(cfg.loss_samples, derive_seed(derive_seed(cfg.seed ^ LOSS_DRAWS, step as u64), k as u64))?;
                let s = ctx.sample(&seqs[it.sequence], it.frame, cfg, Some(draws))?;
                let (rep, g, _) = match loss_and_grads(&model, &model.store, &s) {
                    Err(PipelineError::Metric(MetricError::NonFinite { what, .. })) => return Err(data.non_finite(what, step, it)),
                    r => r?,
                };
                if !rep.total.is_finite() {
                    return Err(data.non_finite("training loss", step, it));
                }
                epoch_loss += rep.total;
                grads.add_all(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            match model.store.adam_step(&grads, &adam) {
                Err(NnError::NonFinite(what)) => return Err(data.non_finite(what, step, batch[0])),
                r => r?,
            }
            step += 1;
        }
        let train_loss = epoch_loss / order.len() as f64;
        let val_loss = data.val_loss(&model, &val_items, step)?;
        let entry = EpochLog { epoch, lr: adam.lr, train_loss, val_loss };
        info!("epoch {epoch}: lr {:.3e} train {train_loss:.6e} val {val_loss:.6e}", adam.lr);
        if let Some((w, path)) = log_file.as_mut() {
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(io_err(path))?;
        }
        log.push(entry);
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = Some(epoch);
            best = model.clone();
            if let Some(dir) = out {
                save_best(dir, &best, cfg, split, best_epoch, best_val_loss, init_val_loss)?;
            }
        }
    }
    Ok(TrainOutcome { model: best, log, init_val_loss, best_val_loss, best_epoch, steps: step })
}

fn save_best(dir: &Path, model: &Model, cfg: &TrainConfig, split: &Split, epoch: Option<usize>, val: f64, init: f64) -> Result<()> {
    let meta = serde_json::json!({
        "train": cfg,
        "seed": cfg.seed,
        "split": split,
        "epoch": epoch,
        "val_loss": val,
        "init_val_loss": init,
    });
    model.save(&dir.join(BEST_CHECKPOINT), meta)
}
