//! Pairwise hinge-ranking training, cross-space transfer and checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::benchmark::TabularBenchmark;
use crate::cellgraph::CellArch;
use crate::encodings::{SupplementalTable, UnifiedVocab};
use crate::error::{Error, Result};
use crate::metrics::RankReport;
use crate::predictor::{parse_scalar, PredictorConfig, PredictorModel};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub transfer_epochs: usize,
    pub transfer_lr: f64,
    pub hinge_margin: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 0.00001,
            epochs: 150,
            batch_size: 8,
            transfer_epochs: 30,
            transfer_lr: 0.001,
            hinge_margin: 0.1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.transfer_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.hinge_margin >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config("hinge_margin and weight_decay must be nonnegative".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }

    /// Assigns one field from its textual form; `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lr" => self.lr = parse_scalar(key, value)?,
            "weight_decay" => self.weight_decay = parse_scalar(key, value)?,
            "epochs" => self.epochs = parse_scalar(key, value)?,
            "batch_size" => self.batch_size = parse_scalar(key, value)?,
            "transfer_epochs" => self.transfer_epochs = parse_scalar(key, value)?,
            "transfer_lr" => self.transfer_lr = parse_scalar(key, value)?,
            "hinge_margin" => self.hinge_margin = parse_scalar(key, value)?,
            "seed" => self.seed = parse_scalar(key, value)?,
            "beta1" => self.beta1 = parse_scalar(key, value)?,
            "beta2" => self.beta2 = parse_scalar(key, value)?,
            "adam_eps" => self.adam_eps = parse_scalar(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Ordered pairs `(i, j)` with `acc[i] > acc[j]`.
pub fn ranked_pairs(accuracies: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..accuracies.len() {
        for j in 0..accuracies.len() {
            if accuracies[i] > accuracies[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Mean of `max(0, margin - (s_i - s_j))` over pairs with `acc_i > acc_j`.
/// Zero when every accuracy ties.
pub fn hinge_rank_loss(scores: &[f64], accuracies: &[f64], margin: f64) -> Result<f64> {
    if scores.len() != accuracies.len() {
        return Err(Error::shape("hinge_rank_loss", format!("{} scores, {} accuracies", scores.len(), accuracies.len())));
    }
    if scores.len() < 2 {
        return Err(Error::invalid("hinge_rank_loss needs at least two samples"));
    }
    let pairs = ranked_pairs(accuracies);
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pairs.iter().map(|&(i, j)| (margin - (scores[i] - scores[j])).max(0.0)).sum();
    Ok(total / pairs.len() as f64)
}

/// Tape version of [`hinge_rank_loss`] over a `b x 1` score column. Returns
/// `None` when no pair is ranked.
pub fn hinge_rank_loss_tape(tape: &mut Tape, scores: Var, accuracies: &[f64], margin: f64) -> Result<Option<Var>> {
    let b = accuracies.len();
    if tape.value(scores).dims2()? != (b, 1) {
        return Err(Error::shape("hinge_rank_loss", format!("scores {:?} for {b} accuracies", tape.value(scores).shape())));
    }
    let pairs = ranked_pairs(accuracies);
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut d = Tensor::zeros(pairs.len(), b);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        d.set(k, i, 1.0);
        d.set(k, j, -1.0);
    }
    let d = tape.constant(d);
    let diffs = tape.matmul(d, scores)?;
    let neg = tape.scale(diffs, -1.0);
    let slack = tape.add_scalar(neg, margin);
    let hinge = tape.relu(slack);
    let total = tape.sum_all(hinge);
    Ok(Some(tape.scale(total, 1.0 / pairs.len() as f64)))
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64, cfg: &TrainConfig) -> Self {
        Self {
            lr,
            weight_decay: cfg.weight_decay,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    /// One update; a `None` gradient counts as zero.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].as_ref().map(Tensor::data);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                *w -= self.lr * (update + self.weight_decay * *w);
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean mini-batch loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Accuracies of `ids`, shifted and scaled to zero mean and unit variance.
fn normalized_targets(bench: &TabularBenchmark, ids: &[u64]) -> Result<Vec<f64>> {
    let acc: Vec<f64> = ids
        .iter()
        .map(|&id| bench.accuracy(id).ok_or_else(|| Error::invalid(format!("arch {id} not in benchmark `{}`", bench.name))))
        .collect::<Result<_>>()?;
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<f64>() / n;
    let std = (acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    Ok(acc.iter().map(|a| if std > 0.0 { (a - mean) / std } else { a - mean }).collect())
}

fn lookup<'a>(bench: &'a TabularBenchmark, ids: &[u64]) -> Result<Vec<&'a CellArch>> {
    ids.iter()
        .map(|&id| bench.arch(id).ok_or_else(|| Error::invalid(format!("arch {id} not in benchmark `{}`", bench.name))))
        .collect()
}

/// Loss and per-parameter gradients on one mini-batch. `None` when the
/// batch holds no ranked pair.
pub fn batch_gradients(
    model: &PredictorModel,
    archs: &[&CellArch],
    targets: &[f64],
    margin: f64,
    supplemental: Option<&SupplementalTable>,
) -> Result<Option<(f64, Vec<Option<Tensor>>)>> {
    let batch = model.prepare(archs, supplemental)?;
    let mut tape = Tape::new();
    let params = model.leaves(&mut tape);
    let scores = model.scores(&mut tape, &params, &batch)?;
    let Some(loss) = hinge_rank_loss_tape(&mut tape, scores, targets, margin)? else {
        return Ok(None);
    };
    let value = tape.value(loss).item();
    if !value.is_finite() {
        let origin = tape.first_non_finite().unwrap_or("loss");
        return Err(Error::NonFinite(format!("training loss {value} (first at {origin})")));
    }
    let mut grads = tape.backward(loss)?;
    Ok(Some((value, params.iter().map(|&p| grads.take(p)).collect())))
}

fn train_loop(
    model: &mut PredictorModel,
    bench: &TabularBenchmark,
    train_ids: &[u64],
    cfg: &TrainConfig,
    epochs: usize,
    lr: f64,
    supplemental: Option<&SupplementalTable>,
) -> Result<History> {
    cfg.validate()?;
    let mut history = History::default();
    if epochs == 0 || train_ids.is_empty() {
        return Ok(history);
    }
    let archs = lookup(bench, train_ids)?;
    let targets = normalized_targets(bench, train_ids)?;
    let mut order: Vec<usize> = (0..train_ids.len()).collect();
    let mut r = rng::rng_from_seed(rng::derive_seed(cfg.seed, 0xf17));
    let mut opt = Adam::new(model.params(), lr, cfg);
    for epoch in 0..epochs {
        rng::shuffle(&mut r, &mut order);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch_archs: Vec<&CellArch> = chunk.iter().map(|&k| archs[k]).collect();
            let batch_targets: Vec<f64> = chunk.iter().map(|&k| targets[k]).collect();
            let step = batch_gradients(model, &batch_archs, &batch_targets, cfg.hinge_margin, supplemental)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}: {m}")),
                    other => other,
                })?;
            if let Some((loss, grads)) = step {
                opt.step(model.params_mut(), &grads);
                total += loss;
                batches += 1;
            }
        }
        if let Some(bad) = model.params().iter().position(|p| !p.is_finite()) {
            let name = model.param_names().nth(bad).unwrap_or("?").to_string();
            return Err(Error::NonFinite(format!("epoch {epoch}: parameter `{name}`")));
        }
        history.epoch_loss.push(if batches > 0 { total / batches as f64 } else { 0.0 });
    }
    Ok(history)
}

/// Trains `model` in place for `cfg.epochs` over shuffled mini-batches.
pub fn fit(
    model: &mut PredictorModel,
    bench: &TabularBenchmark,
    train_ids: &[u64],
    cfg: &TrainConfig,
    supplemental: Option<&SupplementalTable>,
) -> Result<History> {
    train_loop(model, bench, train_ids, cfg, cfg.epochs, cfg.lr, supplemental)
}

/// Adapts a trained model to another search space: registers the target
/// vocabulary (appending fresh operation rows if needed), then fine-tunes
/// every parameter for `transfer_epochs` at `transfer_lr`. With no target
/// samples the model is only re-indexed (zero-shot).
pub fn transfer(
    model: &mut PredictorModel,
    target: &TabularBenchmark,
    target_train_ids: &[u64],
    cfg: &TrainConfig,
    supplemental: Option<&SupplementalTable>,
) -> Result<History> {
    if model.config().cells_per_arch != target.cells_per_arch {
        return Err(Error::invalid(format!(
            "model encodes {} cell(s) per arch, target `{}` has {}",
            model.config().cells_per_arch,
            target.name,
            target.cells_per_arch
        )));
    }
    model.extend_vocab(&target.vocab, rng::derive_seed(cfg.seed, 0x7a))?;
    train_loop(model, target, target_train_ids, cfg, cfg.transfer_epochs, cfg.transfer_lr, supplemental)
}

/// Hinge loss of the model over all ranked pairs of `ids`.
pub fn evaluate_loss(
    model: &PredictorModel,
    bench: &TabularBenchmark,
    ids: &[u64],
    margin: f64,
    supplemental: Option<&SupplementalTable>,
) -> Result<f64> {
    let scores = model.predict(&lookup(bench, ids)?, supplemental)?;
    hinge_rank_loss(&scores, &normalized_targets(bench, ids)?, margin)
}

/// Rank correlation between predictions and accuracies over `ids`.
pub fn evaluate(
    model: &PredictorModel,
    bench: &TabularBenchmark,
    ids: &[u64],
    supplemental: Option<&SupplementalTable>,
) -> Result<RankReport> {
    let scores = model.predict(&lookup(bench, ids)?, supplemental)?;
    let acc: Vec<f64> = ids.iter().map(|&id| bench.accuracy(id).expect("looked up")).collect();
    RankReport::new(&scores, &acc).map_err(|e| Error::invalid(format!("rank metrics: {e}")))
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FLANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub benchmark: String,
    pub seed: u64,
    pub epochs: usize,
    #[serde(default)]
    pub train_ids: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: PredictorConfig,
    vocab: UnifiedVocab,
    provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: PredictorModel,
    pub provenance: Provenance,
}

pub fn write_checkpoint(model: &PredictorModel, provenance: &Provenance, w: &mut impl Write) -> Result<()> {
    let meta = serde_json::to_vec(&Metadata {
        config: model.config().clone(),
        vocab: model.vocab().clone(),
        provenance: provenance.clone(),
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(model.params().len() as u64).to_le_bytes())?;
    for (name, t) in model.named_params() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(model: &PredictorModel, provenance: &Provenance, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, provenance, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut self.inner).take(n as u64).read_to_end(&mut buf)?;
        if buf.len() != n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, what: &str, limit: u64) -> Result<usize> {
        let n = self.u64()?;
        if n > limit {
            return Err(Error::Checkpoint(format!("implausible {what} {n}")));
        }
        Ok(n as usize)
    }
}

/// Reads the header and tensors; `config` overrides the stored one.
fn read_parts(r: impl Read, config: Option<PredictorConfig>) -> Result<Checkpoint> {
    let mut r = Reader { inner: r };
    let magic = r.bytes(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes (not a FLAN checkpoint or unsupported version)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let meta_len = r.len("metadata length", 1 << 32)?;
    let meta: Metadata = serde_json::from_slice(&r.bytes(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let count = r.len("tensor count", 1 << 20)?;
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(name_len)?).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("tensor `{name}` has rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.len("dimension", 1 << 32)).collect::<Result<_>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.bytes(numel * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        named.push((name, Tensor::new(shape, data)?));
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    let model = PredictorModel::from_named(config.unwrap_or(meta.config), meta.vocab, named)?;
    Ok(Checkpoint {
        model,
        provenance: meta.provenance,
    })
}

pub fn read_checkpoint(r: impl Read) -> Result<Checkpoint> {
    read_parts(r, None)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_parts(BufReader::new(File::open(path)?), None)
}

/// Loads stored tensors into a model built from `config` instead of the
/// stored configuration; any name or shape disagreement is an error.
pub fn load_checkpoint_with_config(path: impl AsRef<Path>, config: PredictorConfig) -> Result<Checkpoint> {
    read_parts(BufReader::new(File::open(path)?), Some(config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_rank_loss(&[0.5, 0.3], &[0.9, 0.1], 0.1).unwrap(), 0.0);
        let l = hinge_rank_loss(&[0.3, 0.5], &[0.9, 0.1], 0.1).unwrap();
        assert!((l - 0.3).abs() < 1e-15);
        assert!(hinge_rank_loss(&[0.3], &[0.9], 0.1).is_err());
        assert_eq!(hinge_rank_loss(&[0.3, 0.1], &[0.5, 0.5], 0.1).unwrap(), 0.0);
    }

    #[test]
    fn tape_hinge_matches_plain() {
        let s = [0.2, -0.4, 0.9, 0.1];
        let a = [0.3, 0.8, 0.1, 0.5];
        let mut t = Tape::new();
        let v = t.leaf(Tensor::column(s.to_vec()));
        let l = hinge_rank_loss_tape(&mut t, v, &a, 0.1).unwrap().unwrap();
        assert_eq!(t.value(l).item(), hinge_rank_loss(&s, &a, 0.1).unwrap());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = vec![Tensor::row(vec![1.0, -1.0])];
        let mut opt = Adam::new(&p, 0.01, &cfg);
        opt.step(&mut p, &[Some(Tensor::row(vec![3.0, -0.5]))]);
        assert!((p[0].data()[0] - 0.99).abs() < 1e-9);
        assert!((p[0].data()[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn config_keys() {
        let mut c = TrainConfig::default();
        assert!(c.set("epochs", "3").unwrap());
        assert!(c.set("hinge_margin", "0.25").unwrap());
        assert!(!c.set("unknown", "1").unwrap());
        assert_eq!((c.epochs, c.hinge_margin), (3, 0.25));
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }
}
