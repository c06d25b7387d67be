//! Minibatch training with ADAM, plus the checkpoint format used to resume.
//!
//! Per-item loss:
//!
//! ```text
//! |pa - ta|^2 + |pb - tb|^2 + lambda * (TV(frame_t) + TV(frame_t1))
//! ```
//!
//! where `pa`/`pb` are the predicted missing fields, `ta`/`tb` their targets,
//! and `frame_t`/`frame_t1` are the predictions woven with the known rows of
//! the input. TV is the sum of squared forward differences. A batch loss is
//! the mean over its items.
//!
//! Items of a batch are differentiated in parallel, each on its own graph;
//! gradients are then summed in item order, so results do not depend on the
//! thread count.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autograd::{weave_rows, Graph};
use crate::codec::{put_f32s, Reader, Truncated};
use crate::data::PatchTriplet;
use crate::model::{read_weights, write_weights, DeinterlaceNet, Extension, ModelError, WeightsError};
use crate::tensor::{Element, Tensor, TensorError};
use crate::tv::total_variation;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss or gradient in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: u32, batch: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("batch size must be positive")]
    BatchSize,
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("checkpoint is missing the {0} record")]
    MissingRecord(&'static str),
    #[error("malformed {record} record: {detail}")]
    BadRecord { record: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub tv_weight: f64,
    pub epochs: u32,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables them.
    pub checkpoint_every: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            tv_weight: 2e-8,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

/// Loss of one item and its gradient for every parameter tensor, in
/// [`DeinterlaceNet::params`] order.
pub fn item_loss_and_grads<T: Element>(
    net: &DeinterlaceNet<T>,
    item: &PatchTriplet,
    tv_weight: f64,
) -> Result<(f64, Vec<Tensor<T>>), TrainError> {
    let mut g = Graph::new();
    let input = g.constant(item.input_tensor());
    let out = net.forward_graph(&mut g, input)?;
    let ta = g.constant(item.target_even_t_tensor());
    let tb = g.constant(item.target_odd_t1_tensor());
    let known_t = g.constant(item.known_odd_t_tensor());
    let known_t1 = g.constant(item.known_even_t1_tensor());

    let da = g.sub(out.even_t, ta)?;
    let ea = g.sum_squares(da)?;
    let db = g.sub(out.odd_t1, tb)?;
    let eb = g.sum_squares(db)?;
    let data = g.add(ea, eb)?;

    let frame_t = g.weave_rows(known_t, out.even_t)?;
    let frame_t1 = g.weave_rows(out.odd_t1, known_t1)?;
    let tv_t = g.total_variation(frame_t)?;
    let tv_t1 = g.total_variation(frame_t1)?;
    let tv = g.add(tv_t, tv_t1)?;
    let tv = g.scale(tv, tv_weight)?;
    let loss = g.add(data, tv)?;

    let mut grads = g.backward(loss)?;
    let params = out
        .params
        .iter()
        .zip(net.params())
        .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((g.scalar(loss), params))
}

/// Mean loss over `items` and its gradient. Items run in parallel; the
/// reduction is sequential in item order.
pub fn batch_loss_and_grads<T: Element>(
    net: &DeinterlaceNet<T>,
    items: &[&PatchTriplet],
    tv_weight: f64,
) -> Result<(f64, Vec<Tensor<T>>), TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let per_item: Vec<_> = items
        .par_iter()
        .map(|item| item_loss_and_grads(net, item, tv_weight))
        .collect::<Result<_, _>>()?;
    let mut iter = per_item.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi)?;
        }
    }
    let inv = 1.0 / items.len() as f64;
    let grads = grads.iter().map(|g| g.scale(inv)).collect::<Result<_, _>>()?;
    Ok((loss * inv, grads))
}

/// Per-item loss of given predictions (each `size/2 x size`).
pub fn loss<T: Element>(
    pred_even_t: &Tensor<T>,
    pred_odd_t1: &Tensor<T>,
    item: &PatchTriplet,
    tv_weight: f64,
) -> Result<f64, TrainError> {
    let data = pred_even_t.sub(&item.target_even_t_tensor())?.sum_squares()
        + pred_odd_t1.sub(&item.target_odd_t1_tensor())?.sum_squares();
    let frame_t = weave_rows(&item.known_odd_t_tensor(), pred_even_t);
    let frame_t1 = weave_rows(pred_odd_t1, &item.known_even_t1_tensor());
    Ok(data + tv_weight * (total_variation(&frame_t) + total_variation(&frame_t1)))
}

/// The same per-item loss computed with plain forward passes (no graph).
pub fn item_loss<T: Element>(net: &DeinterlaceNet<T>, item: &PatchTriplet, tv_weight: f64) -> Result<f64, TrainError> {
    let (pa, pb) = net.forward(&item.input_tensor())?;
    loss(&pa, &pb, item, tv_weight)
}

/// Mean [`item_loss`] over a dataset, evaluated in parallel.
pub fn dataset_loss<T: Element>(
    net: &DeinterlaceNet<T>,
    items: &[PatchTriplet],
    tv_weight: f64,
) -> Result<f64, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let losses: Vec<f64> = items
        .par_iter()
        .map(|it| item_loss(net, it, tv_weight))
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / items.len() as f64)
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(net: &DeinterlaceNet<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected ADAM update.
    pub fn apply(&mut self, net: &mut DeinterlaceNet<f32>, grads: &[Tensor<f32>], config: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for (((p, g), m), v) in net
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gi = gi as f64;
                let m_new = config.beta1 * *mi as f64 + (1.0 - config.beta1) * gi;
                let v_new = config.beta2 * *vi as f64 + (1.0 - config.beta2) * gi * gi;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let update = config.learning_rate * (m_new / c1) / ((v_new / c2).sqrt() + config.epsilon);
                *w = (*w as f64 - update) as f32;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: u32,
    /// Mean item loss over the epoch's batches (weights as of each batch).
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,train_loss,val_loss,seconds";

pub fn loss_csv(history: &[EpochStats]) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for s in history {
        let val = s.val_loss.map_or(String::new(), |v| format!("{v:.9e}"));
        let _ = writeln!(out, "{},{:.9e},{},{:.3}", s.epoch, s.train_loss, val, s.seconds);
    }
    out
}

/// Shuffle seed for one epoch; depends only on the run seed and the epoch.
fn epoch_rng(seed: u64, epoch: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub net: DeinterlaceNet<f32>,
    pub adam: AdamState,
    pub history: Vec<EpochStats>,
}

impl Trainer {
    pub fn new(net: DeinterlaceNet<f32>, config: TrainConfig) -> Self {
        let adam = AdamState::new(&net);
        Self {
            config,
            net,
            adam,
            history: Vec::new(),
        }
    }

    pub fn epochs_completed(&self) -> u32 {
        self.history.len() as u32
    }

    /// Runs one epoch over `train` in shuffled minibatches. The last batch
    /// may be short. Validation loss is computed when `val` is non-empty.
    pub fn train_epoch(&mut self, train: &[PatchTriplet], val: &[PatchTriplet]) -> Result<EpochStats, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if self.config.batch_size == 0 {
            return Err(TrainError::BatchSize);
        }
        let start = Instant::now();
        let epoch = self.epochs_completed() + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng(self.config.seed, epoch));
        let mut total = 0.0;
        for (batch, idx) in order.chunks(self.config.batch_size).enumerate() {
            let items: Vec<&PatchTriplet> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, grads) =
                batch_loss_and_grads(&self.net, &items, self.config.tv_weight).map_err(|e| match e {
                    TrainError::Tensor(TensorError::NonFinite(_))
                    | TrainError::Model(ModelError::Tensor(TensorError::NonFinite(_))) => {
                        TrainError::NonFinite { epoch, batch }
                    }
                    e => e,
                })?;
            if !loss.is_finite() || !grads.iter().all(Tensor::all_finite) {
                return Err(TrainError::NonFinite { epoch, batch });
            }
            self.adam.apply(&mut self.net, &grads, &self.config);
            total += loss * items.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(dataset_loss(&self.net, val, self.config.tv_weight)?)
        };
        let stats = EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.history.push(stats);
        self.net.meta.epochs_completed = epoch;
        self.net.meta.final_loss = train_loss as f32;
        Ok(stats)
    }

    /// Trains until `config.epochs` epochs are complete, calling `on_epoch`
    /// after each one (for logging and checkpointing).
    pub fn fit<E>(
        &mut self,
        train: &[PatchTriplet],
        val: &[PatchTriplet],
        mut on_epoch: impl FnMut(&Trainer, &EpochStats) -> Result<(), E>,
    ) -> Result<(), E>
    where
        E: From<TrainError>,
    {
        while self.epochs_completed() < self.config.epochs {
            let stats = self.train_epoch(train, val)?;
            on_epoch(self, &stats)?;
        }
        Ok(())
    }

    /// Whether a checkpoint is due after the latest epoch.
    pub fn checkpoint_due(&self) -> bool {
        let every = self.config.checkpoint_every;
        every > 0 && self.epochs_completed().is_multiple_of(every)
    }

    /// Weights file carrying optimizer state, loss history and config, so
    /// that training can resume bit-exactly.
    pub fn checkpoint(&self) -> Vec<u8> {
        write_weights(
            &self.net,
            &[
                Extension {
                    tag: *TAG_ADAM,
                    payload: encode_adam(&self.adam),
                },
                Extension {
                    tag: *TAG_LOSS,
                    payload: encode_history(&self.history),
                },
                Extension {
                    tag: *TAG_CONF,
                    payload: encode_config(&self.config),
                },
            ],
        )
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, TrainError> {
        let file = read_weights(bytes)?;
        let find = |tag: &[u8; 4], name: &'static str| {
            file.extensions
                .iter()
                .find(|e| &e.tag == tag)
                .map(|e| e.payload.as_slice())
                .ok_or(TrainError::MissingRecord(name))
        };
        let config = decode_config(find(TAG_CONF, "CONF")?)?;
        let history = decode_history(find(TAG_LOSS, "LOSS")?)?;
        let adam = decode_adam(find(TAG_ADAM, "ADAM")?, &file.net)?;
        Ok(Self {
            config,
            net: file.net,
            adam,
            history,
        })
    }
}

pub const TAG_ADAM: &[u8; 4] = b"ADAM";
pub const TAG_LOSS: &[u8; 4] = b"LOSS";
pub const TAG_CONF: &[u8; 4] = b"CONF";

fn bad(record: &'static str) -> impl Fn(Truncated) -> TrainError {
    move |t| TrainError::BadRecord {
        record,
        detail: format!("truncated at offset {}", t.offset),
    }
}

fn finish(r: &Reader<'_>, record: &'static str) -> Result<(), TrainError> {
    match r.remaining() {
        0 => Ok(()),
        n => Err(TrainError::BadRecord {
            record,
            detail: format!("{n} trailing bytes"),
        }),
    }
}

fn encode_adam(a: &AdamState) -> Vec<u8> {
    let mut out = a.step.to_le_bytes().to_vec();
    for (m, v) in a.m.iter().zip(&a.v) {
        put_f32s(&mut out, m);
        put_f32s(&mut out, v);
    }
    out
}

fn decode_adam(bytes: &[u8], net: &DeinterlaceNet<f32>) -> Result<AdamState, TrainError> {
    let e = bad("ADAM");
    let mut r = Reader::new(bytes);
    let step = r.u64().map_err(&e)?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for p in net.params() {
        m.push(r.f32s(p.len()).map_err(&e)?);
        v.push(r.f32s(p.len()).map_err(&e)?);
    }
    finish(&r, "ADAM")?;
    Ok(AdamState { step, m, v })
}

fn encode_history(h: &[EpochStats]) -> Vec<u8> {
    let mut out = (h.len() as u32).to_le_bytes().to_vec();
    for s in h {
        out.extend_from_slice(&s.epoch.to_le_bytes());
        out.extend_from_slice(&s.train_loss.to_le_bytes());
        out.extend_from_slice(&s.val_loss.unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&s.seconds.to_le_bytes());
    }
    out
}

fn decode_history(bytes: &[u8]) -> Result<Vec<EpochStats>, TrainError> {
    let e = bad("LOSS");
    let mut r = Reader::new(bytes);
    let n = r.u32().map_err(&e)?;
    let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let epoch = r.u32().map_err(&e)?;
        let train_loss = r.f64().map_err(&e)?;
        let val = r.f64().map_err(&e)?;
        let seconds = r.f64().map_err(&e)?;
        out.push(EpochStats {
            epoch,
            train_loss,
            val_loss: (!val.is_nan()).then_some(val),
            seconds,
        });
    }
    finish(&r, "LOSS")?;
    Ok(out)
}

fn encode_config(c: &TrainConfig) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon, c.tv_weight] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.epochs.to_le_bytes());
    out.extend_from_slice(&(c.batch_size as u32).to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&c.checkpoint_every.to_le_bytes());
    out
}

fn decode_config(bytes: &[u8]) -> Result<TrainConfig, TrainError> {
    let e = bad("CONF");
    let mut r = Reader::new(bytes);
    let mut f = [0.0; 5];
    for slot in &mut f {
        *slot = r.f64().map_err(&e)?;
    }
    let c = TrainConfig {
        learning_rate: f[0],
        beta1: f[1],
        beta2: f[2],
        epsilon: f[3],
        tv_weight: f[4],
        epochs: r.u32().map_err(&e)?,
        batch_size: r.u32().map_err(&e)? as usize,
        seed: r.u64().map_err(&e)?,
        checkpoint_every: r.u32().map_err(&e)?,
    };
    finish(&r, "CONF")?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetConfig;

    fn small_config() -> NetConfig {
        NetConfig {
            trunk_channels: 4,
            branch_channels: 3,
            ..NetConfig::default()
        }
    }

    fn item(seed: u32) -> PatchTriplet {
        let size = 8;
        let f = |i: usize| ((i as u32 * 7 + seed * 13) % 17) as f32 / 17.0;
        PatchTriplet {
            size,
            input: (0..size * size).map(f).collect(),
            target_even_t: (0..size * size / 2).map(|i| f(i + 3)).collect(),
            target_odd_t1: (0..size * size / 2).map(|i| f(i + 5)).collect(),
            source_id: seed,
            origin_row: 0,
            origin_col: 0,
        }
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.learning_rate, c.beta1, c.beta2, c.epsilon),
            (0.001, 0.9, 0.999, 1e-8)
        );
        assert_eq!((c.tv_weight, c.epochs, c.batch_size), (2e-8, 200, 64));
    }

    #[test]
    fn graph_loss_matches_plain_forward() {
        let net = DeinterlaceNet::<f64>::init(small_config(), 3);
        for s in 0..3 {
            let it = item(s);
            let (a, _) = item_loss_and_grads(&net, &it, 0.5).unwrap();
            let b = item_loss(&net, &it, 0.5).unwrap();
            assert!((a - b).abs() < 1e-10 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_items() {
        let net = DeinterlaceNet::<f64>::init(small_config(), 4);
        let items = [item(0), item(1)];
        let refs: Vec<&PatchTriplet> = items.iter().collect();
        let (l, g) = batch_loss_and_grads(&net, &refs, 1e-3).unwrap();
        let (l0, g0) = item_loss_and_grads(&net, &items[0], 1e-3).unwrap();
        let (l1, g1) = item_loss_and_grads(&net, &items[1], 1e-3).unwrap();
        assert!((l - (l0 + l1) / 2.0).abs() < 1e-12);
        for ((a, b), c) in g.iter().zip(&g0).zip(&g1) {
            let want = b.add(c).unwrap().scale(0.5).unwrap();
            assert!(a.max_abs_diff(&want).unwrap() < 1e-12);
        }
    }

    #[test]
    fn first_adam_step_moves_each_weight_by_lr() {
        let mut net = DeinterlaceNet::<f32>::init(small_config(), 1);
        let before = net.clone();
        let grads: Vec<Tensor<f32>> = net.params().iter().map(|p| p.map(|_| 0.25)).collect();
        let cfg = TrainConfig::default();
        let mut adam = AdamState::new(&net);
        adam.apply(&mut net, &grads, &cfg);
        for (a, b) in net.params().iter().zip(before.params()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!(((y - x) as f64 - 0.001).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn short_last_batch_and_history() {
        let net = DeinterlaceNet::<f32>::init(small_config(), 2);
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 2,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(net, cfg);
        let data: Vec<_> = (0..5).map(item).collect();
        t.fit::<TrainError>(&data, &data[..1], |_, _| Ok(())).unwrap();
        assert_eq!(t.adam.step, 6);
        assert_eq!(t.history.len(), 2);
        assert!(t.history.iter().all(|s| s.val_loss.is_some()));
        assert_eq!(t.net.meta.epochs_completed, 2);
        let csv = loss_csv(&t.history);
        assert!(csv.starts_with(LOSS_CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn non_finite_reports_batch() {
        let mut net = DeinterlaceNet::<f32>::init(small_config(), 2);
        net.params_mut()[0].data_mut()[0] = f32::NAN;
        let mut t = Trainer::new(net, TrainConfig::default());
        let err = t.train_epoch(&[item(0)], &[]).unwrap_err();
        assert!(matches!(err, TrainError::NonFinite { epoch: 1, batch: 0 }), "{err}");
    }

    #[test]
    fn checkpoint_records_round_trip() {
        let net = DeinterlaceNet::<f32>::init(small_config(), 5);
        let mut t = Trainer::new(
            net,
            TrainConfig {
                batch_size: 2,
                seed: 9,
                ..TrainConfig::default()
            },
        );
        let data: Vec<_> = (0..3).map(item).collect();
        t.train_epoch(&data, &[]).unwrap();
        let back = Trainer::from_checkpoint(&t.checkpoint()).unwrap();
        assert_eq!(back.config, t.config);
        assert_eq!(back.adam, t.adam);
        assert_eq!(back.history, t.history);
        assert_eq!(back.net, t.net);
        let plain = write_weights(&t.net, &[]);
        assert!(matches!(
            Trainer::from_checkpoint(&plain),
            Err(TrainError::MissingRecord(_))
        ));
    }
}
