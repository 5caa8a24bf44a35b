use std::collections::BTreeMap;
use std::time::Instant;

use crate::dataset::{batch_iter, make_batch, Dataset};
use crate::error::{Error, Result};
use crate::network::{argmax, backward, forward, forward_logits, predict, LayerSpec, NetworkParams, NUM_CLASSES};
use crate::par::Execution;
use crate::rng;
use crate::sgd::{sgd_step, SgdConfig, Velocity};
use crate::tensor::{softmax_cross_entropy, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub spec: LayerSpec,
    /// Drives initialization and every epoch's shuffle.
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            sgd: SgdConfig::default(),
            spec: LayerSpec::default(),
            seed: 1,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    /// `lr_at(iterations completed)` at the end of the epoch.
    pub lr: f64,
    pub iterations: u64,
    pub subject_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsHistory {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsHistory {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_accuracy)
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Everything except wall-clock time, which is the only field that varies
    /// between identical runs.
    pub fn without_timing(&self) -> Self {
        let mut h = self.clone();
        h.epochs.iter_mut().for_each(|e| e.wall_seconds = 0.0);
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
    /// Accuracy of a per-subject majority vote over that subject's slices
    /// (ties go to NC).
    pub subject_accuracy: f64,
}

const EVAL_CHUNK: usize = 256;

/// Slice-level accuracy and mean cross-entropy; parameters are read only.
pub fn evaluate(params: &NetworkParams<f32>, dataset: &Dataset, exec: Execution) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0;
    let mut loss_sum = 0.0f64;
    // subject → (true label, AD votes, slices)
    let mut votes: BTreeMap<u32, (u8, usize, usize)> = BTreeMap::new();
    let n = dataset.len();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let batch = make_batch(dataset, (start..(start + EVAL_CHUNK).min(n)).collect());
        let logits = forward_logits(params, &batch.pixels, exec)?;
        for (k, &i) in batch.indices.iter().enumerate() {
            let rec = &dataset.records()[i];
            let row = Tensor::new(
                &[NUM_CLASSES],
                logits.data()[k * NUM_CLASSES..(k + 1) * NUM_CLASSES].to_vec(),
            )?;
            let pred = argmax(row.data());
            let lg = softmax_cross_entropy(&row, batch.labels[k])?;
            loss_sum += f64::from(lg.loss);
            correct += usize::from(pred == batch.labels[k]);
            let e = votes.entry(rec.subject_id).or_insert((rec.label, 0, 0));
            e.1 += usize::from(pred == 1);
            e.2 += 1;
        }
    }
    if !loss_sum.is_finite() {
        return Err(Error::NonFinite("evaluation loss".into()));
    }
    let subject_hits = votes
        .values()
        .filter(|(label, ad, total)| u8::from(2 * ad > *total) == *label)
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / n as f64,
        mean_loss: loss_sum / n as f64,
        correct,
        total: n,
        subject_accuracy: subject_hits as f64 / votes.len() as f64,
    })
}

/// [`train_with`] without a progress callback.
pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<(NetworkParams<f32>, MetricsHistory)> {
    train_with(config, train_set, test_set, |_| {})
}

/// Mini-batch SGD for `config.epochs` epochs, evaluating on `test_set` after
/// each. The iteration counter driving the learning-rate policy runs across
/// epochs.
pub fn train_with(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(NetworkParams<f32>, MetricsHistory)> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Empty("training needs non-empty train and test sets".into()));
    }
    config.sgd.validate()?;
    let exec = config.execution;
    let mut params = NetworkParams::<f32>::init(&config.spec, config.seed)?;
    let mut velocity = Velocity::zeros_like(&params);
    let mut history = MetricsHistory::default();
    let mut iteration = 0u64;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let epoch_seed = rng::derive(config.seed, rng::stream::EPOCH, epoch as u64);
        let mut loss_sum = 0.0f64;
        for batch in batch_iter(train_set, config.batch_size, epoch_seed)? {
            let (_, cache) = forward(&params, &batch.pixels, exec)?;
            let (grads, loss) = backward(&params, &cache, &batch.labels, exec)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at iteration {iteration}")));
            }
            loss_sum += f64::from(loss) * batch.labels.len() as f64;
            sgd_step(&mut params, &grads, &mut velocity, &config.sgd, iteration)?;
            iteration += 1;
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let eval = evaluate(&params, test_set, exec)?;
        let m = EpochMetrics {
            epoch,
            test_accuracy: eval.accuracy,
            test_loss: eval.mean_loss,
            train_loss: loss_sum / train_set.len() as f64,
            lr: config.sgd.lr_at(iteration),
            iterations: iteration,
            subject_accuracy: eval.subject_accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&m);
        history.epochs.push(m);
    }
    Ok((params, history))
}

/// Labels for every record, in dataset order.
pub fn predict_dataset(params: &NetworkParams<f32>, dataset: &Dataset, exec: Execution) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(dataset.len());
    for start in (0..dataset.len()).step_by(EVAL_CHUNK) {
        let batch = make_batch(dataset, (start..(start + EVAL_CHUNK).min(dataset.len())).collect());
        out.extend(predict(params, &batch.pixels, exec)?.0);
    }
    Ok(out)
}
