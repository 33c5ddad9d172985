//! Mini-batch SGD training under the update-objective family.
//!
//! The training recipe: seeded shuffling each epoch, classical momentum,
//! and a step learning-rate decay (`base_lr * factor^(epoch / decay_every)`).
//! Loss reduction over a batch is the mean over samples, so objective
//! mixing weights behave identically across batch sizes.
//!
//! Reference models (teacher ensembles, legacy ancestors) are borrowed
//! immutably and receive no gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::ensemble::EnsembleTeacher;
use crate::error::{Error, Result};
use crate::losses::{
    combined_objective, cross_entropy, fd, kd, ldi, legacy_objective, LdiConfig, ObjectiveKind,
    ObjectiveSpec, SubsetMode,
};
use crate::model::{argmax, backward, forward, sgd_momentum_step, MlpModel, Velocity};
use crate::numerics::Matrix;
use crate::rng::{stream, Rng};

/// Epoch count, learning-rate schedule, momentum, and batching.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub base_lr: f64,
    pub momentum: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub lr_decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl TrainSchedule {
    /// Desk-scale default: 30 epochs, lr 0.1 decayed x0.1 every 10 epochs,
    /// momentum 0.9, batch 32.
    pub fn desk_default(shuffle_seed: u64) -> Self {
        TrainSchedule {
            epochs: 30,
            base_lr: 0.1,
            momentum: 0.9,
            lr_decay_factor: 0.1,
            decay_every: 10,
            batch_size: 32,
            shuffle_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.base_lr <= 0.0 || self.base_lr.is_nan() {
            return Err(Error::InvalidParameter { name: "base_lr", reason: "must be > 0" });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter { name: "momentum", reason: "must be in [0, 1)" });
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidParameter { name: "batch_size", reason: "must be >= 1" });
        }
        if self.decay_every < 1 {
            return Err(Error::InvalidParameter { name: "decay_every", reason: "must be >= 1" });
        }
        if self.lr_decay_factor <= 0.0 || self.lr_decay_factor.is_nan() {
            return Err(Error::InvalidParameter {
                name: "lr_decay_factor",
                reason: "must be > 0",
            });
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut lr = self.base_lr;
        for _ in 0..(epoch / self.decay_every) {
            lr *= self.lr_decay_factor;
        }
        lr
    }
}

/// Frozen reference models available to the objective.
///
/// `ancestors` are single-model references (the legacy model in an update,
/// or several predecessors in a fully-connected chain scheme, weighted
/// equally). `ensemble` is the guiding teacher for ensemble-referenced
/// objectives.
#[derive(Debug, Clone, Default)]
pub struct References<'a> {
    pub ensemble: Option<&'a EnsembleTeacher>,
    pub ancestors: Vec<&'a MlpModel>,
}

impl<'a> References<'a> {
    pub fn none() -> Self {
        References { ensemble: None, ancestors: Vec::new() }
    }

    pub fn single(old: &'a MlpModel) -> Self {
        References { ensemble: None, ancestors: vec![old] }
    }

    pub fn teacher(teacher: &'a EnsembleTeacher) -> Self {
        References { ensemble: Some(teacher), ancestors: Vec::new() }
    }

    pub fn teacher_and_legacy(teacher: &'a EnsembleTeacher, legacy: &'a MlpModel) -> Self {
        References { ensemble: Some(teacher), ancestors: vec![legacy] }
    }
}

/// Loss/error trace of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Cross-entropy term accumulated over all steps (batch means summed).
    pub ce_term_total: f64,
    /// Ensemble inhibition term accumulated over all steps.
    pub ensemble_term_total: f64,
    /// Per-ancestor reference terms accumulated over all steps.
    pub ancestor_term_totals: Vec<f64>,
}

/// One epoch's mean training loss and training error rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_error_rate: f64,
}

struct SampleEval {
    loss: f64,
    dlogits: Vec<f64>,
    ce_term: f64,
    ensemble_term: f64,
    ancestor_terms: Vec<f64>,
}

/// Reference term against one ancestor. When the ancestor knows fewer
/// classes than the student (class-growth updates), the term applies on the
/// shared class prefix and the remaining logits receive no gradient.
fn ancestor_term(
    spec: &ObjectiveSpec,
    logits: &[f64],
    label: usize,
    ref_logits: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let shared = ref_logits.len().min(logits.len());
    let new_part = &logits[..shared];
    let ref_part = &ref_logits[..shared];
    let (loss, mut grad) = match spec.kind {
        ObjectiveKind::LdiSingle | ObjectiveKind::ElodiPlusLegacyLdi => {
            let cfg = clamp_top_k(&spec.ldi, shared);
            ldi(new_part, ref_part, &cfg)?
        }
        ObjectiveKind::Kd => kd(new_part, ref_part, spec.kd_temperature)?,
        ObjectiveKind::Fd => {
            let old_correct = label < shared && argmax(ref_part) == label;
            fd(new_part, ref_part, old_correct, 1.0, spec.fd_old_correct_weight)?
        }
        _ => return Err(Error::MissingReference("objective takes no ancestor reference")),
    };
    grad.resize(logits.len(), 0.0);
    Ok((loss, grad))
}

fn clamp_top_k(cfg: &LdiConfig, num_classes: usize) -> LdiConfig {
    match cfg.subset_mode {
        SubsetMode::TopK(k) if k > num_classes => {
            LdiConfig { subset_mode: SubsetMode::TopK(num_classes), ..*cfg }
        }
        _ => *cfg,
    }
}

/// Equal-weight mean of the per-ancestor terms (the reference-term budget
/// is split evenly across ancestors).
fn mean_ancestor_term(
    spec: &ObjectiveSpec,
    logits: &[f64],
    label: usize,
    ancestors: &[Vec<f64>],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if ancestors.is_empty() {
        return Err(Error::MissingReference("single-model reference"));
    }
    let weight = 1.0 / ancestors.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; logits.len()];
    let mut terms = Vec::with_capacity(ancestors.len());
    for ref_logits in ancestors {
        let (term, term_grad) = ancestor_term(spec, logits, label, ref_logits)?;
        terms.push(term);
        total += weight * term;
        for (g, t) in grad.iter_mut().zip(&term_grad) {
            *g += weight * t;
        }
    }
    Ok((total, grad, terms))
}

fn sample_objective(
    spec: &ObjectiveSpec,
    logits: &[f64],
    label: usize,
    teacher_logits: Option<&[f64]>,
    ancestor_logits: &[Vec<f64>],
) -> Result<SampleEval> {
    let ce = cross_entropy(logits, label)?;
    let ce_term = ce.0;
    match spec.kind {
        ObjectiveKind::CeOnly => Ok(SampleEval {
            loss: ce.0,
            dlogits: ce.1,
            ce_term,
            ensemble_term: 0.0,
            ancestor_terms: Vec::new(),
        }),
        ObjectiveKind::LdiSingle | ObjectiveKind::Kd | ObjectiveKind::Fd => {
            let (term, grad, terms) = mean_ancestor_term(spec, logits, label, ancestor_logits)?;
            let (loss, dlogits) = combined_objective(ce, (term, grad), spec.alpha);
            Ok(SampleEval { loss, dlogits, ce_term, ensemble_term: 0.0, ancestor_terms: terms })
        }
        ObjectiveKind::Elodi => {
            let teacher = teacher_logits.ok_or(Error::MissingReference("ensemble teacher"))?;
            let inhibition = ldi(logits, teacher, &spec.ldi)?;
            let ensemble_term = inhibition.0;
            let (loss, dlogits) = combined_objective(ce, inhibition, spec.alpha);
            Ok(SampleEval { loss, dlogits, ce_term, ensemble_term, ancestor_terms: Vec::new() })
        }
        ObjectiveKind::ElodiPlusLegacyLdi => {
            let teacher = teacher_logits.ok_or(Error::MissingReference("ensemble teacher"))?;
            let ensemble = ldi(logits, teacher, &spec.ldi)?;
            let ensemble_term = ensemble.0;
            let (legacy_total, legacy_grad, terms) =
                mean_ancestor_term(spec, logits, label, ancestor_logits)?;
            let bridged = legacy_objective(ensemble, (legacy_total, legacy_grad), spec.lambda);
            let (loss, dlogits) = combined_objective(ce, bridged, spec.alpha);
            Ok(SampleEval { loss, dlogits, ce_term, ensemble_term, ancestor_terms: terms })
        }
    }
}

/// Per-sample logits of every reference for one batch, in batch order.
struct BatchRefs {
    teacher: Option<Vec<Vec<f64>>>,
    ancestors: Vec<Vec<Vec<f64>>>,
}

fn batch_reference_logits(
    refs: &References<'_>,
    ds: &LabeledDataset,
    order: &[usize],
    batch: &Matrix,
) -> Result<BatchRefs> {
    let teacher = match refs.ensemble {
        Some(t) => {
            let mut rows = Vec::with_capacity(order.len());
            for (pos, &idx) in order.iter().enumerate() {
                let s = &ds.samples[idx];
                rows.push(t.logits_for(s.id, batch.row(pos))?);
            }
            Some(rows)
        }
        None => None,
    };
    let mut ancestors = Vec::with_capacity(refs.ancestors.len());
    for anc in &refs.ancestors {
        let (logits, _) = forward(anc, batch)?;
        ancestors.push((0..logits.rows()).map(|r| logits.row(r).to_vec()).collect());
    }
    Ok(BatchRefs { teacher, ancestors })
}

/// Trains `model` in place; returns the per-epoch history.
///
/// Deterministic end to end for fixed seeds: the same (model init, dataset,
/// schedule, objective, references) always produces bit-identical
/// parameters.
pub fn train(
    model: &mut MlpModel,
    train_set: &LabeledDataset,
    schedule: &TrainSchedule,
    objective: &ObjectiveSpec,
    refs: &References<'_>,
) -> Result<TrainHistory> {
    schedule.validate()?;
    objective.validate(model.arch.output_dim)?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if train_set.num_classes != model.arch.output_dim {
        return Err(Error::DimensionMismatch {
            context: "train classes vs output_dim",
            expected: model.arch.output_dim,
            got: train_set.num_classes,
        });
    }
    if train_set.dim != model.arch.input_dim {
        return Err(Error::DimensionMismatch {
            context: "train features vs input_dim",
            expected: model.arch.input_dim,
            got: train_set.dim,
        });
    }
    if objective.kind.needs_ensemble() && refs.ensemble.is_none() {
        return Err(Error::MissingReference("ensemble teacher"));
    }
    if objective.kind.needs_ancestors() && refs.ancestors.is_empty() {
        return Err(Error::MissingReference("single-model reference"));
    }
    if let Some(t) = refs.ensemble {
        if t.output_dim() != model.arch.output_dim {
            return Err(Error::DimensionMismatch {
                context: "teacher output_dim",
                expected: model.arch.output_dim,
                got: t.output_dim(),
            });
        }
    }

    let n = train_set.len();
    let mut velocity = Velocity::zeros_like(model);
    let mut history = TrainHistory {
        ancestor_term_totals: vec![0.0; refs.ancestors.len()],
        ..TrainHistory::default()
    };

    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = Rng::new(schedule.shuffle_seed, stream::shuffle_epoch(epoch));
        rng.shuffle(&mut order);

        let mut epoch_loss_sum = 0.0;
        let mut epoch_samples = 0usize;
        for (batch_idx, chunk) in order.chunks(schedule.batch_size).enumerate() {
            let rows: Vec<Vec<f64>> =
                chunk.iter().map(|&i| train_set.samples[i].features.clone()).collect();
            let batch = Matrix::from_rows(&rows)?;
            let (logits, cache) = forward(model, &batch)?;
            let batch_refs = batch_reference_logits(refs, train_set, chunk, &batch)?;

            let scale = 1.0 / chunk.len() as f64;
            let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
            let mut batch_loss = 0.0;
            let mut batch_ce = 0.0;
            let mut batch_ensemble = 0.0;
            let mut batch_ancestors = vec![0.0; refs.ancestors.len()];
            for (pos, &idx) in chunk.iter().enumerate() {
                let label = train_set.samples[idx].label;
                let teacher_row = batch_refs.teacher.as_ref().map(|t| t[pos].as_slice());
                let ancestor_rows: Vec<Vec<f64>> =
                    batch_refs.ancestors.iter().map(|a| a[pos].clone()).collect();
                let eval =
                    sample_objective(objective, logits.row(pos), label, teacher_row, &ancestor_rows)?;
                batch_loss += eval.loss;
                batch_ce += eval.ce_term;
                batch_ensemble += eval.ensemble_term;
                for (acc, term) in batch_ancestors.iter_mut().zip(&eval.ancestor_terms) {
                    *acc += term;
                }
                for (c, g) in eval.dlogits.iter().enumerate() {
                    dlogits.set(pos, c, g * scale);
                }
            }
            let mean_loss = batch_loss * scale;
            if !mean_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            history.ce_term_total += batch_ce * scale;
            history.ensemble_term_total += batch_ensemble * scale;
            for (total, b) in history.ancestor_term_totals.iter_mut().zip(&batch_ancestors) {
                *total += b * scale;
            }
            epoch_loss_sum += batch_loss;
            epoch_samples += chunk.len();

            let grads = backward(model, &cache, &dlogits)?;
            sgd_momentum_step(model, &grads, &mut velocity, lr, schedule.momentum);
        }

        let train_error_rate = training_error(model, train_set)?;
        history.epochs.push(EpochStats {
            epoch,
            mean_loss: epoch_loss_sum / epoch_samples as f64,
            train_error_rate,
        });
    }
    Ok(history)
}

fn training_error(model: &MlpModel, ds: &LabeledDataset) -> Result<f64> {
    let (logits, preds) = crate::model::predict_logits(model, ds)?;
    debug_assert_eq!(logits.rows(), ds.len());
    let wrong = preds.iter().zip(&ds.samples).filter(|(p, s)| **p != s.label).count();
    Ok(wrong as f64 / ds.len() as f64)
}
