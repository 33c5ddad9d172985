//! Flip accounting between model versions: error rates, negative/positive
//! flip rates, per-sample flip records, and pairwise flip matrices.
//!
//! All rates are kept as exact integer counts and only rendered as decimals,
//! so the identity `ER_new - ER_old = NFR - PFR` holds exactly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{predict_logits, MlpModel};
use crate::numerics::l2_norm;

/// One model's predictions over an evaluation set, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_tag: String,
    pub ids: Vec<usize>,
    pub predictions: Vec<usize>,
    /// Per-sample logit vectors; omit to skip margin/displacement columns.
    pub logits: Option<Vec<Vec<f64>>>,
}

impl PredictionSet {
    /// Predictions of `model` over `ds`, logits included.
    pub fn from_model(tag: &str, model: &MlpModel, ds: &LabeledDataset) -> Result<Self> {
        let (logits, predictions) = predict_logits(model, ds)?;
        let rows = (0..logits.rows()).map(|r| logits.row(r).to_vec()).collect();
        Ok(PredictionSet {
            model_tag: String::from(tag),
            ids: ds.ids(),
            predictions,
            logits: Some(rows),
        })
    }

    fn check_alignment(&self, ds: &LabeledDataset) -> Result<()> {
        if self.ids.len() != ds.len() || self.predictions.len() != ds.len() {
            return Err(Error::MisalignedIds);
        }
        for (id, s) in self.ids.iter().zip(&ds.samples) {
            if *id != s.id {
                return Err(Error::MisalignedIds);
            }
        }
        Ok(())
    }
}

/// How a sample's correctness changed between the old and new model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipCategory {
    /// Old correct, new wrong.
    NegFlip,
    /// Old wrong, new correct.
    PosFlip,
    BothCorrect,
    BothWrong,
}

impl FlipCategory {
    pub fn name(&self) -> &'static str {
        match self {
            FlipCategory::NegFlip => "neg_flip",
            FlipCategory::PosFlip => "pos_flip",
            FlipCategory::BothCorrect => "both_correct",
            FlipCategory::BothWrong => "both_wrong",
        }
    }
}

/// Per-sample record of an update's effect.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRecord {
    pub id: usize,
    pub label: usize,
    pub old_pred: usize,
    pub new_pred: usize,
    pub category: FlipCategory,
    /// Old model's top-1 minus top-2 logit (distance-to-boundary proxy);
    /// absent when the old prediction set carries no logits.
    pub old_margin: Option<f64>,
    /// L2 norm of the logit displacement between the two models; absent
    /// when either set carries no logits or their widths differ.
    pub displacement_norm: Option<f64>,
}

/// Aggregate of an old -> new model update over an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub old_tag: String,
    pub new_tag: String,
    pub samples: u64,
    pub err_old: u64,
    pub err_new: u64,
    pub neg_flips: u64,
    pub pos_flips: u64,
    /// True when both prediction sets carried logits, i.e. margins and
    /// displacement norms are present in `records`.
    pub has_margins: bool,
    pub records: Vec<FlipRecord>,
}

impl UpdateReport {
    pub fn er_old(&self) -> f64 {
        self.err_old as f64 / self.samples as f64
    }

    pub fn er_new(&self) -> f64 {
        self.err_new as f64 / self.samples as f64
    }

    pub fn nfr(&self) -> f64 {
        self.neg_flips as f64 / self.samples as f64
    }

    pub fn pfr(&self) -> f64 {
        self.pos_flips as f64 / self.samples as f64
    }

    /// `(err_new - err_old) == (neg_flips - pos_flips)` on exact counts.
    pub fn identity_holds(&self) -> bool {
        self.err_new as i64 - self.err_old as i64
            == self.neg_flips as i64 - self.pos_flips as i64
    }
}

fn labels_checked(preds: &PredictionSet, ds: &LabeledDataset) -> Result<Vec<usize>> {
    preds.check_alignment(ds)?;
    Ok(ds.labels())
}

/// Fraction of predictions that disagree with the label.
pub fn error_rate(preds: &PredictionSet, ds: &LabeledDataset) -> Result<f64> {
    let labels = labels_checked(preds, ds)?;
    let wrong = preds.predictions.iter().zip(&labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Fraction of samples the old model got right and the new model gets wrong.
pub fn negative_flip_rate(
    old: &PredictionSet,
    new: &PredictionSet,
    ds: &LabeledDataset,
) -> Result<f64> {
    Ok(flip_report(old, new, ds)?.nfr())
}

/// Fraction of samples the old model got wrong and the new model gets right.
pub fn positive_flip_rate(
    old: &PredictionSet,
    new: &PredictionSet,
    ds: &LabeledDataset,
) -> Result<f64> {
    Ok(flip_report(old, new, ds)?.pfr())
}

/// Full flip accounting between two prediction sets over `ds`.
pub fn flip_report(
    old: &PredictionSet,
    new: &PredictionSet,
    ds: &LabeledDataset,
) -> Result<UpdateReport> {
    let labels = labels_checked(old, ds)?;
    new.check_alignment(ds)?;

    let logits_usable = match (&old.logits, &new.logits) {
        (Some(o), Some(n)) => !o.is_empty() && !n.is_empty() && o[0].len() == n[0].len(),
        _ => false,
    };

    let mut report = UpdateReport {
        old_tag: old.model_tag.clone(),
        new_tag: new.model_tag.clone(),
        samples: labels.len() as u64,
        err_old: 0,
        err_new: 0,
        neg_flips: 0,
        pos_flips: 0,
        has_margins: logits_usable,
        records: Vec::with_capacity(labels.len()),
    };

    for (i, (&label, &id)) in labels.iter().zip(&old.ids).enumerate() {
        let old_pred = old.predictions[i];
        let new_pred = new.predictions[i];
        let old_ok = old_pred == label;
        let new_ok = new_pred == label;
        let category = match (old_ok, new_ok) {
            (true, false) => FlipCategory::NegFlip,
            (false, true) => FlipCategory::PosFlip,
            (true, true) => FlipCategory::BothCorrect,
            (false, false) => FlipCategory::BothWrong,
        };
        if !old_ok {
            report.err_old += 1;
        }
        if !new_ok {
            report.err_new += 1;
        }
        match category {
            FlipCategory::NegFlip => report.neg_flips += 1,
            FlipCategory::PosFlip => report.pos_flips += 1,
            _ => {}
        }

        let old_margin = old.logits.as_ref().map(|l| top1_minus_top2(&l[i]));
        let displacement_norm = if logits_usable {
            let o = &old.logits.as_ref().unwrap()[i];
            let n = &new.logits.as_ref().unwrap()[i];
            let diff: Vec<f64> = o.iter().zip(n).map(|(a, b)| b - a).collect();
            Some(l2_norm(&diff))
        } else {
            None
        };
        report.records.push(FlipRecord {
            id,
            label,
            old_pred,
            new_pred,
            category,
            old_margin,
            displacement_norm,
        });
    }
    Ok(report)
}

fn top1_minus_top2(logits: &[f64]) -> f64 {
    if logits.len() < 2 {
        return 0.0;
    }
    let (mut top1, mut top2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in logits {
        if v > top1 {
            top2 = top1;
            top1 = v;
        } else if v > top2 {
            top2 = v;
        }
    }
    top1 - top2
}

/// Matrix of negative flip rates: entry `(i, j)` is the NFR of model `j`
/// treated as the new model with model `i` as the old one. The diagonal is
/// identically zero.
pub fn pairwise_nfr_matrix(preds: &[PredictionSet], ds: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    if preds.len() < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: preds.len() });
    }
    for p in preds {
        p.check_alignment(ds)?;
    }
    let n = preds.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                matrix[i][j] = flip_report(&preds[i], &preds[j], ds)?.nfr();
            }
        }
    }
    Ok(matrix)
}
