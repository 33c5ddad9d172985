//! The loss family used during model updates.
//!
//! Every loss returns `(value, gradient with respect to the new model's
//! logits)`. Reference logits (old models, teacher ensembles) never receive
//! gradient: they enter these functions as plain data.
//!
//! The central piece is logit difference inhibition: a hinged penalty
//! `sum_{k in K} max(0, |new_k - ref_k| - xi)^p` over an inhibition class
//! subset `K`, which tolerates per-class logit drift up to `xi` instead of
//! forcing an exact match the way squared-distance distillation does. With
//! `xi = 0`, `p = 2` and `K` = all classes it degrades to squared-L2 logit
//! matching.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::numerics::{log_sum_exp, softmax};

/// Which classes the inhibition penalty covers.
///
/// The subset is always computed from the *reference* logits so it stays a
/// stable target while the new model's logits move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    /// All classes `0..C`.
    All,
    /// The K classes with the highest reference logits, ties broken toward
    /// the lowest class index.
    TopK(usize),
}

/// Parameters of the logit-difference-inhibition penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdiConfig {
    /// Truncation threshold: per-class differences below `xi` are tolerated.
    pub xi: f64,
    /// Hinge exponent; 2 in practice, 1 also supported.
    pub p: u32,
    pub subset_mode: SubsetMode,
}

impl Default for LdiConfig {
    fn default() -> Self {
        LdiConfig { xi: 0.0, p: 2, subset_mode: SubsetMode::All }
    }
}

impl LdiConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.xi < 0.0 {
            return Err(Error::InvalidParameter { name: "xi", reason: "must be >= 0" });
        }
        if self.p < 1 {
            return Err(Error::InvalidParameter { name: "p", reason: "must be >= 1" });
        }
        if let SubsetMode::TopK(k) = self.subset_mode {
            if k < 1 || k > num_classes {
                return Err(Error::InvalidParameter { name: "top_k", reason: "must be in [1, C]" });
            }
        }
        Ok(())
    }
}

/// Top-level objective selector for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Plain cross-entropy (no treatment).
    CeOnly,
    /// CE mixed with inhibition toward one or more frozen single models.
    LdiSingle,
    /// CE mixed with inhibition toward an ensemble's averaged logits.
    Elodi,
    /// Like `Elodi`, plus an extra inhibition term toward an untreated
    /// legacy model, mixed by `lambda`.
    ElodiPlusLegacyLdi,
    /// CE mixed with temperature-scaled distribution matching.
    Kd,
    /// CE mixed with focal logit matching (extra weight where the reference
    /// classified correctly).
    Fd,
}

impl ObjectiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::CeOnly => "ce_only",
            ObjectiveKind::LdiSingle => "ldi_single",
            ObjectiveKind::Elodi => "elodi",
            ObjectiveKind::ElodiPlusLegacyLdi => "elodi_plus_legacy_ldi",
            ObjectiveKind::Kd => "kd",
            ObjectiveKind::Fd => "fd",
        }
    }

    pub fn parse(s: &str) -> Option<ObjectiveKind> {
        Some(match s {
            "ce_only" => ObjectiveKind::CeOnly,
            "ldi_single" => ObjectiveKind::LdiSingle,
            "elodi" => ObjectiveKind::Elodi,
            "elodi_plus_legacy_ldi" => ObjectiveKind::ElodiPlusLegacyLdi,
            "kd" => ObjectiveKind::Kd,
            "fd" => ObjectiveKind::Fd,
            _ => return None,
        })
    }

    /// Whether this objective consumes an ensemble teacher.
    pub fn needs_ensemble(&self) -> bool {
        matches!(self, ObjectiveKind::Elodi | ObjectiveKind::ElodiPlusLegacyLdi)
    }

    /// Whether this objective consumes frozen single-model references.
    pub fn needs_ancestors(&self) -> bool {
        matches!(
            self,
            ObjectiveKind::LdiSingle
                | ObjectiveKind::ElodiPlusLegacyLdi
                | ObjectiveKind::Kd
                | ObjectiveKind::Fd
        )
    }
}

/// Full objective description: kind plus every knob the loss family uses.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Weight of the reference term: total = (1-alpha) CE + alpha * ref term.
    pub alpha: f64,
    /// Split between ensemble and legacy terms for `ElodiPlusLegacyLdi`.
    pub lambda: f64,
    pub ldi: LdiConfig,
    pub kd_temperature: f64,
    /// Extra weight applied on top of the base weight 1 when the reference
    /// classified the sample correctly (focal matching).
    pub fd_old_correct_weight: f64,
}

impl ObjectiveSpec {
    pub fn ce_only() -> Self {
        ObjectiveSpec {
            kind: ObjectiveKind::CeOnly,
            alpha: 0.0,
            lambda: 1.0,
            ldi: LdiConfig::default(),
            kd_temperature: 1.0,
            fd_old_correct_weight: 1.0,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter { name: "alpha", reason: "must be in [0, 1]" });
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter { name: "lambda", reason: "must be in [0, 1]" });
        }
        if self.kd_temperature <= 0.0 || self.kd_temperature.is_nan() {
            return Err(Error::InvalidParameter { name: "kd_temperature", reason: "must be > 0" });
        }
        if self.fd_old_correct_weight < 0.0 {
            return Err(Error::InvalidParameter {
                name: "fd_old_correct_weight",
                reason: "must be >= 0",
            });
        }
        self.ldi.validate(num_classes)
    }
}

/// Cross-entropy from raw logits: `logsumexp(logits) - logits[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange { label, num_classes: logits.len() });
    }
    let lse = log_sum_exp(logits)?;
    let loss = lse - logits[label];
    let mut grad = softmax(logits)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Classes whose logit difference the penalty inhibits, sorted ascending.
pub fn select_inhibition_set(reference_logits: &[f64], config: &LdiConfig) -> Result<Vec<usize>> {
    let c = reference_logits.len();
    match config.subset_mode {
        SubsetMode::All => Ok((0..c).collect()),
        SubsetMode::TopK(k) => {
            if k > c {
                return Err(Error::InvalidParameter { name: "top_k", reason: "K exceeds C" });
            }
            let mut order: Vec<usize> = (0..c).collect();
            // Stable ordering: higher logit first, lower index wins ties.
            order.sort_by(|&a, &b| {
                reference_logits[b]
                    .partial_cmp(&reference_logits[a])
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut set: Vec<usize> = order[..k].to_vec();
            set.sort_unstable();
            Ok(set)
        }
    }
}

/// Logit difference inhibition against a frozen reference.
///
/// `loss = sum_{k in K} max(0, |new_k - ref_k| - xi)^p`. The gradient at the
/// hinge kink (`|d| == xi`) is defined as zero.
pub fn ldi(new_logits: &[f64], ref_logits: &[f64], config: &LdiConfig) -> Result<(f64, Vec<f64>)> {
    if new_logits.len() != ref_logits.len() {
        return Err(Error::DimensionMismatch {
            context: "ldi logits",
            expected: new_logits.len(),
            got: ref_logits.len(),
        });
    }
    config.validate(new_logits.len())?;
    let subset = select_inhibition_set(ref_logits, config)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; new_logits.len()];
    for &k in &subset {
        let d = new_logits[k] - ref_logits[k];
        let excess = fmath::abs(d) - config.xi;
        if excess > 0.0 {
            loss += fmath::powi(excess, config.p);
            let sign = if d > 0.0 { 1.0 } else { -1.0 };
            grad[k] = config.p as f64 * fmath::powi(excess, config.p - 1) * sign;
        }
    }
    Ok((loss, grad))
}

/// Averaged logits of an ensemble's members for one sample.
pub fn average_logits(member_logits: &[Vec<f64>]) -> Result<Vec<f64>> {
    if member_logits.is_empty() {
        return Err(Error::EmptyInput("member logits"));
    }
    let c = member_logits[0].len();
    let mut avg = vec![0.0; c];
    for logits in member_logits {
        if logits.len() != c {
            return Err(Error::DimensionMismatch {
                context: "member logits",
                expected: c,
                got: logits.len(),
            });
        }
        for (a, &v) in avg.iter_mut().zip(logits) {
            *a += v;
        }
    }
    let m = member_logits.len() as f64;
    for a in avg.iter_mut() {
        *a /= m;
    }
    Ok(avg)
}

/// Convex combination `(1 - alpha) * ce + alpha * inhibition`, applied to
/// both losses and gradients.
pub fn combined_objective(
    ce: (f64, Vec<f64>),
    inhibition: (f64, Vec<f64>),
    alpha: f64,
) -> (f64, Vec<f64>) {
    let loss = (1.0 - alpha) * ce.0 + alpha * inhibition.0;
    let grad = ce
        .1
        .iter()
        .zip(&inhibition.1)
        .map(|(g_ce, g_in)| (1.0 - alpha) * g_ce + alpha * g_in)
        .collect();
    (loss, grad)
}

/// Convex combination `lambda * ensemble_term + (1 - lambda) * legacy_term`
/// used when bridging to an untreated legacy model.
pub fn legacy_objective(
    ensemble_term: (f64, Vec<f64>),
    legacy_term: (f64, Vec<f64>),
    lambda: f64,
) -> (f64, Vec<f64>) {
    let loss = lambda * ensemble_term.0 + (1.0 - lambda) * legacy_term.0;
    let grad = ensemble_term
        .1
        .iter()
        .zip(&legacy_term.1)
        .map(|(g_e, g_l)| lambda * g_e + (1.0 - lambda) * g_l)
        .collect();
    (loss, grad)
}

/// Temperature-scaled distribution matching:
/// `tau^2 * KL(softmax(ref/tau) || softmax(new/tau))`.
pub fn kd(new_logits: &[f64], ref_logits: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    if new_logits.len() != ref_logits.len() {
        return Err(Error::DimensionMismatch {
            context: "kd logits",
            expected: new_logits.len(),
            got: ref_logits.len(),
        });
    }
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::InvalidParameter { name: "temperature", reason: "must be > 0" });
    }
    let tau = temperature;
    let scaled_ref: Vec<f64> = ref_logits.iter().map(|v| v / tau).collect();
    let scaled_new: Vec<f64> = new_logits.iter().map(|v| v / tau).collect();
    let p = softmax(&scaled_ref)?;
    let q = softmax(&scaled_new)?;
    let lse_new = log_sum_exp(&scaled_new)?;
    // KL(p || q) = sum p (ln p - ln q), with ln q = scaled_new - lse_new.
    let mut kl = 0.0;
    for k in 0..p.len() {
        if p[k] > 0.0 {
            kl += p[k] * (fmath::ln(p[k]) - (scaled_new[k] - lse_new));
        }
    }
    let loss = tau * tau * kl.max(0.0);
    // d loss / d new_k = tau * (q_k - p_k)
    let grad = q.iter().zip(&p).map(|(qk, pk)| tau * (qk - pk)).collect();
    Ok((loss, grad))
}

/// Focal logit matching:
/// `(base + focal * [reference correct]) * sum_k (new_k - ref_k)^2`.
pub fn fd(
    new_logits: &[f64],
    ref_logits: &[f64],
    old_correct: bool,
    base_weight: f64,
    focal_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    if new_logits.len() != ref_logits.len() {
        return Err(Error::DimensionMismatch {
            context: "fd logits",
            expected: new_logits.len(),
            got: ref_logits.len(),
        });
    }
    if base_weight < 0.0 || focal_weight < 0.0 {
        return Err(Error::InvalidParameter { name: "fd weights", reason: "must be >= 0" });
    }
    let weight = base_weight + if old_correct { focal_weight } else { 0.0 };
    let mut loss = 0.0;
    let mut grad = vec![0.0; new_logits.len()];
    for k in 0..new_logits.len() {
        let d = new_logits[k] - ref_logits[k];
        loss += weight * d * d;
        grad[k] = 2.0 * weight * d;
    }
    Ok((loss, grad))
}
