//! Synthetic dataset generation and split protocols.
//!
//! Generation is a pure function of its arguments: the same seed always
//! produces the bit-identical dataset. Splits preserve the original sample
//! ids so predictions from different models stay alignable.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::rng::{stream, Rng};

const TAU: f64 = core::f64::consts::TAU;

/// One labeled feature vector with a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    pub label: usize,
}

/// A dataset of feature vectors with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub num_classes: usize,
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample ids in storage order.
    pub fn ids(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.id).collect()
    }

    /// Labels in storage order.
    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Returns the sample with the given id, if present.
    pub fn by_id(&self, id: usize) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Keeps only samples whose label is below `num_classes`, preserving ids.
    ///
    /// Used to evaluate an old model trained on a class-prefix subset against
    /// a new model trained on all classes.
    pub fn restrict_to_classes(&self, num_classes: usize) -> LabeledDataset {
        LabeledDataset {
            num_classes,
            dim: self.dim,
            samples: self.samples.iter().filter(|s| s.label < num_classes).cloned().collect(),
        }
    }
}

/// How to split a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Part A: the lowest `ceil(fraction * C)` classes (labels form a prefix,
    /// so the compact relabeling is the identity). Part B: the full set.
    HalfClasses,
    /// Part A: a seeded per-class fraction of samples (floored). Part B: the
    /// full set.
    HalfSamples,
    /// Disjoint stratified split; per-class counts round toward part A.
    TrainTest,
}

/// Split parameters.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub fraction: f64,
    pub seed: u64,
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "fraction", reason: "must be in (0, 1]" })
    }
}

/// Gaussian blobs: `classes` isotropic clusters in `dim` dimensions with
/// centers at pairwise distance >= `separation` and per-class std `spread`.
pub fn make_blobs(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::InvalidParameter { name: "classes", reason: "must be >= 2" });
    }
    if dim < 2 {
        return Err(Error::InvalidParameter { name: "dim", reason: "must be >= 2" });
    }
    if n_per_class < 1 {
        return Err(Error::InvalidParameter { name: "n_per_class", reason: "must be >= 1" });
    }
    if separation <= 0.0 || separation.is_nan() {
        return Err(Error::InvalidParameter { name: "separation", reason: "must be > 0" });
    }
    if spread <= 0.0 || spread.is_nan() {
        return Err(Error::InvalidParameter { name: "spread", reason: "must be > 0" });
    }

    // Rejection-sample each center inside an origin-centered box wide enough
    // that the required separation is comfortably feasible. Centering keeps
    // feature magnitudes near zero-mean, which the training recipe assumes.
    let side = separation * classes as f64;
    let mut rng = Rng::new(seed, stream::DATA_CENTERS);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    const MAX_ATTEMPTS: usize = 1000;
    for _ in 0..classes {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let candidate: Vec<f64> =
                (0..dim).map(|_| (rng.next_f64() - 0.5) * side).collect();
            let ok = centers.iter().all(|c| {
                let d2: f64 = c.iter().zip(&candidate).map(|(a, b)| (a - b) * (a - b)).sum();
                fmath::sqrt(d2) >= separation
            });
            if ok {
                centers.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::CenterPlacementFailed { attempts: MAX_ATTEMPTS });
        }
    }

    let mut samples = Vec::with_capacity(classes * n_per_class);
    let mut id = 0;
    for (label, center) in centers.iter().enumerate() {
        let mut class_rng = Rng::new(seed, stream::data_class(label));
        for _ in 0..n_per_class {
            let features: Vec<f64> =
                center.iter().map(|&c| c + spread * class_rng.next_gaussian()).collect();
            samples.push(Sample { id, features, label });
            id += 1;
        }
    }
    Ok(LabeledDataset { num_classes: classes, dim, samples })
}

/// Concentric rings in 2D: class `k` lies on radius `k + 1` with radial
/// Gaussian noise of std `noise`. Not linearly separable, so hidden layers
/// matter.
pub fn make_rings(
    classes: usize,
    n_per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::InvalidParameter { name: "classes", reason: "must be >= 2" });
    }
    if n_per_class < 1 {
        return Err(Error::InvalidParameter { name: "n_per_class", reason: "must be >= 1" });
    }
    if noise < 0.0 {
        return Err(Error::InvalidParameter { name: "noise", reason: "must be >= 0" });
    }
    let mut samples = Vec::with_capacity(classes * n_per_class);
    let mut id = 0;
    for label in 0..classes {
        let mut class_rng = Rng::new(seed, stream::data_class(label));
        let base_radius = (label + 1) as f64;
        for _ in 0..n_per_class {
            let angle = TAU * class_rng.next_f64();
            let radius = base_radius + noise * class_rng.next_gaussian();
            samples.push(Sample {
                id,
                features: vec![radius * fmath::cos(angle), radius * fmath::sin(angle)],
                label,
            });
            id += 1;
        }
    }
    Ok(LabeledDataset { num_classes: classes, dim: 2, samples })
}

/// Splits a dataset according to `spec`; see [`SplitMode`] for semantics.
pub fn split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    check_fraction(spec.fraction)?;
    match spec.mode {
        SplitMode::HalfClasses => {
            let kept = ceil_frac(spec.fraction, ds.num_classes).max(1);
            let part_a = LabeledDataset {
                num_classes: kept,
                dim: ds.dim,
                samples: ds.samples.iter().filter(|s| s.label < kept).cloned().collect(),
            };
            Ok((part_a, ds.clone()))
        }
        SplitMode::HalfSamples => {
            let selected = select_stratified(ds, spec, FracRounding::Floor)?;
            let part_a = subset_by_ids(ds, &selected);
            Ok((part_a, ds.clone()))
        }
        SplitMode::TrainTest => {
            let selected = select_stratified(ds, spec, FracRounding::Ceil)?;
            let part_a = subset_by_ids(ds, &selected);
            let part_b = LabeledDataset {
                num_classes: ds.num_classes,
                dim: ds.dim,
                samples: ds
                    .samples
                    .iter()
                    .filter(|s| selected.binary_search(&s.id).is_err())
                    .cloned()
                    .collect(),
            };
            Ok((part_a, part_b))
        }
    }
}

enum FracRounding {
    Floor,
    Ceil,
}

/// Snaps products like `0.3 * 200 = 59.999999999999977` back onto the
/// integer they mathematically are, so rounding direction is decided by the
/// fraction, not by float noise.
fn snap(raw: f64) -> f64 {
    let nearest = fmath::floor(raw + 0.5);
    if fmath::abs(raw - nearest) < 1e-9 {
        nearest
    } else {
        raw
    }
}

fn floor_frac(fraction: f64, n: usize) -> usize {
    fmath::floor(snap(fraction * n as f64)) as usize
}

fn ceil_frac(fraction: f64, n: usize) -> usize {
    let raw = snap(fraction * n as f64);
    let f = fmath::floor(raw);
    if raw - f > 0.0 {
        f as usize + 1
    } else {
        f as usize
    }
}

/// Seeded per-class selection; returns the chosen ids, sorted.
fn select_stratified(
    ds: &LabeledDataset,
    spec: &SplitSpec,
    rounding: FracRounding,
) -> Result<Vec<usize>> {
    let mut selected = Vec::new();
    for class in 0..ds.num_classes {
        let mut ids: Vec<usize> =
            ds.samples.iter().filter(|s| s.label == class).map(|s| s.id).collect();
        let take = match rounding {
            FracRounding::Floor => floor_frac(spec.fraction, ids.len()),
            FracRounding::Ceil => ceil_frac(spec.fraction, ids.len()),
        };
        if take == 0 {
            return Err(Error::EmptyClassInSplit { class });
        }
        let mut rng = Rng::new(spec.seed, stream::split_class(class));
        rng.shuffle(&mut ids);
        selected.extend_from_slice(&ids[..take]);
    }
    selected.sort_unstable();
    Ok(selected)
}

fn subset_by_ids(ds: &LabeledDataset, sorted_ids: &[usize]) -> LabeledDataset {
    LabeledDataset {
        num_classes: ds.num_classes,
        dim: ds.dim,
        samples: ds
            .samples
            .iter()
            .filter(|s| sorted_ids.binary_search(&s.id).is_ok())
            .cloned()
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::l2_norm;

    #[test]
    fn blobs_counts_and_ids() {
        let ds = make_blobs(3, 2, 50, 6.0, 1.0, 1).unwrap();
        assert_eq!(ds.len(), 150);
        assert_eq!(ds.ids(), (0..150).collect::<Vec<_>>());
        assert_eq!(ds.class_counts(), vec![50, 50, 50]);
    }

    #[test]
    fn blobs_deterministic() {
        let a = make_blobs(4, 3, 20, 5.0, 0.5, 77).unwrap();
        let b = make_blobs(4, 3, 20, 5.0, 0.5, 77).unwrap();
        assert_eq!(a, b);
        let c = make_blobs(4, 3, 20, 5.0, 0.5, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blobs_nearest_center_oracle() {
        // Well-separated blobs: a nearest-center classifier gets < 1% error.
        let ds = make_blobs(2, 2, 100, 6.0, 1.0, 5).unwrap();
        let mut centers = vec![vec![0.0; 2]; 2];
        let counts = ds.class_counts();
        for s in &ds.samples {
            for (c, x) in centers[s.label].iter_mut().zip(&s.features) {
                *c += x;
            }
        }
        for (center, &n) in centers.iter_mut().zip(&counts) {
            for c in center.iter_mut() {
                *c /= n as f64;
            }
        }
        let errors = ds
            .samples
            .iter()
            .filter(|s| {
                let dists: Vec<f64> = centers
                    .iter()
                    .map(|c| {
                        l2_norm(&c.iter().zip(&s.features).map(|(a, b)| a - b).collect::<Vec<_>>())
                    })
                    .collect();
                let pred = if dists[0] <= dists[1] { 0 } else { 1 };
                pred != s.label
            })
            .count();
        assert!((errors as f64) / (ds.len() as f64) < 0.01, "{errors} errors");
    }

    #[test]
    fn blobs_rejects_bad_parameters() {
        assert!(make_blobs(1, 2, 10, 1.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 1, 10, 1.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 2, 0, 1.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 2, 10, 0.0, 1.0, 0).is_err());
        assert!(make_blobs(2, 2, 10, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn rings_exact_radius_without_noise() {
        let ds = make_rings(3, 40, 0.0, 9).unwrap();
        for s in &ds.samples {
            let r = l2_norm(&s.features);
            assert!((r - (s.label + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rings_deterministic() {
        assert_eq!(make_rings(2, 30, 0.05, 4).unwrap(), make_rings(2, 30, 0.05, 4).unwrap());
    }

    #[test]
    fn half_classes_keeps_lowest_prefix() {
        let ds = make_blobs(4, 2, 10, 5.0, 0.5, 2).unwrap();
        let spec = SplitSpec { mode: SplitMode::HalfClasses, fraction: 0.5, seed: 0 };
        let (a, b) = split(&ds, &spec).unwrap();
        assert_eq!(a.num_classes, 2);
        assert!(a.samples.iter().all(|s| s.label < 2));
        assert_eq!(a.len(), 20);
        assert_eq!(b, ds);
        // Labels of part A form the compact prefix {0, 1} unchanged.
        let mut labels = a.labels();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels, vec![0, 1]);
    }

    #[test]
    fn half_samples_takes_fraction_per_class() {
        let ds = make_blobs(3, 2, 100, 5.0, 0.5, 2).unwrap();
        let spec = SplitSpec { mode: SplitMode::HalfSamples, fraction: 0.5, seed: 11 };
        let (a, b) = split(&ds, &spec).unwrap();
        assert_eq!(a.class_counts(), vec![50, 50, 50]);
        assert_eq!(b, ds);
    }

    #[test]
    fn half_samples_zero_per_class_errors() {
        let ds = make_blobs(3, 2, 3, 5.0, 0.5, 2).unwrap();
        let spec = SplitSpec { mode: SplitMode::HalfSamples, fraction: 0.2, seed: 11 };
        assert!(matches!(split(&ds, &spec), Err(Error::EmptyClassInSplit { .. })));
    }

    #[test]
    fn train_test_partitions_disjointly() {
        let ds = make_blobs(3, 2, 50, 5.0, 0.5, 8).unwrap();
        let spec = SplitSpec { mode: SplitMode::TrainTest, fraction: 0.8, seed: 21 };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(train.len(), 120);
        assert_eq!(test.len(), 30);
        let mut all: Vec<usize> = train.ids();
        all.extend(test.ids());
        all.sort_unstable();
        assert_eq!(all, (0..150).collect::<Vec<_>>());
        assert_eq!(train.class_counts(), vec![40, 40, 40]);
    }

    #[test]
    fn train_test_rounds_toward_train() {
        let ds = make_blobs(2, 2, 5, 5.0, 0.5, 8).unwrap();
        let spec = SplitSpec { mode: SplitMode::TrainTest, fraction: 0.5, seed: 21 };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(train.class_counts(), vec![3, 3]);
        assert_eq!(test.class_counts(), vec![2, 2]);
    }

    #[test]
    fn fraction_rounding_survives_float_noise() {
        // 0.3 * 200 and 0.7 * 10 are not exact in binary; the split counts
        // must still match the mathematical values.
        let ds = make_blobs(2, 2, 200, 5.0, 0.5, 8).unwrap();
        let spec = SplitSpec { mode: SplitMode::TrainTest, fraction: 0.3, seed: 3 };
        let (train, _) = split(&ds, &spec).unwrap();
        assert_eq!(train.class_counts(), vec![60, 60]);

        let ds = make_blobs(2, 2, 10, 5.0, 0.5, 8).unwrap();
        let spec = SplitSpec { mode: SplitMode::HalfSamples, fraction: 0.7, seed: 3 };
        let (a, _) = split(&ds, &spec).unwrap();
        assert_eq!(a.class_counts(), vec![7, 7]);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = make_blobs(2, 2, 4, 5.0, 0.5, 8).unwrap();
        for f in [0.0, -0.5, 1.5] {
            let spec = SplitSpec { mode: SplitMode::TrainTest, fraction: f, seed: 0 };
            assert!(split(&ds, &spec).is_err());
        }
    }

    #[test]
    fn restrict_to_classes_filters_labels() {
        let ds = make_blobs(4, 2, 10, 5.0, 0.5, 2).unwrap();
        let r = ds.restrict_to_classes(2);
        assert_eq!(r.len(), 20);
        assert!(r.samples.iter().all(|s| s.label < 2));
    }
}
