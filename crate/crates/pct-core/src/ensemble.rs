//! Frozen model ensembles serving as reference-logit teachers.
//!
//! A teacher is a set of independently trained members plus an averaging
//! rule. Logits come either from forwarding every member (online) or from a
//! prebuilt per-sample cache (offline). Without input augmentation the two
//! are bit-identical.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::average_logits;
use crate::model::{forward_single, init_mlp, MlpArch, MlpModel};
use crate::train::{train, References, TrainSchedule};

/// Map from sample id to averaged teacher logits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogitsCache {
    entries: BTreeMap<usize, Vec<f64>>,
}

impl LogitsCache {
    pub fn new() -> Self {
        LogitsCache { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: usize, logits: Vec<f64>) {
        self.entries.insert(id, logits);
    }

    pub fn get(&self, id: usize) -> Option<&Vec<f64>> {
        self.entries.get(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&usize, &Vec<f64>)> {
        self.entries.iter()
    }
}

/// Where a teacher's logits come from during training.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherMode {
    /// Forward every member at lookup time.
    Online,
    /// Look averaged logits up by sample id.
    Offline(LogitsCache),
}

/// A frozen ensemble of `m` models used as the reference for inhibition
/// losses. Members may differ in architecture as long as they agree on the
/// number of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTeacher {
    members: Vec<MlpModel>,
    mode: TeacherMode,
}

impl EnsembleTeacher {
    /// Wraps already-trained models; all members must share `output_dim`.
    pub fn from_members(members: Vec<MlpModel>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyInput("ensemble members"));
        }
        let c = members[0].arch.output_dim;
        for m in &members {
            if m.arch.output_dim != c {
                return Err(Error::DimensionMismatch {
                    context: "ensemble member output_dim",
                    expected: c,
                    got: m.arch.output_dim,
                });
            }
        }
        Ok(EnsembleTeacher { members, mode: TeacherMode::Online })
    }

    pub fn members(&self) -> &[MlpModel] {
        &self.members
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn output_dim(&self) -> usize {
        self.members[0].arch.output_dim
    }

    pub fn mode(&self) -> &TeacherMode {
        &self.mode
    }

    /// Switches the teacher to offline lookups backed by `cache`.
    pub fn with_offline_cache(mut self, cache: LogitsCache) -> Self {
        self.mode = TeacherMode::Offline(cache);
        self
    }

    /// Averaged member logits computed by forwarding every member.
    pub fn online_logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        let member_logits: Result<Vec<Vec<f64>>> =
            self.members.iter().map(|m| forward_single(m, features)).collect();
        average_logits(&member_logits?)
    }

    /// Teacher logits for one sample: online forward or cache lookup,
    /// depending on the mode.
    pub fn logits_for(&self, id: usize, features: &[f64]) -> Result<Vec<f64>> {
        match &self.mode {
            TeacherMode::Online => self.online_logits(features),
            TeacherMode::Offline(cache) => cache.get(id).cloned().ok_or(Error::CacheMiss { id }),
        }
    }
}

/// Trains `n` independent cross-entropy models with seeds `base_seed + i`
/// used for both initialization and shuffling.
pub fn train_independent_models(
    arch: &MlpArch,
    ds: &LabeledDataset,
    schedule: &TrainSchedule,
    n: usize,
    base_seed: u64,
) -> Result<Vec<MlpModel>> {
    let mut models = Vec::with_capacity(n);
    for i in 0..n {
        let seed = base_seed + i as u64;
        let mut model = init_mlp(arch, seed)?;
        let mut sched = schedule.clone();
        sched.shuffle_seed = seed;
        train(&mut model, ds, &sched, &crate::losses::ObjectiveSpec::ce_only(), &References::none())?;
        models.push(model);
    }
    Ok(models)
}

/// Trains an `m`-member homogeneous teacher on `ds`.
pub fn train_ensemble(
    arch: &MlpArch,
    ds: &LabeledDataset,
    schedule: &TrainSchedule,
    m: usize,
    base_seed: u64,
) -> Result<EnsembleTeacher> {
    if m < 1 {
        return Err(Error::InvalidParameter { name: "m", reason: "must be >= 1" });
    }
    EnsembleTeacher::from_members(train_independent_models(arch, ds, schedule, m, base_seed)?)
}

/// One averaged logit vector per sample id of `ds`.
pub fn build_offline_cache(teacher: &EnsembleTeacher, ds: &LabeledDataset) -> Result<LogitsCache> {
    let mut cache = LogitsCache::new();
    for s in &ds.samples {
        cache.insert(s.id, teacher.online_logits(&s.features)?);
    }
    Ok(cache)
}
