//! Flat dotted-key experiment configuration.
//!
//! The format is line-based: `key = value`, `#` comments, blank lines
//! ignored. Keys are dotted paths (`objective.ldi.xi = 0.5`). Unknown keys
//! are rejected so typos cannot silently change an experiment. The full key
//! schema is documented in the repository README.

use std::collections::{BTreeMap, BTreeSet};

use pct_core::losses::{LdiConfig, ObjectiveKind, ObjectiveSpec, SubsetMode};
use pct_core::model::Activation;
use pct_core::train::TrainSchedule;

use crate::error::{LabError, Result};
use crate::textfmt::fnv64_hex;

/// Parsed `key = value` map plus its canonical text and hash.
#[derive(Debug, Clone)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
    pub canonical: String,
    pub hash: String,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(LabError::config(format!("line {}: empty key", lineno + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(LabError::config(format!("duplicate key `{key}`")));
            }
        }
        let canonical: String =
            map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let hash = fnv64_hex(canonical.as_bytes());
        Ok(RawConfig { map, canonical, hash })
    }
}

struct KeyMap {
    map: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        if let Some(v) = self.map.get(key) {
            self.used.insert(key.to_string());
            Some(v.clone())
        } else {
            None
        }
    }

    fn take_str(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| LabError::config(format!("`{key}`: not a number: {v}"))),
        }
    }

    fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| LabError::config(format!("`{key}`: not an integer: {v}"))),
        }
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self.take_u64(key, default as u64)? as usize)
    }

    fn take_usize_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) if v.trim().is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<usize>()
                        .map_err(|_| LabError::config(format!("`{key}`: bad entry `{part}`")))
                })
                .collect(),
        }
    }

    fn unused_keys(&self) -> Vec<String> {
        self.map.keys().filter(|k| !self.used.contains(*k)).cloned().collect()
    }
}

/// Which synthetic task to generate.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs { classes: usize, dim: usize, per_class: usize, separation: f64, spread: f64, seed: u64 },
    Rings { classes: usize, per_class: usize, noise: f64, seed: u64 },
}

impl DatasetSpec {
    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::Blobs { classes, .. } | DatasetSpec::Rings { classes, .. } => *classes,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DatasetSpec::Blobs { dim, .. } => *dim,
            DatasetSpec::Rings { .. } => 2,
        }
    }
}

/// Optional data-growth restriction applied to the old model's training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthMode {
    None,
    HalfClasses,
    HalfSamples,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthSpec {
    pub mode: GrowthMode,
    pub fraction: f64,
    pub seed: u64,
}

/// Architecture named in the config; input/output widths bind at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    Online,
    Offline,
}

#[derive(Debug, Clone, Copy)]
pub struct SeedsSpec {
    pub old: u64,
    pub new: u64,
    pub teacher: u64,
    pub pool: u64,
    pub pool_b: u64,
    pub stats: u64,
}

#[derive(Debug, Clone)]
pub struct UpdateSpec {
    pub old_arch: String,
    pub new_arch: String,
    pub pairings: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainScheme {
    Chain,
    Radial,
    Fc,
}

impl ChainScheme {
    pub fn name(&self) -> &'static str {
        match self {
            ChainScheme::Chain => "chain",
            ChainScheme::Radial => "radial",
            ChainScheme::Fc => "fc",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub models: Vec<String>,
    pub scheme: ChainScheme,
}

#[derive(Debug, Clone)]
pub struct PoolSpec {
    pub arch: String,
    pub size: usize,
    pub arch_b: Option<String>,
    pub size_b: usize,
}

#[derive(Debug, Clone)]
pub struct StatsSpec {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub mc_samples: usize,
    pub probes: Vec<usize>,
    pub bin_width: f64,
    pub grid_points: usize,
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub growth: GrowthSpec,
    pub archs: BTreeMap<String, ArchSpec>,
    pub schedule: TrainSchedule,
    pub objective: ObjectiveSpec,
    pub objective_old: ObjectiveSpec,
    pub ensemble_m: usize,
    pub ensemble_mode: EnsembleMode,
    pub seeds: SeedsSpec,
    pub update: Option<UpdateSpec>,
    pub chain: Option<ChainSpec>,
    pub pool: Option<PoolSpec>,
    pub stats: StatsSpec,
    /// Hash of the canonical config text; stamped into every artifact.
    pub hash: String,
    /// Canonical `key = value` rendering, echoed into reports.
    pub canonical: String,
}

fn parse_objective(keys: &mut KeyMap, prefix: &str) -> Result<ObjectiveSpec> {
    let kind_str = keys.take_str(&format!("{prefix}.kind"), "ce_only");
    let kind = ObjectiveKind::parse(&kind_str)
        .ok_or_else(|| LabError::config(format!("`{prefix}.kind`: unknown objective `{kind_str}`")))?;
    let alpha = keys.take_f64(&format!("{prefix}.alpha"), 0.8)?;
    let lambda = keys.take_f64(&format!("{prefix}.lambda"), 0.5)?;
    let xi = keys.take_f64(&format!("{prefix}.ldi.xi"), 0.0)?;
    let p = keys.take_u64(&format!("{prefix}.ldi.p"), 2)? as u32;
    let top_k = keys.take_usize(&format!("{prefix}.ldi.top_k"), 0)?;
    let kd_temperature = keys.take_f64(&format!("{prefix}.kd.temperature"), 1.0)?;
    let fd_old_correct_weight = keys.take_f64(&format!("{prefix}.fd.old_correct_weight"), 1.0)?;
    let subset_mode = if top_k == 0 { SubsetMode::All } else { SubsetMode::TopK(top_k) };
    Ok(ObjectiveSpec {
        kind,
        alpha,
        lambda,
        ldi: LdiConfig { xi, p, subset_mode },
        kd_temperature,
        fd_old_correct_weight,
    })
}

fn parse_archs(keys: &mut KeyMap) -> Result<BTreeMap<String, ArchSpec>> {
    let names: BTreeSet<String> = keys
        .map
        .keys()
        .filter_map(|k| k.strip_prefix("arch."))
        .filter_map(|rest| rest.split('.').next().map(str::to_string))
        .collect();
    let mut archs = BTreeMap::new();
    for name in names {
        let hidden = keys.take_usize_list(&format!("arch.{name}.hidden"), &[16, 16])?;
        let act_str = keys.take_str(&format!("arch.{name}.activation"), "relu");
        let activation = Activation::parse(&act_str).ok_or_else(|| {
            LabError::config(format!("`arch.{name}.activation`: unknown activation `{act_str}`"))
        })?;
        archs.insert(name, ArchSpec { hidden, activation });
    }
    Ok(archs)
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<ExperimentConfig> {
        let raw = RawConfig::parse(text)?;
        Self::from_raw(raw)
    }

    pub fn from_raw(raw: RawConfig) -> Result<ExperimentConfig> {
        let mut keys = KeyMap { map: raw.map.clone(), used: BTreeSet::new() };

        let name = keys.take_str("experiment.name", "experiment");

        let dataset_kind = keys.take_str("dataset.kind", "blobs");
        let classes = keys.take_usize("dataset.classes", 3)?;
        let per_class = keys.take_usize("dataset.per_class", 200)?;
        let ds_seed = keys.take_u64("dataset.seed", 42)?;
        let dataset = match dataset_kind.as_str() {
            "blobs" => DatasetSpec::Blobs {
                classes,
                dim: keys.take_usize("dataset.dim", 2)?,
                per_class,
                separation: keys.take_f64("dataset.separation", 2.5)?,
                spread: keys.take_f64("dataset.spread", 1.0)?,
                seed: ds_seed,
            },
            "rings" => DatasetSpec::Rings {
                classes,
                per_class,
                noise: keys.take_f64("dataset.noise", 0.3)?,
                seed: ds_seed,
            },
            other => {
                return Err(LabError::config(format!("`dataset.kind`: unknown kind `{other}`")))
            }
        };

        let split_fraction = keys.take_f64("split.fraction", 0.8)?;
        let split_seed = keys.take_u64("split.seed", 7)?;

        let growth_mode = match keys.take_str("growth.mode", "none").as_str() {
            "none" => GrowthMode::None,
            "half_classes" => GrowthMode::HalfClasses,
            "half_samples" => GrowthMode::HalfSamples,
            other => return Err(LabError::config(format!("`growth.mode`: unknown mode `{other}`"))),
        };
        let growth = GrowthSpec {
            mode: growth_mode,
            fraction: keys.take_f64("growth.fraction", 0.5)?,
            seed: keys.take_u64("growth.seed", 11)?,
        };

        let archs = parse_archs(&mut keys)?;

        let schedule = TrainSchedule {
            epochs: keys.take_usize("schedule.epochs", 30)?,
            base_lr: keys.take_f64("schedule.base_lr", 0.01)?,
            momentum: keys.take_f64("schedule.momentum", 0.9)?,
            lr_decay_factor: keys.take_f64("schedule.lr_decay_factor", 0.1)?,
            decay_every: keys.take_usize("schedule.decay_every", 10)?,
            batch_size: keys.take_usize("schedule.batch_size", 32)?,
            shuffle_seed: 0,
        };

        let objective = parse_objective(&mut keys, "objective")?;
        let objective_old = parse_objective(&mut keys, "objective_old")?;

        let ensemble_m = keys.take_usize("ensemble.m", 4)?;
        let ensemble_mode = match keys.take_str("ensemble.mode", "online").as_str() {
            "online" => EnsembleMode::Online,
            "offline" => EnsembleMode::Offline,
            other => {
                return Err(LabError::config(format!("`ensemble.mode`: unknown mode `{other}`")))
            }
        };

        let seeds = SeedsSpec {
            old: keys.take_u64("seeds.old", 100)?,
            new: keys.take_u64("seeds.new", 200)?,
            teacher: keys.take_u64("seeds.teacher", 300)?,
            pool: keys.take_u64("seeds.pool", 1000)?,
            pool_b: keys.take_u64("seeds.pool_b", 2000)?,
            stats: keys.take_u64("seeds.stats", 9000)?,
        };

        let update = match (keys.take("update.old_arch"), keys.take("update.new_arch")) {
            (None, None) => None,
            (old_arch, new_arch) => {
                let old_arch = old_arch
                    .ok_or_else(|| LabError::config("`update.old_arch` missing"))?;
                let new_arch = new_arch
                    .ok_or_else(|| LabError::config("`update.new_arch` missing"))?;
                Some(UpdateSpec {
                    old_arch,
                    new_arch,
                    pairings: keys.take_usize("update.pairings", 1)?,
                })
            }
        };

        let chain = match keys.take("chain.models") {
            None => None,
            Some(models) => {
                let models: Vec<String> =
                    models.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                let scheme = match keys.take_str("chain.scheme", "chain").as_str() {
                    "chain" => ChainScheme::Chain,
                    "radial" => ChainScheme::Radial,
                    "fc" => ChainScheme::Fc,
                    other => {
                        return Err(LabError::config(format!(
                            "`chain.scheme`: unknown scheme `{other}`"
                        )))
                    }
                };
                Some(ChainSpec { models, scheme })
            }
        };

        let pool = match keys.take("pool.arch") {
            None => None,
            Some(arch) => Some(PoolSpec {
                arch,
                size: keys.take_usize("pool.size", 16)?,
                arch_b: keys.take("pool.arch_b"),
                size_b: keys.take_usize("pool.size_b", 16)?,
            }),
        };

        let stats = StatsSpec {
            sizes: keys.take_usize_list("stats.sizes", &[1, 2, 4])?,
            trials: keys.take_usize("stats.trials", 2000)?,
            mc_samples: keys.take_usize("stats.mc_samples", 5000)?,
            probes: keys.take_usize_list("stats.probes", &[])?,
            bin_width: keys.take_f64("stats.bin_width", 0.5)?,
            grid_points: keys.take_usize("stats.grid_points", 512)?,
        };

        let unused = keys.unused_keys();
        if !unused.is_empty() {
            return Err(LabError::config(format!("unknown keys: {}", unused.join(", "))));
        }

        let config = ExperimentConfig {
            name,
            dataset,
            split_fraction,
            split_seed,
            growth,
            archs,
            schedule,
            objective,
            objective_old,
            ensemble_m,
            ensemble_mode,
            seeds,
            update,
            chain,
            pool,
            stats,
            hash: raw.hash,
            canonical: raw.canonical,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return Err(LabError::config("`split.fraction` must be in (0, 1]"));
        }
        if self.growth.mode != GrowthMode::None
            && !(self.growth.fraction > 0.0 && self.growth.fraction <= 1.0)
        {
            return Err(LabError::config("`growth.fraction` must be in (0, 1]"));
        }
        let classes = self.dataset.classes();
        for (label, spec) in
            [("objective", &self.objective), ("objective_old", &self.objective_old)]
        {
            spec.validate(classes)
                .map_err(|e| LabError::config(format!("`{label}`: {e}")))?;
        }
        if self.ensemble_m < 1 {
            return Err(LabError::config("`ensemble.m` must be >= 1"));
        }
        if let Some(update) = &self.update {
            for arch in [&update.old_arch, &update.new_arch] {
                if !self.archs.contains_key(arch) {
                    return Err(LabError::config(format!("update references undefined arch `{arch}`")));
                }
            }
            if update.pairings < 1 {
                return Err(LabError::config("`update.pairings` must be >= 1"));
            }
        }
        if let Some(chain) = &self.chain {
            if chain.models.len() < 3 {
                return Err(LabError::config("`chain.models` needs at least 3 entries"));
            }
            for arch in &chain.models {
                if !self.archs.contains_key(arch) {
                    return Err(LabError::config(format!("chain references undefined arch `{arch}`")));
                }
            }
        }
        if let Some(pool) = &self.pool {
            if !self.archs.contains_key(&pool.arch) {
                return Err(LabError::config(format!("pool references undefined arch `{}`", pool.arch)));
            }
            if pool.size < 2 {
                return Err(LabError::config("`pool.size` must be >= 2"));
            }
            if let Some(b) = &pool.arch_b {
                if !self.archs.contains_key(b) {
                    return Err(LabError::config(format!("pool references undefined arch `{b}`")));
                }
                if pool.size_b < 2 {
                    return Err(LabError::config("`pool.size_b` must be >= 2"));
                }
            }
        }
        if self.stats.bin_width <= 0.0 {
            return Err(LabError::config("`stats.bin_width` must be > 0"));
        }
        Ok(())
    }

    /// Builds the concrete architecture for a named spec, binding the
    /// dataset's feature and class widths.
    pub fn bind_arch(&self, name: &str, input_dim: usize, output_dim: usize) -> Result<pct_core::model::MlpArch> {
        let spec = self
            .archs
            .get(name)
            .ok_or_else(|| LabError::config(format!("undefined arch `{name}`")))?;
        Ok(pct_core::model::MlpArch::new(
            input_dim,
            spec.hidden.clone(),
            output_dim,
            spec.activation,
        ))
    }
}

/// Checks that the half-open seed ranges `[base, base + len)` used by the
/// named roles never overlap. Deliberate teacher sharing is expressed as a
/// single range, so any overlap here is a config mistake.
pub fn check_seed_ranges(ranges: &[(&str, u64, u64)]) -> Result<()> {
    for (i, a) in ranges.iter().enumerate() {
        for b in ranges.iter().skip(i + 1) {
            let (a_start, a_end) = (a.1, a.1 + a.2);
            let (b_start, b_end) = (b.1, b.1 + b.2);
            if a_start < b_end && b_start < a_end {
                return Err(LabError::config(format!(
                    "seed ranges overlap: {} [{a_start}, {a_end}) vs {} [{b_start}, {b_end})",
                    a.0, b.0
                )));
            }
        }
    }
    Ok(())
}
