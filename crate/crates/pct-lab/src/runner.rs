//! Command implementations behind the CLI.
//!
//! Every command is a deterministic function of (config, seed offset), so
//! reruns produce byte-identical reports and CSVs. Checkpoints embed the
//! producing config's hash; a command refuses to reuse an artifact whose
//! hash does not match its own config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pct_core::data::{split, LabeledDataset, SplitMode, SplitSpec};
use pct_core::ensemble::{build_offline_cache, EnsembleTeacher};
use pct_core::losses::{ObjectiveKind, ObjectiveSpec};
use pct_core::metrics::{flip_report, pairwise_nfr_matrix, PredictionSet};
use pct_core::model::{arch_tag, init_mlp, MlpArch, MlpModel};
use pct_core::train::{train, References, TrainHistory, TrainSchedule};

use crate::artifacts::{
    cache_from_csv, cache_to_csv, dataset_to_csv, flips_to_csv, manifest_from_file,
    nfr_matrix_to_csv, report_from_text, report_to_text, write_file, Manifest, ReportDoc,
};
use crate::checkpoint;
use crate::config::{
    check_seed_ranges, ChainScheme, DatasetSpec, EnsembleMode, ExperimentConfig, GrowthMode,
};
use crate::error::{LabError, Result};
use crate::textfmt::{csv_line, f64_to_decimal, rate4};

/// Common invocation options.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed_offset: u64,
    pub jobs: usize,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> RunOptions {
        RunOptions { out_dir: out_dir.into(), seed_offset: 0, jobs: 1 }
    }
}

struct RunCtx<'a> {
    cfg: &'a ExperimentConfig,
    out_dir: PathBuf,
    opts: RunOptions,
    manifest: Manifest,
    started: Instant,
}

impl<'a> RunCtx<'a> {
    fn new(command: &str, cfg: &'a ExperimentConfig, opts: &RunOptions) -> RunCtx<'a> {
        RunCtx {
            cfg,
            out_dir: opts.out_dir.clone(),
            opts: opts.clone(),
            manifest: Manifest::new(command, &cfg.hash, opts.seed_offset),
            started: Instant::now(),
        }
    }

    fn write_artifact(&mut self, rel: &str, contents: &str) -> Result<()> {
        write_file(&self.out_dir.join(rel), contents)?;
        self.manifest.add_artifact(rel);
        Ok(())
    }

    fn finish(mut self, filename: &str) -> Result<PathBuf> {
        self.manifest.wall_clock_ms = self.started.elapsed().as_millis();
        self.manifest.write(&self.out_dir, filename)
    }

    /// Full dataset plus its train/test split.
    fn datasets(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let full = match &self.cfg.dataset {
            DatasetSpec::Blobs { classes, dim, per_class, separation, spread, seed } => {
                pct_core::data::make_blobs(*classes, *dim, *per_class, *separation, *spread, *seed)?
            }
            DatasetSpec::Rings { classes, per_class, noise, seed } => {
                pct_core::data::make_rings(*classes, *per_class, *noise, *seed)?
            }
        };
        let spec = SplitSpec {
            mode: SplitMode::TrainTest,
            fraction: self.cfg.split_fraction,
            seed: self.cfg.split_seed,
        };
        let (train_set, test_set) = split(&full, &spec)?;
        Ok((train_set, test_set))
    }

    /// The old model's training set under the configured growth mode.
    fn old_training_set(&self, train_set: &LabeledDataset) -> Result<LabeledDataset> {
        let growth = &self.cfg.growth;
        let mode = match growth.mode {
            GrowthMode::None => return Ok(train_set.clone()),
            GrowthMode::HalfClasses => SplitMode::HalfClasses,
            GrowthMode::HalfSamples => SplitMode::HalfSamples,
        };
        let spec = SplitSpec { mode, fraction: growth.fraction, seed: growth.seed };
        Ok(split(train_set, &spec)?.0)
    }

    fn schedule(&self, shuffle_seed: u64) -> TrainSchedule {
        TrainSchedule { shuffle_seed, ..self.cfg.schedule.clone() }
    }
}

/// Loads a checkpoint and verifies it was produced under `expected_hash`.
fn load_verified(path: &Path, expected_hash: &str) -> Result<MlpModel> {
    let (model, hash) = checkpoint::load(path)?;
    if hash != expected_hash {
        return Err(LabError::integrity(
            path,
            format!("config hash mismatch: checkpoint {hash}, config {expected_hash}"),
        ));
    }
    Ok(model)
}

/// Trains one CE model (used for pool members); split out for threading.
fn train_pool_member(
    arch: &MlpArch,
    ds: &LabeledDataset,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<MlpModel> {
    let mut model = init_mlp(arch, seed)?;
    let mut sched = schedule.clone();
    sched.shuffle_seed = seed;
    train(&mut model, ds, &sched, &ObjectiveSpec::ce_only(), &References::none())?;
    Ok(model)
}

/// Ensures `size` pool checkpoints exist under `pool/`, training the missing
/// ones (in parallel when `jobs > 1`). Existing checkpoints are verified and
/// reused. Returns relative paths, in member order.
fn ensure_pool(
    ctx: &mut RunCtx<'_>,
    arch_name: &str,
    arch: &MlpArch,
    ds: &LabeledDataset,
    size: usize,
    base_seed: u64,
) -> Result<Vec<PathBuf>> {
    let mut missing = Vec::new();
    let mut rels = Vec::with_capacity(size);
    for i in 0..size {
        let seed = base_seed + i as u64;
        let rel = PathBuf::from(format!("pool/{arch_name}_seed{seed}.ckpt"));
        let abs = ctx.out_dir.join(&rel);
        if abs.exists() {
            let model = load_verified(&abs, &ctx.cfg.hash)?;
            if model.init_seed != seed || &model.arch != arch {
                return Err(LabError::integrity(abs, "checkpoint does not match its filename"));
            }
        } else {
            missing.push((i, seed, rel.clone()));
        }
        rels.push(rel);
    }

    let jobs = ctx.opts.jobs.max(1);
    let schedule = ctx.cfg.schedule.clone();
    let mut trained: Vec<(usize, MlpModel)> = if jobs <= 1 || missing.len() <= 1 {
        let mut out = Vec::new();
        for (i, seed, _) in &missing {
            out.push((*i, train_pool_member(arch, ds, &schedule, *seed)?));
        }
        out
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in missing.chunks(missing.len().div_ceil(jobs)) {
                let arch = arch.clone();
                let schedule = schedule.clone();
                handles.push(scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|(i, seed, _)| Ok((*i, train_pool_member(&arch, ds, &schedule, *seed)?)))
                        .collect::<Result<Vec<_>>>()
                }));
            }
            let mut out = Vec::new();
            for h in handles {
                out.extend(h.join().expect("pool training thread panicked")?);
            }
            Ok::<_, LabError>(out)
        })?
    };
    trained.sort_by_key(|(i, _)| *i);

    let by_index: BTreeMap<usize, PathBuf> =
        missing.iter().map(|(i, _, rel)| (*i, rel.clone())).collect();
    for (i, model) in trained {
        let rel = &by_index[&i];
        checkpoint::save(&ctx.out_dir.join(rel), &model, &ctx.cfg.hash)?;
    }
    for rel in &rels {
        ctx.manifest.add_artifact(rel.clone());
    }
    Ok(rels)
}

/// Trains (or reuses) an ensemble teacher under `dir`, then reloads every
/// member from disk so the run's training inputs are auditable.
fn ensure_teacher(
    ctx: &mut RunCtx<'_>,
    dir: &str,
    arch: &MlpArch,
    ds: &LabeledDataset,
    m: usize,
    base_seed: u64,
) -> Result<EnsembleTeacher> {
    let mut member_rels = Vec::with_capacity(m);
    for i in 0..m {
        let seed = base_seed + i as u64;
        let rel = PathBuf::from(format!("{dir}/member_{i}.ckpt"));
        let abs = ctx.out_dir.join(&rel);
        if !abs.exists() {
            let model = train_pool_member(arch, ds, &ctx.cfg.schedule, seed)?;
            checkpoint::save(&abs, &model, &ctx.cfg.hash)?;
        }
        member_rels.push(rel);
    }
    let mut members = Vec::with_capacity(m);
    for rel in &member_rels {
        let model = load_verified(&ctx.out_dir.join(rel), &ctx.cfg.hash)?;
        members.push(model);
        ctx.manifest.add_artifact(rel.clone());
    }
    let teacher = EnsembleTeacher::from_members(members)?;

    let (teacher, reads) = match ctx.cfg.ensemble_mode {
        EnsembleMode::Online => (teacher, member_rels),
        EnsembleMode::Offline => {
            let cache_rel = PathBuf::from(format!("{dir}/cache.csv"));
            let cache_abs = ctx.out_dir.join(&cache_rel);
            if !cache_abs.exists() {
                let cache = build_offline_cache(&teacher, ds)?;
                write_file(&cache_abs, &cache_to_csv(&cache, teacher.output_dim()))?;
            }
            ctx.manifest.add_artifact(cache_rel.clone());
            let cache = cache_from_csv(&crate::artifacts::read_file(&cache_abs)?)?;
            let mut reads = member_rels;
            reads.push(cache_rel);
            (teacher.with_offline_cache(cache), reads)
        }
    };
    for rel in &reads {
        ctx.manifest.add_train_read(rel.clone());
    }
    Ok(teacher)
}

// ---------------------------------------------------------------------------
// train-pool
// ---------------------------------------------------------------------------

pub fn cmd_train_pool(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    let pool = cfg
        .pool
        .clone()
        .ok_or_else(|| LabError::config("train-pool requires a `pool.arch` block"))?;
    let mut ctx = RunCtx::new("train-pool", cfg, opts);
    let (train_set, test_set) = ctx.datasets()?;

    let mut ranges = vec![("pool", cfg.seeds.pool + opts.seed_offset, pool.size as u64)];
    if pool.arch_b.is_some() {
        ranges.push(("pool_b", cfg.seeds.pool_b + opts.seed_offset, pool.size_b as u64));
    }
    check_seed_ranges(&ranges)?;

    ctx.write_artifact("dataset_train.csv", &dataset_to_csv(&train_set))?;
    ctx.write_artifact("dataset_test.csv", &dataset_to_csv(&test_set))?;

    let arch = cfg.bind_arch(&pool.arch, train_set.dim, train_set.num_classes)?;
    ensure_pool(&mut ctx, &pool.arch, &arch, &train_set, pool.size, cfg.seeds.pool + opts.seed_offset)?;
    if let Some(arch_b_name) = &pool.arch_b {
        let arch_b = cfg.bind_arch(arch_b_name, train_set.dim, train_set.num_classes)?;
        ensure_pool(
            &mut ctx,
            arch_b_name,
            &arch_b,
            &train_set,
            pool.size_b,
            cfg.seeds.pool_b + opts.seed_offset,
        )?;
    }
    ctx.finish("manifest_train_pool.txt")
}

// ---------------------------------------------------------------------------
// update
// ---------------------------------------------------------------------------

/// Reference-model roles resolved for one student training run.
struct ResolvedRefs {
    teacher: Option<EnsembleTeacher>,
    legacy: Option<MlpModel>,
}

impl ResolvedRefs {
    fn references(&self) -> References<'_> {
        let mut refs = References::none();
        refs.ensemble = self.teacher.as_ref();
        if let Some(legacy) = &self.legacy {
            refs.ancestors.push(legacy);
        }
        refs
    }
}

fn objective_name(spec: &ObjectiveSpec) -> &'static str {
    spec.kind.name()
}

pub fn cmd_update(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    let update = cfg
        .update
        .clone()
        .ok_or_else(|| LabError::config("update requires `update.old_arch` and `update.new_arch`"))?;

    // Objective/teacher compatibility is checked before any training.
    if !matches!(cfg.objective_old.kind, ObjectiveKind::CeOnly | ObjectiveKind::Elodi) {
        return Err(LabError::config(
            "`objective_old.kind` must be ce_only or elodi (no older model exists in a pair update)",
        ));
    }

    let mut ctx = RunCtx::new("update", cfg, opts);
    let (train_set, test_set) = ctx.datasets()?;
    let old_train = ctx.old_training_set(&train_set)?;

    let offset = opts.seed_offset;
    let pairings = update.pairings as u64;

    let new_needs_teacher = cfg.objective.kind.needs_ensemble();
    let old_needs_teacher = cfg.objective_old.kind.needs_ensemble();
    let share_teacher = update.old_arch == update.new_arch && cfg.growth.mode == GrowthMode::None;
    let teacher_slots: u64 = match (new_needs_teacher, old_needs_teacher, share_teacher) {
        (true, true, false) => 2,
        (false, false, _) => 0,
        _ => 1,
    };
    check_seed_ranges(&[
        ("old", cfg.seeds.old + offset, pairings),
        ("new", cfg.seeds.new + offset, pairings),
        ("teacher", cfg.seeds.teacher, teacher_slots * cfg.ensemble_m as u64),
    ])?;

    ctx.write_artifact("dataset_train.csv", &dataset_to_csv(&train_set))?;
    ctx.write_artifact("dataset_test.csv", &dataset_to_csv(&test_set))?;
    if cfg.growth.mode != GrowthMode::None {
        ctx.write_artifact("dataset_old_train.csv", &dataset_to_csv(&old_train))?;
    }

    let old_arch = cfg.bind_arch(&update.old_arch, old_train.dim, old_train.num_classes)?;
    let new_arch = cfg.bind_arch(&update.new_arch, train_set.dim, train_set.num_classes)?;

    // Teacher slot 0 guides the new model; slot 1 (when distinct) guides the
    // old model on its own training set.
    let new_teacher: Option<EnsembleTeacher> = if new_needs_teacher {
        let dir = format!("teacher_new_{}", update.new_arch);
        Some(ensure_teacher(&mut ctx, &dir, &new_arch, &train_set, cfg.ensemble_m, cfg.seeds.teacher)?)
    } else {
        None
    };
    let old_teacher: Option<EnsembleTeacher> = if old_needs_teacher {
        if share_teacher && new_needs_teacher {
            new_teacher.clone()
        } else {
            let dir = format!("teacher_old_{}", update.old_arch);
            let base = cfg.seeds.teacher + if new_needs_teacher { cfg.ensemble_m as u64 } else { 0 };
            Some(ensure_teacher(&mut ctx, &dir, &old_arch, &old_train, cfg.ensemble_m, base)?)
        }
    } else {
        None
    };

    let eval_set = if cfg.growth.mode == GrowthMode::HalfClasses {
        test_set.restrict_to_classes(old_train.num_classes)
    } else {
        test_set.clone()
    };

    let mut aggregate_rows: Vec<Vec<String>> = Vec::new();
    for k in 0..update.pairings {
        let old_seed = cfg.seeds.old + offset + k as u64;
        let new_seed = cfg.seeds.new + offset + k as u64;
        let pair_dir = format!("pair_{k}");

        // Old model.
        let mut old_model = init_mlp(&old_arch, old_seed)?;
        let old_refs = ResolvedRefs { teacher: old_teacher.clone(), legacy: None };
        train(
            &mut old_model,
            &old_train,
            &ctx.schedule(old_seed),
            &cfg.objective_old,
            &old_refs.references(),
        )?;
        let old_rel = format!("{pair_dir}/old.ckpt");
        checkpoint::save(&ctx.out_dir.join(&old_rel), &old_model, &cfg.hash)?;
        ctx.manifest.add_artifact(&old_rel);

        // New model. The legacy reference, when the objective takes one, is
        // reloaded from the old checkpoint so the manifest records the read.
        let legacy = if cfg.objective.kind.needs_ancestors() {
            let model = load_verified(&ctx.out_dir.join(&old_rel), &cfg.hash)?;
            ctx.manifest.add_train_read(&old_rel);
            Some(model)
        } else {
            None
        };
        let new_refs = ResolvedRefs { teacher: new_teacher.clone(), legacy };
        let mut new_model = init_mlp(&new_arch, new_seed)?;
        train(
            &mut new_model,
            &train_set,
            &ctx.schedule(new_seed),
            &cfg.objective,
            &new_refs.references(),
        )?;
        let new_rel = format!("{pair_dir}/new.ckpt");
        checkpoint::save(&ctx.out_dir.join(&new_rel), &new_model, &cfg.hash)?;
        ctx.manifest.add_artifact(&new_rel);

        // Evaluation on the held-out split (restricted to the classes the
        // old model knows under class growth).
        let old_tag = format!("old_seed{old_seed}_{}", arch_tag(&old_arch));
        let new_tag = format!("new_seed{new_seed}_{}", arch_tag(&new_arch));
        let old_preds = PredictionSet::from_model(&old_tag, &old_model, &eval_set)?;
        let new_preds = PredictionSet::from_model(&new_tag, &new_model, &eval_set)?;
        let report = flip_report(&old_preds, &new_preds, &eval_set)?;
        debug_assert!(report.identity_holds());

        let doc = ReportDoc {
            config_hash: cfg.hash.clone(),
            pairing: k,
            objective: objective_name(&cfg.objective).to_string(),
            objective_old: objective_name(&cfg.objective_old).to_string(),
            report,
        };
        ctx.write_artifact(&format!("{pair_dir}/report.txt"), &report_to_text(&doc, &cfg.canonical))?;
        ctx.write_artifact(&format!("{pair_dir}/flips.csv"), &flips_to_csv(&doc.report))?;

        let r = &doc.report;
        aggregate_rows.push(vec![
            k.to_string(),
            r.samples.to_string(),
            r.err_old.to_string(),
            r.err_new.to_string(),
            r.neg_flips.to_string(),
            r.pos_flips.to_string(),
            rate4(r.er_old()),
            rate4(r.er_new()),
            rate4(r.nfr()),
            rate4(r.pfr()),
        ]);
    }

    let mut agg = String::from(
        "pairing,samples,err_old,err_new,neg_flips,pos_flips,er_old,er_new,nfr,pfr\n",
    );
    let n = aggregate_rows.len() as f64;
    let mean = |col: usize| -> f64 {
        aggregate_rows.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() / n
    };
    let means = [mean(6), mean(7), mean(8), mean(9)];
    for row in &aggregate_rows {
        agg.push_str(&csv_line(row));
        agg.push('\n');
    }
    agg.push_str(&format!(
        "mean,,,,,,{},{},{},{}\n",
        rate4(means[0]),
        rate4(means[1]),
        rate4(means[2]),
        rate4(means[3])
    ));
    ctx.write_artifact("aggregate.csv", &agg)?;
    ctx.finish("manifest_update.txt")
}

// ---------------------------------------------------------------------------
// chain
// ---------------------------------------------------------------------------

pub fn cmd_chain(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    let chain = cfg
        .chain
        .clone()
        .ok_or_else(|| LabError::config("chain requires `chain.models`"))?;

    let mut ctx = RunCtx::new("chain", cfg, opts);
    let (train_set, test_set) = ctx.datasets()?;

    let n_models = chain.models.len();
    let scheme_used = cfg.objective.kind.needs_ancestors();
    if !scheme_used {
        ctx.manifest.warnings.push(format!(
            "scheme `{}` ignored: objective `{}` takes no predecessor reference",
            chain.scheme.name(),
            cfg.objective.kind.name()
        ));
    }

    // One teacher per distinct architecture, in first-appearance order.
    let mut distinct_archs: Vec<String> = Vec::new();
    for name in &chain.models {
        if !distinct_archs.contains(name) {
            distinct_archs.push(name.clone());
        }
    }
    let teacher_slots = if cfg.objective.kind.needs_ensemble() { distinct_archs.len() } else { 0 };
    check_seed_ranges(&[
        ("chain models", cfg.seeds.new + opts.seed_offset, n_models as u64),
        ("teacher", cfg.seeds.teacher, (teacher_slots * cfg.ensemble_m) as u64),
    ])?;

    ctx.write_artifact("dataset_train.csv", &dataset_to_csv(&train_set))?;
    ctx.write_artifact("dataset_test.csv", &dataset_to_csv(&test_set))?;

    let mut teachers: BTreeMap<String, EnsembleTeacher> = BTreeMap::new();
    if cfg.objective.kind.needs_ensemble() {
        for (slot, name) in distinct_archs.iter().enumerate() {
            let arch = cfg.bind_arch(name, train_set.dim, train_set.num_classes)?;
            let base = cfg.seeds.teacher + (slot * cfg.ensemble_m) as u64;
            let dir = format!("teacher_{name}");
            let teacher = ensure_teacher(&mut ctx, &dir, &arch, &train_set, cfg.ensemble_m, base)?;
            teachers.insert(name.clone(), teacher);
        }
    }

    let mut models: Vec<MlpModel> = Vec::with_capacity(n_models);
    let mut rels: Vec<String> = Vec::with_capacity(n_models);
    let mut term_rows: Vec<(usize, String, f64)> = Vec::new();
    for (i, arch_name) in chain.models.iter().enumerate() {
        let arch = cfg.bind_arch(arch_name, train_set.dim, train_set.num_classes)?;
        let seed = cfg.seeds.new + opts.seed_offset + i as u64;

        let ancestor_indices: Vec<usize> = if scheme_used && i > 0 {
            match chain.scheme {
                ChainScheme::Chain => vec![i - 1],
                ChainScheme::Radial => vec![0],
                ChainScheme::Fc => (0..i).collect(),
            }
        } else {
            Vec::new()
        };

        // A model with no ancestors cannot train under an
        // ancestor-consuming objective; the root of such a chain keeps its
        // ensemble term when it has one and otherwise falls back to
        // cross-entropy.
        let objective = if cfg.objective.kind.needs_ancestors() && ancestor_indices.is_empty() {
            if cfg.objective.kind.needs_ensemble() {
                ObjectiveSpec { kind: ObjectiveKind::Elodi, ..cfg.objective.clone() }
            } else {
                ObjectiveSpec::ce_only()
            }
        } else {
            cfg.objective.clone()
        };

        let mut ancestors: Vec<MlpModel> = Vec::new();
        for &a in &ancestor_indices {
            let model = load_verified(&ctx.out_dir.join(&rels[a]), &cfg.hash)?;
            ctx.manifest.add_train_read(rels[a].clone());
            ancestors.push(model);
        }
        let mut refs = References::none();
        refs.ensemble = teachers.get(arch_name);
        for a in &ancestors {
            refs.ancestors.push(a);
        }

        let mut model = init_mlp(&arch, seed)?;
        let history: TrainHistory =
            train(&mut model, &train_set, &ctx.schedule(seed), &objective, &refs)?;
        term_rows.push((i, "ce".to_string(), history.ce_term_total));
        if refs.ensemble.is_some() {
            term_rows.push((i, "ensemble".to_string(), history.ensemble_term_total));
        }
        for (j, total) in history.ancestor_term_totals.iter().enumerate() {
            term_rows.push((i, format!("ancestor_{}", ancestor_indices[j]), *total));
        }

        let rel = format!("model_{i}_{arch_name}.ckpt");
        checkpoint::save(&ctx.out_dir.join(&rel), &model, &cfg.hash)?;
        ctx.manifest.add_artifact(&rel);
        rels.push(rel);
        models.push(model);
    }

    let tags: Vec<String> = chain
        .models
        .iter()
        .enumerate()
        .map(|(i, name)| format!("model{i}_{name}"))
        .collect();
    let preds: Vec<PredictionSet> = models
        .iter()
        .zip(&tags)
        .map(|(m, t)| PredictionSet::from_model(t, m, &test_set))
        .collect::<pct_core::Result<_>>()?;
    let matrix = pairwise_nfr_matrix(&preds, &test_set)?;
    ctx.write_artifact("nfr_matrix.csv", &nfr_matrix_to_csv(&tags, &matrix))?;

    let mut er_csv = String::from("model,tag,er\n");
    for (i, p) in preds.iter().enumerate() {
        let er = pct_core::metrics::error_rate(p, &test_set)?;
        er_csv.push_str(&format!("{i},{},{}\n", tags[i], rate4(er)));
    }
    ctx.write_artifact("model_er.csv", &er_csv)?;

    let mut terms_csv = String::from("model,term,total\n");
    for (i, term, total) in &term_rows {
        terms_csv.push_str(&format!("{i},{term},{}\n", f64_to_decimal(*total)));
    }
    ctx.write_artifact("train_terms.csv", &terms_csv)?;

    ctx.finish("manifest_chain.txt")
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

pub fn cmd_stats(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    let pool_spec = cfg
        .pool
        .clone()
        .ok_or_else(|| LabError::config("stats requires a `pool.arch` block"))?;
    let mut ctx = RunCtx::new("stats", cfg, opts);
    let (train_set, test_set) = ctx.datasets()?;

    let mut ranges = vec![("pool", cfg.seeds.pool + opts.seed_offset, pool_spec.size as u64)];
    if pool_spec.arch_b.is_some() {
        ranges.push(("pool_b", cfg.seeds.pool_b + opts.seed_offset, pool_spec.size_b as u64));
    }
    check_seed_ranges(&ranges)?;

    ctx.write_artifact("dataset_train.csv", &dataset_to_csv(&train_set))?;
    ctx.write_artifact("dataset_test.csv", &dataset_to_csv(&test_set))?;

    let arch = cfg.bind_arch(&pool_spec.arch, train_set.dim, train_set.num_classes)?;
    let rels_a = ensure_pool(
        &mut ctx,
        &pool_spec.arch,
        &arch,
        &train_set,
        pool_spec.size,
        cfg.seeds.pool + opts.seed_offset,
    )?;
    let pool_a: Vec<MlpModel> = rels_a
        .iter()
        .map(|rel| load_verified(&ctx.out_dir.join(rel), &cfg.hash))
        .collect::<Result<_>>()?;

    let pool_b: Option<Vec<MlpModel>> = match &pool_spec.arch_b {
        None => None,
        Some(name) => {
            let arch_b = cfg.bind_arch(name, train_set.dim, train_set.num_classes)?;
            let rels_b = ensure_pool(
                &mut ctx,
                name,
                &arch_b,
                &train_set,
                pool_spec.size_b,
                cfg.seeds.pool_b + opts.seed_offset,
            )?;
            Some(
                rels_b
                    .iter()
                    .map(|rel| load_verified(&ctx.out_dir.join(rel), &cfg.hash))
                    .collect::<Result<_>>()?,
            )
        }
    };

    let probes: Vec<usize> = if cfg.stats.probes.is_empty() {
        test_set.samples.iter().take(3).map(|s| s.id).collect()
    } else {
        cfg.stats.probes.clone()
    };

    for (pi, probe_id) in probes.iter().enumerate() {
        let sample = test_set
            .by_id(*probe_id)
            .ok_or_else(|| LabError::config(format!("probe id {probe_id} not in the test split")))?;
        let logits_a: Vec<Vec<f64>> = pool_a
            .iter()
            .map(|m| pct_core::model::forward_single(m, &sample.features))
            .collect::<pct_core::Result<_>>()?;
        let logits_b: Option<Vec<Vec<f64>>> = match &pool_b {
            None => None,
            Some(pool) => Some(
                pool.iter()
                    .map(|m| pct_core::model::forward_single(m, &sample.features))
                    .collect::<pct_core::Result<_>>()?,
            ),
        };
        let probe_dir = format!("stats/probe_{probe_id}");

        let fit = pct_core::displacement::fit_gaussian_model(&logits_a, logits_b.as_deref())?;
        let mut fit_csv = String::from("field,value\n");
        fit_csv.push_str(&format!(
            "mode,{}\n",
            if pool_b.is_some() { "heterogeneous" } else { "homogeneous" }
        ));
        for (i, v) in fit.delta_mu.iter().enumerate() {
            fit_csv.push_str(&format!("delta_mu_{i},{}\n", f64_to_decimal(*v)));
        }
        fit_csv.push_str(&format!("delta_mu_norm,{}\n", f64_to_decimal(fit.delta_mu_norm())));
        for i in 0..fit.sigma_sum.rows() {
            for j in 0..fit.sigma_sum.cols() {
                fit_csv.push_str(&format!(
                    "sigma_sum_{i}_{j},{}\n",
                    f64_to_decimal(fit.sigma_sum.get(i, j))
                ));
            }
        }
        fit_csv.push_str(&format!("sigma_sum_trace,{}\n", f64_to_decimal(fit.sigma_sum.trace())));
        ctx.write_artifact(&format!("{probe_dir}/fit.csv"), &fit_csv)?;

        // Empirical norms for every ensemble size, then a shared PMF grid.
        let mut all_norms: Vec<(usize, Vec<f64>)> = Vec::new();
        for &m in &cfg.stats.sizes {
            let base_seed = cfg.seeds.stats + (pi * 1000 + m) as u64;
            let norms = pct_core::displacement::displacement_norms(
                &logits_a,
                logits_b.as_deref(),
                m,
                cfg.stats.trials,
                base_seed,
            )?;
            all_norms.push((m, norms));
        }
        let hi = all_norms
            .iter()
            .flat_map(|(_, norms)| norms.iter())
            .cloned()
            .fold(0.0, f64::max)
            .max(fit.delta_mu_norm())
            * 1.3;
        let grid = pct_core::displacement::norm_grid(hi, cfg.stats.grid_points);

        let mut norms_csv = String::from("m,trial,norm\n");
        let mut scaling_csv = String::from("m,mean_norm,mean_sq_norm,predicted_mean_sq\n");
        for (m, norms) in &all_norms {
            for (t, v) in norms.iter().enumerate() {
                norms_csv.push_str(&format!("{m},{t},{}\n", f64_to_decimal(*v)));
            }
            let hist = pct_core::numerics::histogram(norms, cfg.stats.bin_width, 0.0)?;
            let mut hist_csv = String::from("bin_lo,bin_hi,count,frequency\n");
            for i in 0..hist.counts.len() {
                let (lo, hi) = hist.bin_range(i);
                hist_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    f64_to_decimal(lo),
                    f64_to_decimal(hi),
                    hist.counts[i],
                    f64_to_decimal(hist.frequency(i))
                ));
            }
            ctx.write_artifact(&format!("{probe_dir}/hist_m{m}.csv"), &hist_csv)?;

            let base_seed = cfg.seeds.stats + (pi * 1000 + m) as u64;
            let pmf = pct_core::displacement::simulate_displacement_pmf(
                &fit,
                *m,
                cfg.stats.mc_samples,
                base_seed ^ 0x5117,
                &grid,
            )?;
            let mut pmf_csv = String::from("query,density\n");
            for (q, d) in pmf.query_points.iter().zip(&pmf.densities) {
                pmf_csv.push_str(&format!("{},{}\n", f64_to_decimal(*q), f64_to_decimal(*d)));
            }
            ctx.write_artifact(&format!("{probe_dir}/pmf_m{m}.csv"), &pmf_csv)?;

            let n = norms.len() as f64;
            let mean_norm = norms.iter().sum::<f64>() / n;
            let mean_sq = norms.iter().map(|v| v * v).sum::<f64>() / n;
            scaling_csv.push_str(&format!(
                "{m},{},{},{}\n",
                f64_to_decimal(mean_norm),
                f64_to_decimal(mean_sq),
                f64_to_decimal(fit.predicted_mean_sq_norm(*m))
            ));
        }
        ctx.write_artifact(&format!("{probe_dir}/norms.csv"), &norms_csv)?;
        ctx.write_artifact(&format!("{probe_dir}/scaling.csv"), &scaling_csv)?;
    }
    ctx.finish("manifest_stats.txt")
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn cmd_report(manifest_paths: &[PathBuf], opts: &RunOptions) -> Result<PathBuf> {
    if manifest_paths.is_empty() {
        return Err(LabError::config("report requires at least one manifest path"));
    }
    let started = Instant::now();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut errors: Vec<String> = Vec::new();

    for path in manifest_paths {
        let doc = match manifest_from_file(path) {
            Ok(doc) => doc,
            Err(e) => {
                errors.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let mut found_report = false;
        for rel in &doc.artifacts {
            if rel.file_name().map(|n| n == "report.txt") != Some(true) {
                continue;
            }
            found_report = true;
            let report_path = doc.base_dir.join(rel);
            let text = match crate::artifacts::read_file(&report_path) {
                Ok(t) => t,
                Err(e) => {
                    errors.push(format!("{}: {e}", report_path.display()));
                    continue;
                }
            };
            match report_from_text(&text) {
                Ok(rdoc) => {
                    // Re-verify the count identity at render time.
                    if !rdoc.report.identity_holds() {
                        errors.push(format!(
                            "{}: flip identity violated (err_new - err_old != nfr - pfr)",
                            report_path.display()
                        ));
                        continue;
                    }
                    rows.push(vec![
                        path.display().to_string(),
                        rdoc.pairing.to_string(),
                        rdoc.objective.clone(),
                        rate4(rdoc.report.er_old()),
                        rate4(rdoc.report.er_new()),
                        rate4(rdoc.report.nfr()),
                        rate4(rdoc.report.pfr()),
                    ]);
                }
                Err(e) => errors.push(format!("{}: {e}", report_path.display())),
            }
        }
        if !found_report && doc.command == "update" {
            errors.push(format!("{}: no report artifacts listed", path.display()));
        }
    }

    let mut csv = String::from("manifest,pairing,objective,er_old,er_new,nfr,pfr\n");
    for row in &rows {
        csv.push_str(&csv_line(row));
        csv.push('\n');
    }

    let mut text = String::from("pctlab-summary v1\n");
    text.push_str(&format!("reports = {}\n", rows.len()));
    text.push_str("columns = manifest pairing objective er_old er_new nfr pfr\n");
    for row in &rows {
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    if !errors.is_empty() {
        text.push_str("errors:\n");
        for e in &errors {
            text.push_str(&format!("  {e}\n"));
        }
    }

    let mut manifest = Manifest::new("report", "-", opts.seed_offset);
    write_file(&opts.out_dir.join("report/summary.csv"), &csv)?;
    write_file(&opts.out_dir.join("report/summary.txt"), &text)?;
    manifest.add_artifact("report/summary.csv");
    manifest.add_artifact("report/summary.txt");
    manifest.wall_clock_ms = started.elapsed().as_millis();
    manifest.write(&opts.out_dir, "manifest_report.txt")
}
