//! Acceptance suite: one test per criterion, each ending with a PASS line.
//!
//! Criteria 1-6 exercise the core algorithms directly; criteria 7-11 drive
//! the `pctlab` binary end to end with pinned configs. All tolerances are
//! fixed here, and every run is deterministic, so the suite either passes
//! reproducibly or fails reproducibly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use pct_core::data::{make_blobs, split, SplitMode, SplitSpec};
use pct_core::displacement::{
    displacement_norms, fit_gaussian_model, histogram_pmf_tv, norm_grid, scaling_report,
    simulate_displacement_pmf, SeedPool,
};
use pct_core::losses::{
    combined_objective, cross_entropy, fd, kd, ldi, legacy_objective, LdiConfig, SubsetMode,
};
use pct_core::metrics::{flip_report, PredictionSet};
use pct_core::model::{backward, forward, init_mlp, Activation, MlpArch};
use pct_core::numerics::{histogram, sample_mvn, GaussianEstimate, Matrix};
use pct_core::rng::Rng;
use pct_core::train::TrainSchedule;

// ---------------------------------------------------------------------------
// Shared experiment arms (heavy end-to-end runs reused across criteria)
// ---------------------------------------------------------------------------

const BLOBS_BASE: &str = "\
dataset.kind = blobs
dataset.classes = 3
dataset.dim = 2
dataset.per_class = 200
dataset.seed = 42
dataset.separation = 1.9
dataset.spread = 1.0
split.fraction = 0.3
split.seed = 7
arch.base.hidden = 32,32
arch.base.activation = relu
schedule.epochs = 100
schedule.base_lr = 0.005
schedule.momentum = 0.9
schedule.lr_decay_factor = 0.5
schedule.decay_every = 25
schedule.batch_size = 32
update.old_arch = base
update.new_arch = base
update.pairings = 16
ensemble.m = 4
";

const RINGS_BASE: &str = "\
dataset.kind = rings
dataset.classes = 3
dataset.per_class = 300
dataset.seed = 42
dataset.noise = 0.35
split.fraction = 0.4
split.seed = 7
arch.base.hidden = 32,32
arch.base.activation = relu
schedule.epochs = 100
schedule.base_lr = 0.005
schedule.momentum = 0.9
schedule.lr_decay_factor = 0.5
schedule.decay_every = 25
schedule.batch_size = 32
update.old_arch = base
update.new_arch = base
update.pairings = 16
ensemble.m = 4
";

const NO_TREATMENT: &str = "objective.kind = ce_only\nobjective_old.kind = ce_only\n";
const ELODI_BOTH: &str = "objective.kind = elodi\nobjective.alpha = 0.8\nobjective.ldi.xi = 0.0\n\
objective_old.kind = elodi\nobjective_old.alpha = 0.8\nobjective_old.ldi.xi = 0.0\n";
const ELODI_TOP2: &str = "objective.kind = elodi\nobjective.alpha = 0.8\nobjective.ldi.xi = 0.0\n\
objective.ldi.top_k = 2\nobjective_old.kind = elodi\nobjective_old.alpha = 0.8\n\
objective_old.ldi.xi = 0.0\nobjective_old.ldi.top_k = 2\n";

fn acceptance_root() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let dir = std::env::temp_dir().join(format!("pctlab-acceptance-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    })
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_pctlab")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "pctlab {args:?} failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs one update arm (config text) into `<root>/<name>` once; reruns of
/// the same arm reuse the existing outputs.
fn run_arm(name: &str, config_text: &str) -> PathBuf {
    let root = acceptance_root();
    let cfg_path = root.join(format!("{name}.conf"));
    let out_dir = root.join(name);
    if !out_dir.join("manifest_update.txt").exists() {
        fs::write(&cfg_path, config_text).unwrap();
        run_cli(&[
            "update",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
    }
    out_dir
}

/// Mean er_old, er_new, nfr, pfr over all pairings of an update run.
fn mean_rates(out_dir: &Path) -> (f64, f64, f64, f64) {
    let agg = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    let mean_line = agg.lines().last().unwrap();
    let fields: Vec<&str> = mean_line.split(',').collect();
    assert_eq!(fields[0], "mean");
    (
        fields[6].parse().unwrap(),
        fields[7].parse().unwrap(),
        fields[8].parse().unwrap(),
        fields[9].parse().unwrap(),
    )
}

struct Arms {
    blobs_nt: PathBuf,
    blobs_el: PathBuf,
    rings_nt: PathBuf,
    rings_el: PathBuf,
}

fn shared_arms() -> &'static Arms {
    static ARMS: OnceLock<Arms> = OnceLock::new();
    ARMS.get_or_init(|| Arms {
        blobs_nt: run_arm("blobs_nt", &format!("{BLOBS_BASE}{NO_TREATMENT}")),
        blobs_el: run_arm("blobs_el", &format!("{BLOBS_BASE}{ELODI_BOTH}")),
        rings_nt: run_arm("rings_nt", &format!("{RINGS_BASE}{NO_TREATMENT}")),
        rings_el: run_arm("rings_el", &format!("{RINGS_BASE}{ELODI_BOTH}")),
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: LDI degenerate-case exactness
// ---------------------------------------------------------------------------

#[test]
fn c01_ldi_degenerate_case_equals_squared_l2() {
    let cfg = LdiConfig { xi: 0.0, p: 2, subset_mode: SubsetMode::All };
    let mut rng = Rng::new(1001, 0);
    for _ in 0..1000 {
        let dim = 2 + rng.next_below(8);
        let a: Vec<f64> = (0..dim).map(|_| 10.0 * rng.next_gaussian()).collect();
        let b: Vec<f64> = (0..dim).map(|_| 10.0 * rng.next_gaussian()).collect();
        let (loss, _) = ldi(&a, &b, &cfg).unwrap();
        let l2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!(
            (loss - l2).abs() <= 1e-12 * l2.max(1.0),
            "ldi {loss} vs squared-l2 {l2}"
        );
    }
    println!("criterion 1 PASS: ldi(xi=0,p=2,all) == squared L2 to 1e-12 on 1000 random pairs");
}

// ---------------------------------------------------------------------------
// Criterion 2: gradient fidelity against central finite differences
// ---------------------------------------------------------------------------

fn assert_grad(numeric: f64, analytic: f64, what: &str) {
    let diff = (numeric - analytic).abs();
    let rel = diff / (numeric.abs() + analytic.abs()).max(1e-12);
    assert!(
        rel < 1e-6 || diff < 1e-10,
        "{what}: numeric {numeric:.12e} vs analytic {analytic:.12e} (rel {rel:.3e})"
    );
}

type LossFn<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;

fn fd_check(loss: &LossFn, logits: &[f64], step: f64, what: &str) {
    let (_, analytic) = loss(logits);
    for i in 0..logits.len() {
        let mut plus = logits.to_vec();
        let mut minus = logits.to_vec();
        plus[i] += step;
        minus[i] -= step;
        let numeric = (loss(&plus).0 - loss(&minus).0) / (2.0 * step);
        assert_grad(numeric, analytic[i], what);
    }
}

fn clear_of_kink(new: &[f64], reference: &[f64], xi: f64) -> bool {
    new.iter().zip(reference).all(|(n, r)| ((n - r).abs() - xi).abs() > 1e-3)
}

#[test]
fn c02_gradient_fidelity() {
    let mut rng = Rng::new(1002, 0);
    let c = 4;
    let rand_logits =
        |rng: &mut Rng| -> Vec<f64> { (0..c).map(|_| 2.0 * rng.next_gaussian()).collect() };

    // Direct checks: >= 20 valid points per loss configuration.
    for _ in 0..25 {
        let x = rand_logits(&mut rng);
        let label = rng.next_below(c);
        fd_check(&|l| cross_entropy(l, label).unwrap(), &x, 1e-5, "ce");
    }
    for xi in [0.0, 0.2, 0.5, 1.0] {
        for p in [1u32, 2] {
            for subset in [SubsetMode::All, SubsetMode::TopK(2)] {
                let cfg = LdiConfig { xi, p, subset_mode: subset };
                let mut done = 0;
                while done < 20 {
                    let x = rand_logits(&mut rng);
                    let r = rand_logits(&mut rng);
                    if !clear_of_kink(&x, &r, xi) {
                        continue;
                    }
                    fd_check(&|l| ldi(l, &r, &cfg).unwrap(), &x, 1e-5, "ldi");
                    done += 1;
                }
            }
        }
    }
    for tau in [1.0, 100.0] {
        let step = if tau > 10.0 { 1e-3 } else { 1e-5 };
        for _ in 0..20 {
            let x = rand_logits(&mut rng);
            let r = rand_logits(&mut rng);
            fd_check(&|l| kd(l, &r, tau).unwrap(), &x, step, "kd");
        }
    }
    for old_correct in [false, true] {
        for _ in 0..20 {
            let x = rand_logits(&mut rng);
            let r = rand_logits(&mut rng);
            fd_check(&|l| fd(l, &r, old_correct, 1.0, 1.5).unwrap(), &x, 1e-5, "fd");
        }
    }
    let cfg = LdiConfig { xi: 0.3, p: 2, subset_mode: SubsetMode::All };
    let mut done = 0;
    while done < 20 {
        let x = rand_logits(&mut rng);
        let ens = rand_logits(&mut rng);
        let old = rand_logits(&mut rng);
        let label = rng.next_below(c);
        if !clear_of_kink(&x, &ens, cfg.xi) || !clear_of_kink(&x, &old, cfg.xi) {
            continue;
        }
        fd_check(
            &|l| {
                combined_objective(cross_entropy(l, label).unwrap(), ldi(l, &ens, &cfg).unwrap(), 0.8)
            },
            &x,
            1e-5,
            "combined",
        );
        fd_check(
            &|l| {
                let bridged =
                    legacy_objective(ldi(l, &ens, &cfg).unwrap(), ldi(l, &old, &cfg).unwrap(), 0.5);
                combined_objective(cross_entropy(l, label).unwrap(), bridged, 0.8)
            },
            &x,
            1e-5,
            "legacy",
        );
        done += 1;
    }

    // Through a 2-hidden-layer network: every parameter via central
    // differences.
    let arch = MlpArch::new(2, vec![3, 3], 3, Activation::Tanh);
    let cfg3 = LdiConfig { xi: 0.3, p: 2, subset_mode: SubsetMode::All };
    let mut done = 0;
    let mut attempt = 0;
    while done < 20 {
        attempt += 1;
        let model = init_mlp(&arch, 5000 + attempt).unwrap();
        let input = vec![rng.next_gaussian(), rng.next_gaussian()];
        let reference: Vec<f64> = (0..3).map(|_| rng.next_gaussian()).collect();
        let label = rng.next_below(3);
        let batch = Matrix::from_rows(std::slice::from_ref(&input)).unwrap();
        let (logits, cache) = forward(&model, &batch).unwrap();
        if !clear_of_kink(logits.row(0), &reference, cfg3.xi) {
            continue;
        }
        let loss_fn = |l: &[f64]| {
            combined_objective(cross_entropy(l, label).unwrap(), ldi(l, &reference, &cfg3).unwrap(), 0.8)
        };
        let (_, dlogits) = loss_fn(logits.row(0));
        let grads = backward(&model, &cache, &Matrix::from_rows(&[dlogits]).unwrap()).unwrap();
        let net_loss = |m: &pct_core::model::MlpModel| {
            let (lo, _) = forward(m, &batch).unwrap();
            loss_fn(lo.row(0)).0
        };
        for l in 0..model.weights.len() {
            for r in 0..model.weights[l].rows() {
                for cc in 0..model.weights[l].cols() {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    let base = model.weights[l].get(r, cc);
                    plus.weights[l].set(r, cc, base + 1e-5);
                    minus.weights[l].set(r, cc, base - 1e-5);
                    let numeric = (net_loss(&plus) - net_loss(&minus)) / 2e-5;
                    assert_grad(numeric, grads.weights[l].get(r, cc), "net weight");
                }
            }
            for i in 0..model.biases[l].len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.biases[l][i] += 1e-5;
                minus.biases[l][i] -= 1e-5;
                let numeric = (net_loss(&plus) - net_loss(&minus)) / 2e-5;
                assert_grad(numeric, grads.biases[l][i], "net bias");
            }
        }
        done += 1;
    }
    println!("criterion 2 PASS: all loss gradients match central differences at rel < 1e-6");
}

// ---------------------------------------------------------------------------
// Criterion 3: exact flip identity on randomized prediction triples
// ---------------------------------------------------------------------------

#[test]
fn c03_flip_identity_on_random_triples() {
    let mut rng = Rng::new(1003, 0);
    for _ in 0..10_000 {
        let n = 1 + rng.next_below(30);
        let c = 2 + rng.next_below(5);
        let labels: Vec<usize> = (0..n).map(|_| rng.next_below(c)).collect();
        let ds = pct_core::data::LabeledDataset {
            num_classes: c,
            dim: 1,
            samples: labels
                .iter()
                .enumerate()
                .map(|(id, &label)| pct_core::data::Sample { id, features: vec![0.0], label })
                .collect(),
        };
        let mk = |rng: &mut Rng| PredictionSet {
            model_tag: "m".into(),
            ids: (0..n).collect(),
            predictions: (0..n).map(|_| rng.next_below(c)).collect(),
            logits: None,
        };
        let old = mk(&mut rng);
        let new = mk(&mut rng);
        let report = flip_report(&old, &new, &ds).unwrap();
        assert!(report.identity_holds(), "identity failed: {report:?}");
    }
    println!("criterion 3 PASS: ER_new - ER_old == NFR - PFR exactly on 10^4 random triples");
}

// ---------------------------------------------------------------------------
// Criterion 4: CLT scaling of displacement on synthetic pools
// ---------------------------------------------------------------------------

#[test]
fn c04_clt_scaling_on_synthetic_pools() {
    let cov = Matrix::from_rows(&[vec![1.2, 0.4, 0.0], vec![0.4, 0.9, 0.1], vec![0.0, 0.1, 1.5]])
        .unwrap();
    let est = GaussianEstimate { mean: vec![0.5, -1.0, 2.0], cov: cov.clone() };
    let pool = sample_mvn(&est, 4096, 4004).unwrap();
    let mut previous = f64::INFINITY;
    for m in [1usize, 2, 4, 8] {
        let norms = displacement_norms(&pool, None, m, 2000, 4010 + m as u64).unwrap();
        let mean_sq = norms.iter().map(|v| v * v).sum::<f64>() / norms.len() as f64;
        let predicted = 2.0 * cov.trace() / m as f64;
        let rel = (mean_sq - predicted).abs() / predicted;
        assert!(rel < 0.15, "m={m}: mean sq {mean_sq:.4} vs trace(2S/m) {predicted:.4} (rel {rel:.3})");
        assert!(mean_sq < previous, "mean squared norm must decrease in m");
        previous = mean_sq;
    }
    println!("criterion 4 PASS: displacement mean-squared-norm matches trace(2S/m) within 15%, monotone in m");
}

// ---------------------------------------------------------------------------
// Criterion 5: histogram vs simulated-PMF consistency on trained pools
// ---------------------------------------------------------------------------

fn locked_schedule() -> TrainSchedule {
    TrainSchedule {
        epochs: 100,
        base_lr: 0.005,
        momentum: 0.9,
        lr_decay_factor: 0.5,
        decay_every: 25,
        batch_size: 32,
        shuffle_seed: 0,
    }
}

fn blobs_split() -> (pct_core::data::LabeledDataset, pct_core::data::LabeledDataset) {
    let ds = make_blobs(3, 2, 200, 1.9, 1.0, 42).unwrap();
    let spec = SplitSpec { mode: SplitMode::TrainTest, fraction: 0.3, seed: 7 };
    split(&ds, &spec).unwrap()
}

#[test]
fn c05_histogram_pmf_consistency() {
    let (train_set, test_set) = blobs_split();
    let arch = MlpArch::new(2, vec![32, 32], 3, Activation::Relu);
    let pool = SeedPool::train(&arch, "base", &train_set, &locked_schedule(), 16, 1000).unwrap();
    for probe in test_set.samples.iter().take(3) {
        let logits = pool.member_logits(&probe.features).unwrap();
        let fit = fit_gaussian_model(&logits, None).unwrap();
        assert!(fit.delta_mu.iter().all(|&v| v == 0.0));
        for m in [1usize, 4] {
            let norms = displacement_norms(&logits, None, m, 2000, 9000 + m as u64).unwrap();
            let hist = histogram(&norms, 0.5, 0.0).unwrap();
            let hi = norms.iter().cloned().fold(0.0, f64::max).max(1.0) * 1.3;
            let pmf = simulate_displacement_pmf(&fit, m, 5000, 777, &norm_grid(hi, 512)).unwrap();
            let tv = histogram_pmf_tv(&hist, &pmf);
            assert!(tv < 0.15, "probe {} m={m}: TV {tv:.4} >= 0.15", probe.id);
        }
    }
    println!("criterion 5 PASS: histogram vs MC+KDE PMF total variation < 0.15 for m in {{1,4}}");
}

// ---------------------------------------------------------------------------
// Criterion 6: heterogeneous displacement floor
// ---------------------------------------------------------------------------

#[test]
fn c06_heterogeneous_floor() {
    let (train_set, test_set) = blobs_split();
    let wide = MlpArch::new(2, vec![32, 32], 3, Activation::Relu);
    let narrow = MlpArch::new(2, vec![8], 3, Activation::Tanh);
    let schedule = locked_schedule();
    let pool_a = SeedPool::train(&wide, "wide", &train_set, &schedule, 16, 1000).unwrap();
    let pool_b = SeedPool::train(&narrow, "narrow", &train_set, &schedule, 16, 2000).unwrap();

    // The two architectures disagree in test error rate.
    let er = |model: &pct_core::model::MlpModel| {
        let preds = PredictionSet::from_model("m", model, &test_set).unwrap();
        pct_core::metrics::error_rate(&preds, &test_set).unwrap()
    };
    let er_a = er(&pool_a.models[0]);
    let er_b = er(&pool_b.models[0]);
    assert!((er_a - er_b).abs() > 1e-9, "architectures should disagree in ER");

    for probe in test_set.samples.iter().take(3) {
        let la = pool_a.member_logits(&probe.features).unwrap();
        let lb = pool_b.member_logits(&probe.features).unwrap();
        let fit = fit_gaussian_model(&la, Some(&lb)).unwrap();
        let floor = fit.delta_mu_norm();
        assert!(floor > 0.0, "fitted |delta mu| must be positive at probe {}", probe.id);
        let rows = scaling_report(&la, Some(&lb), &[2, 8], 2000, 6000).unwrap();
        let gap_m2 = (rows[0].mean_norm - floor).abs();
        let gap_m8 = (rows[1].mean_norm - floor).abs();
        assert!(
            gap_m8 < gap_m2,
            "probe {}: |mean_norm - |dmu|| must shrink from m=2 ({gap_m2:.4}) to m=8 ({gap_m8:.4})",
            probe.id
        );
    }
    println!("criterion 6 PASS: heterogeneous pools show a positive displacement floor approached as m grows");
}

// ---------------------------------------------------------------------------
// Criterion 7: end-to-end NFR reduction (the core claim)
// ---------------------------------------------------------------------------

#[test]
fn c07_elodi_reduces_nfr_end_to_end() {
    let arms = shared_arms();
    for (what, nt_dir, el_dir) in [
        ("blobs", &arms.blobs_nt, &arms.blobs_el),
        ("rings", &arms.rings_nt, &arms.rings_el),
    ] {
        let (_, nt_er_new, nt_nfr, _) = mean_rates(nt_dir);
        let (_, el_er_new, el_nfr, _) = mean_rates(el_dir);
        let reduction = 1.0 - el_nfr / nt_nfr;
        assert!(
            reduction >= 0.30,
            "{what}: ELODI NFR {el_nfr:.4} vs no-treatment {nt_nfr:.4} (reduction {reduction:.2} < 0.30)"
        );
        assert!(
            el_er_new <= nt_er_new + 0.01,
            "{what}: ELODI ER {el_er_new:.4} exceeds no-treatment {nt_er_new:.4} by more than 1 point"
        );
        println!(
            "criterion 7 [{what}]: no-treatment NFR {nt_nfr:.4} -> elodi {el_nfr:.4} ({:.0}% lower), ER {nt_er_new:.4} -> {el_er_new:.4}",
            reduction * 100.0
        );
    }
    println!("criterion 7 PASS: mean NFR of elodi-trained pairs at least 30% below no-treatment on blobs and rings");
}

// ---------------------------------------------------------------------------
// Criterion 8: top-K parity
// ---------------------------------------------------------------------------

#[test]
fn c08_top_k_parity() {
    let arms = shared_arms();
    let blobs_t2 = run_arm("blobs_t2", &format!("{BLOBS_BASE}{ELODI_TOP2}"));
    let rings_t2 = run_arm("rings_t2", &format!("{RINGS_BASE}{ELODI_TOP2}"));
    for (what, full_dir, t2_dir) in
        [("blobs", &arms.blobs_el, &blobs_t2), ("rings", &arms.rings_el, &rings_t2)]
    {
        let (_, _, full_nfr, _) = mean_rates(full_dir);
        let (_, _, t2_nfr, _) = mean_rates(t2_dir);
        let rel = (full_nfr - t2_nfr).abs() / full_nfr.max(t2_nfr);
        assert!(
            rel <= 0.20,
            "{what}: K=C NFR {full_nfr:.4} vs top-2 NFR {t2_nfr:.4} differ by {rel:.2} relative"
        );
        println!("criterion 8 [{what}]: K=C NFR {full_nfr:.4} vs top-2 {t2_nfr:.4} ({rel:.2} relative)");
    }
    println!("criterion 8 PASS: top-K inhibition matches the full subset within 20% relative NFR");
}

// ---------------------------------------------------------------------------
// Criterion 9: online/offline teacher equality
// ---------------------------------------------------------------------------

#[test]
fn c09_online_offline_equality() {
    let root = acceptance_root();
    let quick = "\
dataset.kind = blobs
dataset.classes = 3
dataset.per_class = 60
dataset.seed = 42
dataset.separation = 1.9
split.fraction = 0.5
arch.base.hidden = 16
schedule.epochs = 10
schedule.base_lr = 0.005
schedule.decay_every = 5
update.old_arch = base
update.new_arch = base
objective.kind = elodi
objective.alpha = 0.8
objective_old.kind = ce_only
ensemble.m = 4
";
    let online_dir = root.join("c09_online");
    let offline_dir = root.join("c09_offline");
    let cfg_on = root.join("c09_on.conf");
    let cfg_off = root.join("c09_off.conf");
    fs::write(&cfg_on, quick).unwrap();
    fs::write(&cfg_off, format!("{quick}ensemble.mode = offline\n")).unwrap();
    run_cli(&["update", "--config", cfg_on.to_str().unwrap(), "--out", online_dir.to_str().unwrap()]);
    run_cli(&["update", "--config", cfg_off.to_str().unwrap(), "--out", offline_dir.to_str().unwrap()]);

    // The cached logits must equal the online teacher's bit for bit.
    let cache_text = fs::read_to_string(offline_dir.join("teacher_new_base/cache.csv")).unwrap();
    let cache = pct_lab::artifacts::cache_from_csv(&cache_text).unwrap();
    let members: Vec<pct_core::model::MlpModel> = (0..4)
        .map(|i| {
            pct_lab::checkpoint::load(&online_dir.join(format!("teacher_new_base/member_{i}.ckpt")))
                .unwrap()
                .0
        })
        .collect();
    let teacher = pct_core::ensemble::EnsembleTeacher::from_members(members).unwrap();
    let train_csv = fs::read_to_string(online_dir.join("dataset_train.csv")).unwrap();
    let train_set = pct_lab::artifacts::dataset_from_csv(&train_csv).unwrap();
    assert_eq!(cache.len(), train_set.len());
    for s in &train_set.samples {
        let online = teacher.online_logits(&s.features).unwrap();
        let cached = cache.get(s.id).unwrap();
        for (a, b) in online.iter().zip(cached) {
            assert_eq!(a.to_bits(), b.to_bits(), "cache differs from online logits at id {}", s.id);
        }
    }

    // Training trajectories are bit-identical: compare final parameters.
    let strip = |path: &Path| {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("config_hash") && !l.starts_with("checksum"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(&online_dir.join("pair_0/new.ckpt")),
        strip(&offline_dir.join("pair_0/new.ckpt")),
        "online and offline training trajectories diverged"
    );
    println!("criterion 9 PASS: offline cache bit-identical to online logits; trajectories identical");
}

// ---------------------------------------------------------------------------
// Criterion 10: bridging to an untreated legacy model
// ---------------------------------------------------------------------------

#[test]
fn c10_legacy_bridge_no_worse() {
    let plain = format!(
        "{BLOBS_BASE}objective.kind = elodi\nobjective.alpha = 0.8\nobjective.ldi.xi = 0.0\nobjective_old.kind = ce_only\n"
    );
    let bridged = format!(
        "{BLOBS_BASE}objective.kind = elodi_plus_legacy_ldi\nobjective.alpha = 0.8\nobjective.lambda = 0.5\nobjective.ldi.xi = 0.0\nobjective_old.kind = ce_only\n"
    );
    let plain_dir = run_arm("c10_plain", &plain);
    let bridged_dir = run_arm("c10_bridged", &bridged);
    let (_, _, plain_nfr, _) = mean_rates(&plain_dir);
    let (_, _, bridged_nfr, _) = mean_rates(&bridged_dir);
    assert!(
        bridged_nfr <= plain_nfr,
        "legacy-bridged NFR {bridged_nfr:.4} worse than plain elodi {plain_nfr:.4}"
    );
    println!(
        "criterion 10 PASS: elodi+legacy-ldi NFR {bridged_nfr:.4} <= plain elodi {plain_nfr:.4} vs the untreated legacy model"
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: byte-identical reports on re-execution
// ---------------------------------------------------------------------------

#[test]
fn c11_reruns_are_byte_identical() {
    let root = acceptance_root();
    // Re-execute one representative config per command and compare every
    // report/CSV/checkpoint byte for byte.
    let stats_cfg = "\
dataset.kind = blobs
dataset.classes = 3
dataset.per_class = 60
dataset.seed = 42
dataset.separation = 1.9
split.fraction = 0.5
arch.base.hidden = 16
schedule.epochs = 10
schedule.base_lr = 0.005
schedule.decay_every = 5
pool.arch = base
pool.size = 8
stats.sizes = 1,2
stats.trials = 400
stats.mc_samples = 500
";
    let chain_cfg = "\
dataset.kind = blobs
dataset.classes = 3
dataset.per_class = 60
dataset.seed = 42
dataset.separation = 1.9
split.fraction = 0.5
arch.base.hidden = 16
schedule.epochs = 10
schedule.base_lr = 0.005
schedule.decay_every = 5
chain.models = base,base,base
chain.scheme = fc
objective.kind = ldi_single
objective.alpha = 0.5
";
    // Offline teacher mode so the cache artifact is covered by the
    // byte-for-byte comparison too.
    let update_cfg = format!("{BLOBS_BASE}{ELODI_BOTH}ensemble.mode = offline\n")
        .replace("update.pairings = 16", "update.pairings = 2");

    let cases: Vec<(&str, String, &str)> = vec![
        ("update", update_cfg, "update"),
        ("stats", stats_cfg.to_string(), "stats"),
        ("chain", chain_cfg.to_string(), "chain"),
    ];
    for (name, cfg_text, command) in cases {
        let cfg = root.join(format!("c11_{name}.conf"));
        fs::write(&cfg, &cfg_text).unwrap();
        let dir_a = root.join(format!("c11_{name}_a"));
        let dir_b = root.join(format!("c11_{name}_b"));
        for dir in [&dir_a, &dir_b] {
            run_cli(&[command, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        }
        let mut files = Vec::new();
        collect_files(&dir_a, &dir_a, &mut files);
        assert!(!files.is_empty());
        for rel in files {
            if rel.file_name().map(|n| n.to_string_lossy().starts_with("manifest_")) == Some(true) {
                // Manifests carry wall-clock; compare their artifact hashes.
                let pick = |p: &Path| {
                    fs::read_to_string(p)
                        .unwrap()
                        .lines()
                        .find(|l| l.starts_with("artifacts_hash"))
                        .unwrap()
                        .to_string()
                };
                assert_eq!(pick(&dir_a.join(&rel)), pick(&dir_b.join(&rel)));
                continue;
            }
            let a = fs::read(dir_a.join(&rel)).unwrap();
            let b = fs::read(dir_b.join(&rel)).unwrap();
            assert_eq!(a, b, "{} differs across reruns of {name}", rel.display());
        }
    }
    println!("criterion 11 PASS: re-executed runs produce byte-identical report files");
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else {
            out.push(path.strip_prefix(base).unwrap().to_path_buf());
        }
    }
}

// ---------------------------------------------------------------------------
// Supporting observation: some negative flips sit far from the old model's
// decision boundary (margin above the median), which is what inhibition of
// large logit displacement targets in the first place.
// ---------------------------------------------------------------------------

#[test]
fn far_from_boundary_negative_flips_exist_without_treatment() {
    // 16 pairings = 32 distinct seeds. A short schedule keeps the models
    // away from full convergence, which is where large-displacement flips
    // (rather than boundary churn) are visible.
    let cfg = BLOBS_BASE
        .replace("schedule.epochs = 100", "schedule.epochs = 15")
        .replace("schedule.base_lr = 0.005", "schedule.base_lr = 0.01");
    let out = run_arm("blobs_nt_short", &format!("{cfg}{NO_TREATMENT}"));
    let mut margins: Vec<f64> = Vec::new();
    let mut flip_margins: Vec<f64> = Vec::new();
    for k in 0..16 {
        let flips = fs::read_to_string(out.join(format!("pair_{k}/flips.csv"))).unwrap();
        for line in flips.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            let margin: f64 = fields[5].parse().unwrap();
            margins.push(margin);
            if fields[4] == "neg_flip" {
                flip_margins.push(margin);
            }
        }
    }
    margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = margins[margins.len() / 2];
    let far = flip_margins.iter().filter(|&&m| m > median).count();
    assert!(
        far > 0,
        "expected at least one negative flip with old margin above the median ({median:.3})"
    );
    println!(
        "supporting PASS: {far} of {} negative flips sit above the median old-model margin {median:.3}",
        flip_margins.len()
    );
}
