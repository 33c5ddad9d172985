//! Logit-displacement statistics between random ensembles.
//!
//! Given a pool of independently seeded models and a fixed probe input,
//! repeatedly draw two disjoint m-member ensembles, average each side's
//! logits, and record the L2 norm of the difference. Averages of m i.i.d.
//! logit vectors concentrate around the pool mean with covariance shrinking
//! like 1/m, so the displacement between two disjoint m-ensembles behaves
//! like a draw from `N(delta_mu, sigma' / m)`; this module both measures the
//! displacement empirically and simulates that model via Monte Carlo plus
//! KDE for comparison.
//!
//! All functions operate on plain per-member logit vectors so synthetic
//! pools (fixed draws from a known Gaussian) exercise the same code paths as
//! pools of trained models.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::ensemble::train_independent_models;
use crate::error::{Error, Result};
use crate::model::{forward_single, MlpArch, MlpModel};
use crate::numerics::{
    estimate_mean_cov, histogram, kde_density, l2_norm, sample_mvn, silverman_bandwidth, vec_sub,
    DensityCurve, GaussianEstimate, Histogram, Matrix,
};
use crate::rng::{stream, Rng};
use crate::train::TrainSchedule;

/// A pool of frozen models sharing architecture and training data but
/// differing in seed.
#[derive(Debug, Clone)]
pub struct SeedPool {
    pub models: Vec<MlpModel>,
    pub arch_tag: String,
}

impl SeedPool {
    /// Trains `n` independent cross-entropy models seeded `base_seed + i`.
    pub fn train(
        arch: &MlpArch,
        arch_tag: &str,
        ds: &LabeledDataset,
        schedule: &TrainSchedule,
        n: usize,
        base_seed: u64,
    ) -> Result<SeedPool> {
        if n < 2 {
            return Err(Error::PoolTooSmall { required: 2, got: n });
        }
        Ok(SeedPool {
            models: train_independent_models(arch, ds, schedule, n, base_seed)?,
            arch_tag: String::from(arch_tag),
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Every member's logits at one probe input.
    pub fn member_logits(&self, features: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.models.iter().map(|m| forward_single(m, features)).collect()
    }
}

/// Second-order model of the displacement between two pools' logits:
/// mean offset `delta_mu` and summed covariance `sigma_sum`.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub delta_mu: Vec<f64>,
    pub sigma_sum: Matrix,
}

impl GaussianFit {
    pub fn delta_mu_norm(&self) -> f64 {
        l2_norm(&self.delta_mu)
    }

    /// Second moment of `|| N(delta_mu, sigma_sum / m) ||`:
    /// `trace(sigma_sum) / m + ||delta_mu||^2`.
    pub fn predicted_mean_sq_norm(&self, m: usize) -> f64 {
        self.sigma_sum.trace() / m as f64 + {
            let n = self.delta_mu_norm();
            n * n
        }
    }
}

/// Everything measured for one `(probe, ensemble size)` pair.
#[derive(Debug, Clone)]
pub struct DisplacementStats {
    pub input_id: usize,
    pub ensemble_size: usize,
    pub norms: Vec<f64>,
    pub histogram: Histogram,
    pub simulated_pmf: DensityCurve,
}

/// One row of the size-scaling table.
#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub ensemble_size: usize,
    pub mean_norm: f64,
    pub mean_sq_norm: f64,
    pub predicted_mean_sq: f64,
}

/// Two disjoint uniformly random index subsets of size `m` from `0..pool_size`.
pub fn draw_disjoint_pair(
    pool_size: usize,
    m: usize,
    trial_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 1 {
        return Err(Error::InvalidParameter { name: "m", reason: "must be >= 1" });
    }
    if pool_size < 2 * m {
        return Err(Error::PoolTooSmall { required: 2 * m, got: pool_size });
    }
    Ok(draw_pair_with_stream(pool_size, m, trial_seed, 0))
}

fn average_rows(pool: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let c = pool[idx[0]].len();
    let mut avg = vec![0.0; c];
    for &i in idx {
        for (a, v) in avg.iter_mut().zip(&pool[i]) {
            *a += v;
        }
    }
    for a in avg.iter_mut() {
        *a /= idx.len() as f64;
    }
    avg
}

/// Per-trial L2 norms of the displacement between two random disjoint
/// m-ensembles.
///
/// Homogeneous case (`pool_b = None`): both ensembles are drawn disjointly
/// from `pool_a`. Heterogeneous case: one ensemble from each pool (each pool
/// must have at least `m` members).
pub fn displacement_norms(
    pool_a: &[Vec<f64>],
    pool_b: Option<&[Vec<f64>]>,
    m: usize,
    trials: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    if trials < 1 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be >= 1" });
    }
    if m < 1 {
        return Err(Error::InvalidParameter { name: "m", reason: "must be >= 1" });
    }
    let mut norms = Vec::with_capacity(trials);
    match pool_b {
        None => {
            if pool_a.len() < 2 * m {
                return Err(Error::PoolTooSmall { required: 2 * m, got: pool_a.len() });
            }
            for t in 0..trials {
                let (e1, e2) = draw_pair_with_stream(pool_a.len(), m, base_seed, t);
                let avg1 = average_rows(pool_a, &e1);
                let avg2 = average_rows(pool_a, &e2);
                norms.push(l2_norm(&vec_sub(&avg1, &avg2)?));
            }
        }
        Some(pool_b) => {
            if pool_a.len() < m {
                return Err(Error::PoolTooSmall { required: m, got: pool_a.len() });
            }
            if pool_b.len() < m {
                return Err(Error::PoolTooSmall { required: m, got: pool_b.len() });
            }
            for t in 0..trials {
                let e1 = draw_subset(pool_a.len(), m, Rng::new(base_seed, stream::trial(t)));
                let e2 = draw_subset(pool_b.len(), m, Rng::new(base_seed, stream::trial_b(t)));
                let avg1 = average_rows(pool_a, &e1);
                let avg2 = average_rows(pool_b, &e2);
                norms.push(l2_norm(&vec_sub(&avg1, &avg2)?));
            }
        }
    }
    Ok(norms)
}

/// Partial Fisher-Yates: only the first 2m slots need to be random.
fn draw_pair_with_stream(
    pool_size: usize,
    m: usize,
    base_seed: u64,
    trial: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..pool_size).collect();
    let mut rng = Rng::new(base_seed, stream::trial(trial));
    for i in 0..(2 * m) {
        let j = i + rng.next_below(pool_size - i);
        indices.swap(i, j);
    }
    (indices[..m].to_vec(), indices[m..2 * m].to_vec())
}

fn draw_subset(pool_size: usize, m: usize, mut rng: Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..pool_size).collect();
    for i in 0..m {
        let j = i + rng.next_below(pool_size - i);
        indices.swap(i, j);
    }
    indices[..m].to_vec()
}

/// Fits the displacement model from per-member logits.
///
/// Heterogeneous (`pool_b = Some`): `delta_mu = mu_a - mu_b`,
/// `sigma_sum = sigma_a + sigma_b`. Homogeneous (`pool_b = None`):
/// `delta_mu` is forced to zero and `sigma_sum = 2 * sigma_a`.
pub fn fit_gaussian_model(pool_a: &[Vec<f64>], pool_b: Option<&[Vec<f64>]>) -> Result<GaussianFit> {
    let est_a = estimate_mean_cov(pool_a)?;
    match pool_b {
        None => Ok(GaussianFit {
            delta_mu: vec![0.0; est_a.mean.len()],
            sigma_sum: est_a.cov.scale(2.0),
        }),
        Some(pool_b) => {
            let est_b = estimate_mean_cov(pool_b)?;
            Ok(GaussianFit {
                delta_mu: vec_sub(&est_a.mean, &est_b.mean)?,
                sigma_sum: est_a.cov.add(&est_b.cov)?,
            })
        }
    }
}

/// Monte-Carlo + KDE estimate of the displacement-norm density under the
/// fitted model: draw `n_mc` vectors from `N(delta_mu, sigma_sum / m)`, take
/// norms, and smooth them onto `query_grid`.
pub fn simulate_displacement_pmf(
    fit: &GaussianFit,
    m: usize,
    n_mc: usize,
    seed: u64,
    query_grid: &[f64],
) -> Result<DensityCurve> {
    if n_mc < 100 {
        return Err(Error::InvalidParameter { name: "n_mc", reason: "must be >= 100" });
    }
    if m < 1 {
        return Err(Error::InvalidParameter { name: "m", reason: "must be >= 1" });
    }
    let est = GaussianEstimate { mean: fit.delta_mu.clone(), cov: fit.sigma_sum.scale(1.0 / m as f64) };
    let draws = sample_mvn(&est, n_mc, seed)?;
    let norms: Vec<f64> = draws.iter().map(|v| l2_norm(v)).collect();
    let bandwidth = silverman_bandwidth(&norms);
    kde_density(&norms, bandwidth, query_grid)
}

/// Empirical and predicted displacement across a list of ensemble sizes.
///
/// `predicted_mean_sq = trace(sigma_sum) / m + ||delta_mu||^2`, the second
/// moment of the fitted Gaussian model.
pub fn scaling_report(
    pool_a: &[Vec<f64>],
    pool_b: Option<&[Vec<f64>]>,
    sizes: &[usize],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<ScalingRow>> {
    let fit = fit_gaussian_model(pool_a, pool_b)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let norms = displacement_norms(pool_a, pool_b, m, trials, base_seed)?;
        let n = norms.len() as f64;
        let mean_norm = norms.iter().sum::<f64>() / n;
        let mean_sq_norm = norms.iter().map(|v| v * v).sum::<f64>() / n;
        rows.push(ScalingRow {
            ensemble_size: m,
            mean_norm,
            mean_sq_norm,
            predicted_mean_sq: fit.predicted_mean_sq_norm(m),
        });
    }
    Ok(rows)
}

/// Total variation distance between a normalized histogram and a density
/// curve, computed over the histogram's bin grid.
///
/// The curve is integrated per bin by the trapezoid rule on its query grid;
/// curve mass outside every histogram bin counts fully toward the distance.
pub fn histogram_pmf_tv(hist: &Histogram, pmf: &DensityCurve) -> f64 {
    if hist.total == 0 {
        return 1.0;
    }
    let nbins = hist.counts.len();
    let mut curve_mass = vec![0.0; nbins];
    let mut outside_mass = 0.0;
    for w in pmf.query_points.windows(2).zip(pmf.densities.windows(2)) {
        let (q, d) = w;
        let width = q[1] - q[0];
        if width <= 0.0 {
            continue;
        }
        let mass = 0.5 * (d[0] + d[1]) * width;
        let mid = 0.5 * (q[0] + q[1]);
        let bin = crate::fmath::floor((mid - hist.origin) / hist.bin_width) as i64 - hist.min_bin;
        if bin >= 0 && (bin as usize) < nbins {
            curve_mass[bin as usize] += mass;
        } else {
            outside_mass += mass;
        }
    }
    // KDE mass beyond the query grid is unaccounted for; treat it as outside.
    let covered: f64 = curve_mass.iter().sum::<f64>() + outside_mass;
    outside_mass += (1.0 - covered).max(0.0);

    let mut tv = outside_mass;
    for (i, &mass) in curve_mass.iter().enumerate() {
        tv += crate::fmath::abs(hist.frequency(i) - mass);
    }
    0.5 * tv
}

/// Runs the full per-probe pipeline for one ensemble size: empirical norms,
/// histogram, model fit, and the simulated PMF on a shared grid.
#[allow(clippy::too_many_arguments)]
pub fn probe_displacement_stats(
    pool_a: &[Vec<f64>],
    pool_b: Option<&[Vec<f64>]>,
    input_id: usize,
    m: usize,
    trials: usize,
    base_seed: u64,
    n_mc: usize,
    bin_width: f64,
    query_grid: &[f64],
) -> Result<(DisplacementStats, GaussianFit)> {
    let norms = displacement_norms(pool_a, pool_b, m, trials, base_seed)?;
    let hist = histogram(&norms, bin_width, 0.0)?;
    let fit = fit_gaussian_model(pool_a, pool_b)?;
    let pmf = simulate_displacement_pmf(&fit, m, n_mc, base_seed ^ 0x5117, query_grid)?;
    Ok((DisplacementStats { input_id, ensemble_size: m, norms, histogram: hist, simulated_pmf: pmf }, fit))
}

/// Evenly spaced grid of `points` values over `[0, hi]`.
pub fn norm_grid(hi: f64, points: usize) -> Vec<f64> {
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let n = points.max(2);
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_pool(est: &GaussianEstimate, n: usize, seed: u64) -> Vec<Vec<f64>> {
        sample_mvn(est, n, seed).unwrap()
    }

    fn unit_est(dim: usize) -> GaussianEstimate {
        GaussianEstimate { mean: vec![0.0; dim], cov: Matrix::identity(dim) }
    }

    #[test]
    fn disjoint_pair_partitions_small_pool() {
        let (e1, e2) = draw_disjoint_pair(4, 2, 55).unwrap();
        let mut all: Vec<usize> = e1.iter().chain(e2.iter()).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn disjoint_pair_deterministic_and_varied() {
        assert_eq!(draw_disjoint_pair(8, 2, 9).unwrap(), draw_disjoint_pair(8, 2, 9).unwrap());
        let mut distinct = alloc::collections::BTreeSet::new();
        for t in 0..100u64 {
            distinct.insert(draw_disjoint_pair(8, 2, t).unwrap());
        }
        assert!(distinct.len() > 50, "only {} distinct pairs", distinct.len());
    }

    #[test]
    fn disjoint_pair_rejects_small_pool() {
        assert!(matches!(draw_disjoint_pair(3, 2, 0), Err(Error::PoolTooSmall { .. })));
    }

    #[test]
    fn clone_pool_has_zero_displacement() {
        let pool = vec![vec![1.0, -2.0]; 4];
        let norms = displacement_norms(&pool, None, 2, 10, 3).unwrap();
        assert!(norms.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn norms_are_nonnegative() {
        let pool = synthetic_pool(&unit_est(3), 64, 21);
        let norms = displacement_norms(&pool, None, 4, 200, 5).unwrap();
        assert!(norms.iter().all(|&n| n >= 0.0));
    }

    #[test]
    fn mean_sq_norm_matches_clt_trace() {
        // Members ~ N(0, I_2): E||disp||^2 = trace(2 I / m) = 4 / m.
        let pool = synthetic_pool(&unit_est(2), 4096, 33);
        for m in [1usize, 2, 4] {
            let norms = displacement_norms(&pool, None, m, 5000, 7).unwrap();
            let mean_sq = norms.iter().map(|v| v * v).sum::<f64>() / norms.len() as f64;
            let predicted = 4.0 / m as f64;
            assert!(
                (mean_sq - predicted).abs() / predicted < 0.1,
                "m={m}: {mean_sq} vs {predicted}"
            );
        }
    }

    #[test]
    fn homogeneous_fit_forces_zero_mean() {
        let pool = synthetic_pool(
            &GaussianEstimate { mean: vec![5.0, -3.0], cov: Matrix::identity(2) },
            128,
            9,
        );
        let fit = fit_gaussian_model(&pool, None).unwrap();
        assert_eq!(fit.delta_mu, vec![0.0, 0.0]);
        assert!(fit.sigma_sum.is_symmetric(1e-12));
    }

    #[test]
    fn heterogeneous_fit_recovers_mean_offset() {
        let tiny = Matrix::identity(2).scale(1e-4);
        let a = synthetic_pool(&GaussianEstimate { mean: vec![0.0, 0.0], cov: tiny.clone() }, 256, 1);
        let b = synthetic_pool(&GaussianEstimate { mean: vec![3.0, 4.0], cov: tiny }, 256, 2);
        let fit = fit_gaussian_model(&a, Some(&b)).unwrap();
        assert!((fit.delta_mu_norm() - 5.0).abs() < 0.01, "{}", fit.delta_mu_norm());
    }

    #[test]
    fn simulated_pmf_degenerate_spikes_at_zero() {
        let fit = GaussianFit { delta_mu: vec![0.0, 0.0], sigma_sum: Matrix::zeros(2, 2) };
        let grid = norm_grid(1.0, 64);
        let pmf = simulate_displacement_pmf(&fit, 1, 200, 3, &grid).unwrap();
        let peak = pmf.densities.iter().cloned().fold(0.0, f64::max);
        assert_eq!(pmf.densities[0], peak);
        assert!(peak > 1.0);
    }

    #[test]
    fn simulated_norm_sq_matches_chi_squared_moment() {
        // delta_mu = 0, sigma' = 2 I_2, m = 1: ||x||^2 ~ 2 chi^2(2), mean 4.
        let fit = GaussianFit { delta_mu: vec![0.0, 0.0], sigma_sum: Matrix::identity(2).scale(2.0) };
        let est = GaussianEstimate { mean: fit.delta_mu.clone(), cov: fit.sigma_sum.clone() };
        let draws = sample_mvn(&est, 20_000, 77).unwrap();
        let mean_sq = draws.iter().map(|v| {
            let n = l2_norm(v);
            n * n
        }).sum::<f64>() / draws.len() as f64;
        assert!((mean_sq - 4.0).abs() / 4.0 < 0.05, "{mean_sq}");
    }

    #[test]
    fn large_offset_concentrates_near_its_norm() {
        let fit = GaussianFit {
            delta_mu: vec![10.0, 0.0],
            sigma_sum: Matrix::identity(2).scale(0.01),
        };
        let grid = norm_grid(14.0, 512);
        let pmf = simulate_displacement_pmf(&fit, 16, 1000, 5, &grid).unwrap();
        let peak_at = grid[pmf
            .densities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0];
        assert!((peak_at - 10.0).abs() < 0.2, "peak at {peak_at}");
    }

    #[test]
    fn scaling_report_shows_inverse_m_decay() {
        let pool = synthetic_pool(&unit_est(2), 4096, 12);
        let rows = scaling_report(&pool, None, &[1, 2, 4, 8], 3000, 8).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].mean_sq_norm < w[0].mean_sq_norm);
        }
        let ratio = rows[3].mean_sq_norm / rows[0].mean_sq_norm;
        assert!((ratio - 0.125).abs() < 0.125 * 0.2, "ratio {ratio}");
    }

    #[test]
    fn heterogeneous_mean_norm_approaches_offset_floor() {
        // With fixed finite pools the floor is the fitted offset of those
        // pools, not the generator's nominal one.
        let cov = Matrix::identity(2).scale(0.5);
        let a = synthetic_pool(&GaussianEstimate { mean: vec![0.0, 0.0], cov: cov.clone() }, 512, 3);
        let b = synthetic_pool(&GaussianEstimate { mean: vec![3.0, 4.0], cov }, 512, 4);
        let fit = fit_gaussian_model(&a, Some(&b)).unwrap();
        let floor = fit.delta_mu_norm();
        assert!((floor - 5.0).abs() < 0.2, "fitted floor {floor}");
        let rows = scaling_report(&a, Some(&b), &[2, 8, 32], 2000, 6).unwrap();
        let gaps: Vec<f64> = rows.iter().map(|r| (r.mean_norm - floor).abs()).collect();
        assert!(gaps[2] < gaps[0], "gaps {gaps:?}");
        assert!((rows[2].mean_norm - floor).abs() / floor < 0.02);
    }

    #[test]
    fn tv_distance_of_matching_distributions_is_small() {
        let est = unit_est(2);
        let pool = synthetic_pool(&est, 4096, 44);
        let norms = displacement_norms(&pool, None, 1, 4000, 9).unwrap();
        let hist = histogram(&norms, 0.25, 0.0).unwrap();
        let fit = fit_gaussian_model(&pool, None).unwrap();
        let hi = norms.iter().cloned().fold(0.0, f64::max) * 1.5;
        let pmf = simulate_displacement_pmf(&fit, 1, 8000, 10, &norm_grid(hi, 512)).unwrap();
        let tv = histogram_pmf_tv(&hist, &pmf);
        assert!(tv < 0.08, "tv {tv}");
    }

    #[test]
    fn tv_distance_of_disjoint_distributions_is_large() {
        let hist = histogram(&[0.1, 0.2, 0.3], 0.5, 0.0).unwrap();
        let fit = GaussianFit { delta_mu: vec![50.0, 0.0], sigma_sum: Matrix::identity(2) };
        let pmf = simulate_displacement_pmf(&fit, 1, 500, 2, &norm_grid(60.0, 256)).unwrap();
        let tv = histogram_pmf_tv(&hist, &pmf);
        assert!(tv > 0.9, "tv {tv}");
    }

    #[test]
    fn probe_stats_pipeline_is_consistent() {
        let pool = synthetic_pool(&unit_est(2), 256, 5);
        let grid = norm_grid(6.0, 128);
        let (stats, fit) =
            probe_displacement_stats(&pool, None, 17, 2, 500, 11, 1000, 0.5, &grid).unwrap();
        assert_eq!(stats.input_id, 17);
        assert_eq!(stats.ensemble_size, 2);
        assert_eq!(stats.norms.len(), 500);
        assert_eq!(stats.histogram.total, 500);
        assert_eq!(stats.simulated_pmf.query_points, grid);
        assert_eq!(fit.delta_mu, vec![0.0, 0.0]);
        // Components match the standalone calls with the same seeds.
        let norms = displacement_norms(&pool, None, 2, 500, 11).unwrap();
        assert_eq!(stats.norms, norms);
        assert!(histogram_pmf_tv(&stats.histogram, &stats.simulated_pmf) < 0.2);
    }
}
