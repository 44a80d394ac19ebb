//! Generalized selection combining over Rayleigh branches: the density of
//! the `l`-th largest branch SNR, simulated GSC error rates and pure
//! power-law reference curves.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::bpsk_ber;
use crate::error::{Error, Result};
use crate::montecarlo::{BerCurve, BerPoint, EstimatorKind};
use crate::rng::{stream, Purpose, StreamId};

/// Draws per independent random stream in [`gsc_ber_sim`].
pub const GSC_CHUNK: u64 = 4096;

/// A GSC receiver choosing the branch with the `rank`-th highest SNR among
/// `branch_weights.len()` Rayleigh branches. Branch `k` has average SNR
/// `branch_weights[k] * snr` at grid value `snr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GscConfig {
    pub rank: usize,
    pub branch_weights: Vec<f64>,
}

impl GscConfig {
    /// `branches` i.i.d. branches with unit relative weight.
    pub fn iid(branches: usize, rank: usize) -> Result<Self> {
        let c = GscConfig {
            rank,
            branch_weights: vec![1.0; branches],
        };
        c.validate()?;
        Ok(c)
    }

    pub fn new(rank: usize, branch_weights: Vec<f64>) -> Result<Self> {
        let c = GscConfig { rank, branch_weights };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.branch_weights.len();
        if self.rank == 0 || self.rank > l {
            return Err(Error::InvalidSpec(format!(
                "selection rank must satisfy 1 <= l <= L, got l = {} with L = {l}",
                self.rank
            )));
        }
        if let Some(w) = self.branch_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSpec(format!("branch SNRs must be positive, got {w}")));
        }
        Ok(())
    }

    pub fn branches(&self) -> usize {
        self.branch_weights.len()
    }

    pub fn is_iid(&self) -> bool {
        self.branch_weights.iter().all(|&w| w == self.branch_weights[0])
    }

    /// Diversity order `L - l + 1`.
    pub fn diversity(&self) -> usize {
        self.branches() - self.rank + 1
    }
}

/// Density of the `rank`-th largest of `L` i.i.d. exponential SNRs with
/// mean `mean_snr`, at `gamma`:
/// `L! / ((L-l)! (l-1)!) F^(L-l) (1-F)^(l-1) f`.
pub fn order_stat_pdf(cfg: &GscConfig, mean_snr: f64, gamma: f64) -> Result<f64> {
    cfg.validate()?;
    if !cfg.is_iid() {
        return Err(Error::InvalidSpec(
            "closed-form order-statistic density needs i.i.d. branches".into(),
        ));
    }
    if !(mean_snr.is_finite() && mean_snr > 0.0) {
        return Err(Error::InvalidSpec(format!("mean SNR must be positive, got {mean_snr}")));
    }
    if gamma < 0.0 {
        return Ok(0.0);
    }
    let (big_l, l) = (cfg.branches(), cfg.rank);
    let mean = mean_snr * cfg.branch_weights[0];
    let tail = (-gamma / mean).exp();
    let cdf = -(-gamma / mean).exp_m1();
    let pdf = tail / mean;
    let coeff = big_l as f64 * binomial(big_l - 1, l - 1);
    Ok(coeff * cdf.powi((big_l - l) as i32) * tail.powi((l - 1) as i32) * pdf)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `rank`-th largest of the weighted exponential branch SNRs (unit mean
/// SNR scale).
pub fn sample_order_stat<R: Rng + ?Sized>(cfg: &GscConfig, rng: &mut R, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(cfg.branch_weights.iter().map(|w| w * rng.sample::<f64, _>(Exp1)));
    let idx = cfg.rank - 1;
    let (_, v, _) = scratch.select_nth_unstable_by(idx, |a, b| b.total_cmp(a));
    *v
}

/// Simulated GSC error rate over `snr_grid_db`, estimated as the average of
/// the conditional BPSK error probability `Q(sqrt(2 gamma_l))` over `draws`
/// realizations of the selected branch. The same draws serve every grid
/// point.
///
/// Each point reports the estimator's standard error and, in `errors`, the
/// equivalent error count `(mean / std_err)^2`: the number of bit errors a
/// plain error-counting simulation would need for the same relative
/// accuracy.
pub fn gsc_ber_sim(cfg: &GscConfig, snr_grid_db: &[f64], draws: u64, seed: u64) -> Result<BerCurve> {
    cfg.validate()?;
    if draws < 2 {
        return Err(Error::InvalidSpec("need at least two draws".into()));
    }
    let snrs: Vec<f64> = snr_grid_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
    let chunks = draws.div_ceil(GSC_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = GSC_CHUNK.min(draws - c * GSC_CHUNK);
            let mut rng = stream(seed, StreamId::new(c, Purpose::Gsc, 0, 0));
            let mut scratch = Vec::with_capacity(cfg.branches());
            let mut sum = vec![0.0; snrs.len()];
            let mut sum_sq = vec![0.0; snrs.len()];
            for _ in 0..n {
                let v = sample_order_stat(cfg, &mut rng, &mut scratch);
                for (k, s) in snrs.iter().enumerate() {
                    let q = bpsk_ber(s * v);
                    sum[k] += q;
                    sum_sq[k] += q * q;
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; snrs.len()];
    let mut sum_sq = vec![0.0; snrs.len()];
    for (s, q) in &partial {
        for k in 0..snrs.len() {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
    }
    let n = draws as f64;
    let points = snr_grid_db
        .iter()
        .enumerate()
        .map(|(k, &db)| {
            let mean = sum[k] / n;
            let var = ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
            let se = (var / n).sqrt();
            let errors = if mean > 0.0 && se > 0.0 {
                ((mean / se).powi(2)).round().min(u64::MAX as f64) as u64
            } else {
                0
            };
            BerPoint {
                snr_db: db,
                ber: mean,
                errors,
                trials: draws,
                invalid_trials: 0,
                bits: draws,
                std_err: se,
                capped: false,
            }
        })
        .collect();
    Ok(BerCurve {
        kind: EstimatorKind::ConditionalMean,
        seed,
        config_hash: crate::montecarlo::hash_json(&(cfg, snr_grid_db, draws)),
        points,
    })
}

/// Reference curve `c * snr^(-diversity)` passing through
/// `(anchor_snr_db, anchor_ber)`.
pub fn dgv_curve(diversity: usize, snr_grid_db: &[f64], anchor_snr_db: f64, anchor_ber: f64) -> Result<BerCurve> {
    if diversity == 0 {
        return Err(Error::InvalidSpec("diversity order must be at least 1".into()));
    }
    if !(anchor_ber > 0.0 && anchor_ber.is_finite() && anchor_snr_db.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "anchor must be a finite point with positive BER, got ({anchor_snr_db}, {anchor_ber})"
        )));
    }
    let points = snr_grid_db
        .iter()
        .map(|&db| BerPoint {
            snr_db: db,
            ber: anchor_ber * 10f64.powf(-(diversity as f64) * (db - anchor_snr_db) / 10.0),
            errors: 0,
            trials: 0,
            invalid_trials: 0,
            bits: 0,
            std_err: 0.0,
            capped: false,
        })
        .collect();
    Ok(BerCurve {
        kind: EstimatorKind::Reference,
        seed: 0,
        config_hash: crate::montecarlo::hash_json(&(diversity, snr_grid_db, anchor_snr_db, anchor_ber)),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature.
    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, whole: f64, m: f64, fm: f64, tol: f64, depth: u32) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, whole, m, fm, tol, 50)
    }

    #[test]
    fn single_branch_is_exponential() {
        let cfg = GscConfig::iid(1, 1).unwrap();
        for g in [0.0, 0.3, 2.0, 7.5] {
            let want = (-g / 2.0f64).exp() / 2.0;
            assert!((order_stat_pdf(&cfg, 2.0, g).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn best_of_two() {
        let cfg = GscConfig::iid(2, 1).unwrap();
        for g in [0.1, 1.0, 4.0] {
            let e = (-g / 1.5f64).exp();
            let want = 2.0 * (1.0 - e) * e / 1.5;
            assert!((order_stat_pdf(&cfg, 1.5, g).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for big_l in 1..=8 {
            for l in 1..=big_l {
                let cfg = GscConfig::iid(big_l, l).unwrap();
                let f = |g: f64| order_stat_pdf(&cfg, 1.0, g).unwrap();
                let total: f64 = (0..80).map(|k| integrate(&f, k as f64, k as f64 + 1.0, 1e-14)).sum();
                assert!((total - 1.0).abs() < 1e-8, "L={big_l} l={l}: {total}");
            }
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(GscConfig::iid(3, 0).is_err());
        assert!(GscConfig::iid(3, 4).is_err());
        assert!(GscConfig::new(1, vec![1.0, -1.0]).is_err());
        let inid = GscConfig::new(1, vec![1.0, 2.0]).unwrap();
        assert!(order_stat_pdf(&inid, 1.0, 1.0).is_err());
        assert!(order_stat_pdf(&GscConfig::iid(2, 1).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn histogram_matches_density() {
        let cfg = GscConfig::iid(3, 2).unwrap();
        let (draws, bins, top) = (1_000_000u64, 100usize, 6.0);
        let mut counts = vec![0u64; bins + 1];
        let mut scratch = Vec::new();
        let mut rng = stream(11, StreamId::new(0, Purpose::Gsc, 0, 0));
        for _ in 0..draws {
            let v = sample_order_stat(&cfg, &mut rng, &mut scratch);
            let b = ((v / top) * bins as f64) as usize;
            counts[b.min(bins)] += 1;
        }
        let f = |g: f64| order_stat_pdf(&cfg, 1.0, g).unwrap();
        let width = top / bins as f64;
        let mut l1 = 0.0;
        let mut inside = 0.0;
        for (b, &c) in counts.iter().take(bins).enumerate() {
            let p = integrate(&f, b as f64 * width, (b + 1) as f64 * width, 1e-13);
            inside += p;
            l1 += (c as f64 / draws as f64 - p).abs();
        }
        l1 += (counts[bins] as f64 / draws as f64 - (1.0 - inside)).abs();
        assert!(l1 <= 0.02, "L1 = {l1}");
    }

    #[test]
    fn rayleigh_average_matches_closed_form() {
        // E[Q(sqrt(2 g))] over g ~ Exp(mean s) = (1 - sqrt(s / (1 + s))) / 2
        let cfg = GscConfig::iid(1, 1).unwrap();
        let grid = [20.0, 30.0];
        let c = gsc_ber_sim(&cfg, &grid, 200_000, 3).unwrap();
        for p in &c.points {
            let s = 10f64.powf(p.snr_db / 10.0);
            let want = 0.5 * (1.0 - (s / (1.0 + s)).sqrt());
            assert!((p.ber - want).abs() <= 3.0 * p.std_err, "{} vs {want}", p.ber);
        }
    }

    #[test]
    fn worst_branch_is_worse() {
        let grid: Vec<f64> = (0..=10).map(|k| 2.0 * k as f64).collect();
        let best = gsc_ber_sim(&GscConfig::iid(2, 1).unwrap(), &grid, 20_000, 4).unwrap();
        let worst = gsc_ber_sim(&GscConfig::iid(2, 2).unwrap(), &grid, 20_000, 4).unwrap();
        for (a, b) in best.points.iter().zip(&worst.points) {
            assert!(b.ber >= a.ber);
        }
    }

    #[test]
    fn inid_between_iid_extremes() {
        let grid: Vec<f64> = (0..=6).map(|k| 5.0 * k as f64).collect();
        let inid = GscConfig::new(1, vec![0.5, 1.0, 2.0]).unwrap();
        let lo = GscConfig::new(1, vec![0.5; 3]).unwrap();
        let hi = GscConfig::new(1, vec![2.0; 3]).unwrap();
        let (a, b, c) = (
            gsc_ber_sim(&lo, &grid, 100_000, 8).unwrap(),
            gsc_ber_sim(&inid, &grid, 100_000, 9).unwrap(),
            gsc_ber_sim(&hi, &grid, 100_000, 10).unwrap(),
        );
        for k in 0..grid.len() {
            let (w, m, s) = (&a.points[k], &b.points[k], &c.points[k]);
            assert!(m.ber <= w.ber + 3.0 * (w.std_err.powi(2) + m.std_err.powi(2)).sqrt());
            assert!(m.ber >= s.ber - 3.0 * (s.std_err.powi(2) + m.std_err.powi(2)).sqrt());
        }
    }

    #[test]
    fn simulation_is_deterministic_and_thread_independent() {
        let cfg = GscConfig::iid(3, 1).unwrap();
        let grid = [0.0, 10.0];
        let a = gsc_ber_sim(&cfg, &grid, 10_000, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| gsc_ber_sim(&cfg, &grid, 10_000, 5).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.points[0].trials, 10_000);
    }

    #[test]
    fn reference_curves() {
        let c = dgv_curve(1, &[10.0, 20.0], 10.0, 1e-2).unwrap();
        assert!((c.points[1].ber - 1e-3).abs() < 1e-15);
        let c = dgv_curve(3, &[10.0, 20.0], 10.0, 1e-3).unwrap();
        assert!((c.points[1].ber / 1e-6 - 1.0).abs() < 1e-12);
        let c = dgv_curve(9, &[0.0, 10.0], 0.0, 1.0).unwrap();
        assert!((c.points[1].ber.log10() + 9.0).abs() < 1e-12);
        assert!(dgv_curve(0, &[0.0], 0.0, 1.0).is_err());
        assert!(dgv_curve(1, &[0.0], 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn order_densities_sum_to_l_times_parent(big_l in 1usize..9, mean in 0.1f64..10.0, g in 0.0f64..30.0) {
            let parent = order_stat_pdf(&GscConfig::iid(1, 1).unwrap(), mean, g).unwrap();
            let total: f64 = (1..=big_l).map(|l| order_stat_pdf(&GscConfig::iid(big_l, l).unwrap(), mean, g).unwrap()).sum();
            prop_assert!((total - big_l as f64 * parent).abs() <= 1e-10 * (1.0 + big_l as f64 * parent));
        }

        #[test]
        fn density_is_nonnegative(big_l in 1usize..9, l in 1usize..9, g in -1.0f64..50.0) {
            prop_assume!(l <= big_l);
            prop_assert!(order_stat_pdf(&GscConfig::iid(big_l, l).unwrap(), 1.0, g).unwrap() >= 0.0);
        }
    }
}
