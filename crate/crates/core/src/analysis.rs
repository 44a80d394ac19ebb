//! Post-processing: diversity-slope fits, singular-value sweeps and
//! steering-vector orthogonality measurements.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrays::{steering_vector, Angle, ArrayGeometry};
use crate::channel::{embed, ChannelLayout, SubchannelSpec};
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::montecarlo::{BerCurve, EstimatorKind};
use crate::rng::{stream, Purpose, StreamId};

/// Only points at or below this error rate enter a slope fit.
pub const SLOPE_MAX_BER: f64 = 1e-2;
/// Width of the fit window, counted back from the highest qualifying point.
pub const SLOPE_WINDOW_DB: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Estimated diversity order (negated log-log slope).
    pub slope: f64,
    pub std_err: f64,
    /// SNRs (dB) of the points used.
    pub snr_db: Vec<f64>,
}

/// Least-squares slope of `-log10(BER)` against `log10(SNR)`.
///
/// A measured point qualifies when it is not capped, has at least
/// `min_errors` errors and `0 < BER <= 1e-2`; reference curves qualify
/// wherever their BER is positive. The fit uses the qualifying points
/// within 10 dB of the highest-SNR qualifying point and needs at least
/// three of them.
pub fn fit_slope(curve: &BerCurve, min_errors: u64) -> Result<SlopeFit> {
    let qualifies = |p: &&crate::montecarlo::BerPoint| match curve.kind {
        EstimatorKind::Reference => p.ber > 0.0 && p.ber.is_finite(),
        _ => !p.capped && p.errors >= min_errors && p.ber > 0.0 && p.ber <= SLOPE_MAX_BER,
    };
    let q: Vec<_> = curve.points.iter().filter(qualifies).collect();
    let top = q.iter().map(|p| p.snr_db).fold(f64::NEG_INFINITY, f64::max);
    let used: Vec<(f64, f64)> = q
        .iter()
        .filter(|p| p.snr_db >= top - SLOPE_WINDOW_DB)
        .map(|p| (p.snr_db / 10.0, -p.ber.log10()))
        .collect();
    if used.len() < 3 {
        return Err(Error::InsufficientPoints {
            found: used.len(),
            needed: 3,
        });
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints { found: 1, needed: 3 });
    }
    let slope = sxy / sxx;
    let ssr: f64 = used.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Ok(SlopeFit {
        slope,
        std_err: (ssr / (n - 2.0) / sxx).sqrt(),
        snr_db: used.iter().map(|p| p.0 * 10.0).collect(),
    })
}

/// Parameters of a singular-value sweep over receive array sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// RAUs per side.
    pub k: usize,
    pub paths: usize,
    pub g_db: f64,
    /// Transmit array size; equals the receive size when absent.
    pub n_t: Option<usize>,
    pub n_r: Vec<usize>,
    /// 1-based singular value indices to report.
    pub indices: Vec<usize>,
    pub seeds: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_r: usize,
    pub n_t: usize,
    /// Mean over seeds of every singular value, largest first.
    pub mean: Vec<f64>,
}

impl SweepRow {
    /// Mean of the `index`-th (1-based) largest singular value.
    pub fn sigma(&self, index: usize) -> f64 {
        self.mean[index - 1]
    }
}

/// Mean ordered singular values of the full (dense) channel matrix per
/// receive array size. Seed `s` of the sweep draws trial `s` of the base
/// seed.
pub fn singular_value_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.seeds == 0 {
        return Err(Error::InvalidSpec("need at least one seed".into()));
    }
    cfg.n_r
        .iter()
        .map(|&n_r| {
            let n_t = cfg.n_t.unwrap_or(n_r);
            let dim = cfg.k * n_r.min(n_t);
            if let Some(&bad) = cfg.indices.iter().find(|&&i| i == 0 || i > dim) {
                return Err(Error::InvalidSpec(format!(
                    "singular value index {bad} outside 1..={dim}"
                )));
            }
            let layout = ChannelLayout::homogeneous(
                cfg.k,
                cfg.k,
                ArrayGeometry::half_wave_ula(n_r)?,
                ArrayGeometry::half_wave_ula(n_t)?,
                SubchannelSpec::new(cfg.paths, cfg.g_db)?,
            )?;
            let per_seed = (0..cfg.seeds)
                .into_par_iter()
                .map(|s| Ok(singular_values(layout.draw(cfg.seed, s)?.matrix())))
                .collect::<Result<Vec<_>>>()?;
            let mut mean = vec![0.0; dim];
            for sv in &per_seed {
                for (m, v) in mean.iter_mut().zip(sv) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= cfg.seeds as f64);
            Ok(SweepRow { n_r, n_t, mean })
        })
        .collect()
}

/// CSV with one row per array size: `n_r,n_t,sigma_<i>...` for the
/// requested indices.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], indices: &[usize], mut w: W) -> std::io::Result<()> {
    let cols: Vec<String> = indices.iter().map(|i| format!("sigma_{i}")).collect();
    writeln!(w, "n_r,n_t,{}", cols.join(","))?;
    for r in rows {
        let vals: Vec<String> = indices.iter().map(|&i| r.sigma(i).to_string()).collect();
        writeln!(w, "{},{},{}", r.n_r, r.n_t, vals.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityRow {
    pub n: usize,
    /// 99th percentile of `|a(x)^H a(y)|` over distinct random angle pairs.
    pub p99: f64,
    /// `|a(x)^H a(x)|` for one random angle.
    pub identical: f64,
    /// Largest `|e_i^H e_j|` seen between vectors embedded in different RAUs.
    pub cross_rau: f64,
    /// Pairs that drew identical angles and were excluded.
    pub excluded: u64,
}

/// Percentile statistics of half-wavelength ULA response overlaps.
pub fn orthogonality_decay(ns: &[usize], draws: u64, seed: u64) -> Result<Vec<OrthogonalityRow>> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec("array sizes must be strictly increasing".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidSpec("need at least one draw".into()));
    }
    ns.iter()
        .enumerate()
        .map(|(idx, &n)| {
            let geom = ArrayGeometry::half_wave_ula(n)?;
            let mut rng = stream(seed, StreamId::new(idx as u64, Purpose::Angles, 0, 0));
            let mut overlaps = Vec::with_capacity(draws as usize);
            let mut excluded = 0;
            let mut cross: f64 = 0.0;
            for _ in 0..draws {
                let (x, y) = (Angle::sample(&mut rng), Angle::sample(&mut rng));
                let (a, b) = (steering_vector(&geom, x), steering_vector(&geom, y));
                if x.azimuth == y.azimuth {
                    excluded += 1;
                } else {
                    overlaps.push(a.dotc(&b).norm());
                }
                let (ea, eb) = (embed(&a, 0, 2)?, embed(&b, 1, 2)?);
                cross = cross.max(ea.dotc(&eb).norm());
            }
            let one = Angle::azimuth_only(rng.random_range(-PI / 2.0..PI / 2.0))?;
            let a = steering_vector(&geom, one);
            overlaps.sort_by(|p, q| p.total_cmp(q));
            let rank = ((0.99 * overlaps.len() as f64).ceil() as usize).clamp(1, overlaps.len().max(1));
            Ok(OrthogonalityRow {
                n,
                p99: overlaps.get(rank - 1).copied().unwrap_or(0.0),
                identical: a.dotc(&a).norm(),
                cross_rau: cross,
                excluded,
            })
        })
        .collect()
}

/// `|a^H b|` for two half-wavelength ULA responses, in closed form
/// (Dirichlet kernel).
pub fn ula_overlap(n: usize, x: f64, y: f64) -> f64 {
    let half = PI * 0.5 * (x.sin() - y.sin());
    if half.sin().abs() < 1e-300 {
        return 1.0;
    }
    ((n as f64 * half).sin() / (n as f64 * half.sin())).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::BerPoint;
    use num_complex::Complex64;
    use crate::orderstats::dgv_curve;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn measured(points: &[(f64, f64)]) -> BerCurve {
        BerCurve {
            kind: EstimatorKind::BitCount,
            seed: 0,
            config_hash: String::new(),
            points: points
                .iter()
                .map(|&(snr_db, ber)| BerPoint {
                    snr_db,
                    ber,
                    errors: 1000,
                    trials: 1,
                    invalid_trials: 0,
                    bits: 1,
                    std_err: 0.0,
                    capped: false,
                })
                .collect(),
        }
    }

    #[test]
    fn exact_power_law() {
        // BER = (10 snr)^-2
        let pts: Vec<_> = (0..8)
            .map(|k| {
                let db = 5.0 + k as f64;
                (db, (10.0 * 10f64.powf(db / 10.0)).powi(-2))
            })
            .collect();
        let fit = fit_slope(&measured(&pts), 100).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
        assert!(fit.std_err < 1e-9);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let pts: Vec<_> = (0..8)
                .map(|k| {
                    let db = 10.0 + 1.25 * k as f64;
                    let noise = 1.0 + 0.05 * rng.random_range(-1.0..1.0);
                    (db, 1e-2 * 10f64.powf(-3.0 * (db - 10.0) / 10.0) * noise)
                })
                .collect();
            let fit = fit_slope(&measured(&pts), 100).unwrap();
            assert!((fit.slope - 3.0).abs() <= 0.1, "trial {trial}: {}", fit.slope);
        }
    }

    #[test]
    fn reference_curve_slope_is_exact() {
        let grid: Vec<f64> = (0..=20).map(|k| 2.0 * k as f64).collect();
        let c = dgv_curve(3, &grid, 10.0, 1e-3).unwrap();
        let fit = fit_slope(&c, 100).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert_eq!(fit.snr_db.len(), 6);
    }

    #[test]
    fn window_rules() {
        // too few low-BER points
        let c = measured(&[(0.0, 0.2), (10.0, 0.05), (20.0, 1e-3), (30.0, 1e-4)]);
        assert!(matches!(
            fit_slope(&c, 100),
            Err(Error::InsufficientPoints { found: 2, needed: 3 })
        ));
        // capped and low-error points are ignored
        let mut c = measured(&[(10.0, 1e-3), (12.0, 1e-4), (14.0, 1e-5), (16.0, 1e-7), (18.0, 1e-9)]);
        c.points[3].capped = true;
        c.points[4].errors = 10;
        let fit = fit_slope(&c, 100).unwrap();
        assert_eq!(fit.snr_db, vec![10.0, 12.0, 14.0]);
        assert!((fit.slope - 5.0).abs() < 1e-9);
        // only the top decade of qualifying points
        let pts: Vec<_> = (0..=8).map(|k| (5.0 * k as f64, 1e-3 / (k + 1) as f64)).collect();
        let fit = fit_slope(&measured(&pts), 100).unwrap();
        assert_eq!(fit.snr_db, vec![30.0, 35.0, 40.0]);
    }

    #[test]
    fn rank_one_channel_has_one_singular_value() {
        let rows = singular_value_sweep(&SweepConfig {
            k: 1,
            paths: 1,
            g_db: 0.0,
            n_t: None,
            n_r: vec![8],
            indices: vec![1, 2],
            seeds: 5,
            seed: 1,
        })
        .unwrap();
        assert!(rows[0].sigma(2) < 1e-12 * rows[0].sigma(1));
    }

    #[test]
    fn sweep_rejects_bad_index() {
        let cfg = SweepConfig {
            k: 1,
            paths: 1,
            g_db: 0.0,
            n_t: Some(4),
            n_r: vec![8],
            indices: vec![5],
            seeds: 1,
            seed: 1,
        };
        assert!(singular_value_sweep(&cfg).is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = vec![SweepRow {
            n_r: 4,
            n_t: 4,
            mean: vec![3.0, 2.0, 0.5],
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &[1, 3], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n_r,n_t,sigma_1,sigma_3\n4,4,3,0.5\n");
    }

    #[test]
    fn orthogonality_basics() {
        let rows = orthogonality_decay(&[16, 64, 256], 4000, 2).unwrap();
        for r in &rows {
            assert!((r.identical - 1.0).abs() < 1e-12);
            assert_eq!(r.cross_rau, 0.0);
        }
        assert!(rows[2].p99 <= rows[0].p99);
        assert!(orthogonality_decay(&[64, 16], 10, 0).is_err());
    }

    #[test]
    fn overlap_closed_form_matches_vectors() {
        let g = ArrayGeometry::half_wave_ula(37).unwrap();
        for (x, y) in [(0.1, 0.5), (-1.2, 1.3), (0.3, 0.3)] {
            let a = steering_vector(&g, Angle::azimuth_only(x).unwrap());
            let b = steering_vector(&g, Angle::azimuth_only(y).unwrap());
            let direct: Complex64 = a.dotc(&b);
            assert!((direct.norm() - ula_overlap(37, x, y)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn slope_ignores_horizontal_shift(shift in -15.0f64..15.0, g in 1usize..8) {
            let grid: Vec<f64> = (0..=12).map(|k| 3.0 * k as f64).collect();
            let a = fit_slope(&dgv_curve(g, &grid, 10.0, 1e-2).unwrap(), 100).unwrap();
            let b = fit_slope(&dgv_curve(g, &grid, 10.0 + shift, 1e-2).unwrap(), 100).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-9);
        }
    }
}
