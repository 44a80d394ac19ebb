//! Optimal and hybrid (analog + digital) precoders and combiners.
//!
//! Three processing chains are supported:
//!
//! * fully connected: every RF chain drives every antenna of the distributed
//!   array ([`optimal_pair`] / [`svd_pair`] followed by [`hybrid_decompose`]),
//! * partially connected: one RF chain per RAU with block-diagonal analog
//!   stages ([`pc_greedy_assign`]),
//! * multiuser downlink with per-user analog combining and zero-forcing
//!   digital precoding at the base station ([`multiuser_downlink`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{path_table, DistributedChannel, PathEntry};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, frobenius, pinv, CMatrix, CVector};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Entries below this fraction of a column's largest magnitude are treated
/// as structurally zero when taking phases.
const STRUCTURAL_ZERO: f64 = 1e-12;

/// Fully digital transmit/receive directions for `N_s` streams plus the
/// remaining strong directions (used to pad extra RF chains).
#[derive(Debug, Clone)]
pub struct OptimalPair {
    /// `K_t N_t x N_s`, unit-norm columns.
    pub precoder: CMatrix,
    /// `K_r N_r x N_s`, unit-norm columns.
    pub combiner: CMatrix,
    /// Per-stream channel gains, strongest first.
    pub gains: Vec<f64>,
    /// Additional transmit directions in decreasing strength (at most
    /// `L_s - N_s` columns).
    pub tx_extra: CMatrix,
    /// Additional receive directions matching `tx_extra`.
    pub rx_extra: CMatrix,
}

impl OptimalPair {
    pub fn n_streams(&self) -> usize {
        self.precoder.ncols()
    }

    /// Ideal per-stream SNR `(P / N_s) g_l^2` at total power `power`.
    pub fn predicted_snr(&self, power: f64) -> Vec<f64> {
        let n_s = self.n_streams() as f64;
        self.gains.iter().map(|g| power / n_s * g * g).collect()
    }
}

fn check_streams(n_s: usize, l_s: usize) -> Result<()> {
    if n_s == 0 {
        return Err(Error::Precondition("at least one data stream is required".into()));
    }
    if n_s > l_s {
        return Err(Error::Precondition(format!(
            "N_s = {n_s} exceeds the multiplexing gain cap L_s = {l_s} (the channel has only {l_s} paths)"
        )));
    }
    Ok(())
}

fn columns(vs: impl ExactSizeIterator<Item = CVector>, rows: usize) -> CMatrix {
    let n = vs.len();
    let mut m = CMatrix::zeros(rows, n);
    for (k, v) in vs.enumerate() {
        m.set_column(k, &v);
    }
    m
}

/// Path-based optimal pair: stream `l` is sent along the `l`-th strongest
/// path, with precoder column `exp(-j psi_l) a_t` and combiner column `a_r`
/// (both embedded), where `psi_l` is the phase of the path gain.
///
/// This is the singular-vector structure the channel converges to as the
/// per-RAU arrays grow; at finite size the columns are only nearly
/// orthogonal.
pub fn optimal_pair(ch: &DistributedChannel, n_s: usize) -> Result<OptimalPair> {
    let table = path_table(ch);
    check_streams(n_s, table.len())?;
    let (m, n) = ch.matrix().shape();
    let tx_col = |e: &PathEntry| &e.a_t * Complex64::from_polar(1.0, -e.gain.arg());
    Ok(OptimalPair {
        precoder: columns(table[..n_s].iter().map(tx_col), n),
        combiner: columns(table[..n_s].iter().map(|e| e.a_r.clone()), m),
        gains: table[..n_s].iter().map(|e| e.gain.norm()).collect(),
        tx_extra: columns(table[n_s..].iter().map(tx_col), n),
        rx_extra: columns(table[n_s..].iter().map(|e| e.a_r.clone()), m),
    })
}

/// Exact SVD-based optimal pair: the leading `N_s` right/left singular
/// vectors of `H`, with the remaining nonzero singular directions as extras.
pub fn svd_pair(ch: &DistributedChannel, n_s: usize) -> Result<OptimalPair> {
    check_streams(n_s, ch.total_paths())?;
    let svd = ch.svd();
    let s_max = svd.singular_values.first().copied().unwrap_or(0.0);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > crate::linalg::RANK_TOL * s_max)
        .count();
    if rank < n_s {
        return Err(Error::RankDeficient { rank, required: n_s });
    }
    Ok(OptimalPair {
        precoder: svd.v.columns(0, n_s).into_owned(),
        combiner: svd.u.columns(0, n_s).into_owned(),
        gains: svd.singular_values[..n_s].to_vec(),
        tx_extra: svd.v.columns(n_s, rank - n_s).into_owned(),
        rx_extra: svd.u.columns(n_s, rank - n_s).into_owned(),
    })
}

/// How the analog stage is wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    FullyConnected,
    PartiallyConnected,
}

/// Hybrid transmit and receive processing for `N_s` streams.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub architecture: Architecture,
    /// Analog precoder, `K_t N_t x N_t^rf`.
    pub f_t: CMatrix,
    /// Digital precoder, `N_t^rf x N_s`.
    pub w_t: CMatrix,
    /// Analog combiner, `K_r N_r x N_r^rf`.
    pub f_r: CMatrix,
    /// Digital combiner, `N_r^rf x N_s`.
    pub w_r: CMatrix,
    /// Channel gain each stream was designed for.
    pub stream_gains: Vec<f64>,
}

impl BeamformerSet {
    pub fn n_streams(&self) -> usize {
        self.w_t.ncols()
    }

    pub fn precoder(&self) -> CMatrix {
        &self.f_t * &self.w_t
    }

    pub fn combiner(&self) -> CMatrix {
        &self.f_r * &self.w_r
    }

    /// Predicted per-stream SNR `(P / N_s) g_l^2`.
    pub fn predicted_snr(&self, power: f64) -> Vec<f64> {
        let n_s = self.n_streams() as f64;
        self.stream_gains.iter().map(|g| power / n_s * g * g).collect()
    }

    /// `F_r^H H F_t W_t`: what the digital receiver sees per unit symbol.
    pub fn effective_channel(&self, h: &CMatrix) -> CMatrix {
        self.f_r.adjoint() * (h * self.precoder())
    }

    /// RF chains whose output feeds the detector. In the partially connected
    /// architecture only the receive RAUs carrying a stream are used.
    pub fn detection_chains(&self) -> Vec<usize> {
        match self.architecture {
            Architecture::FullyConnected => (0..self.f_r.ncols()).collect(),
            Architecture::PartiallyConnected => (0..self.w_r.nrows())
                .filter(|&r| self.w_r.row(r).iter().any(|z| *z != ZERO))
                .collect(),
        }
    }
}

/// Unit-modulus phase column: `exp(j arg v_k) / sqrt(rows)` on the
/// structurally nonzero entries of `v`, zero elsewhere.
pub fn phase_column(v: &CVector) -> CVector {
    let rows = v.len();
    let amp = 1.0 / (rows as f64).sqrt();
    let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = STRUCTURAL_ZERO * vmax;
    v.map(|z| {
        if vmax > 0.0 && z.norm() > cut {
            Complex64::from_polar(amp, z.arg())
        } else {
            ZERO
        }
    })
}

/// Analog/digital split of one side (precoder or combiner).
fn decompose_side(opt: &CMatrix, extra: &CMatrix, n_rf: usize) -> Result<(CMatrix, CMatrix)> {
    let (rows, n_s) = opt.shape();
    if n_rf < n_s {
        return Err(Error::Precondition(format!(
            "{n_rf} RF chains cannot carry {n_s} streams (need N_rf >= N_s)"
        )));
    }
    if n_rf > rows {
        return Err(Error::Precondition(format!(
            "{n_rf} RF chains exceed the {rows} available antennas"
        )));
    }
    let amp = 1.0 / (rows as f64).sqrt();
    let mut f = CMatrix::zeros(rows, n_rf);
    let mut w = CMatrix::zeros(n_rf, n_s);
    let used;
    if n_rf >= 2 * n_s {
        // Two phase-only columns per stream reproduce any column exactly:
        // exp(j(t + d)) + exp(j(t - d)) = 2 cos(d) exp(jt).
        for k in 0..n_s {
            let col = opt.column(k);
            let half = col.iter().map(|z| z.norm()).fold(0.0, f64::max) / 2.0;
            if half == 0.0 {
                continue;
            }
            for r in 0..rows {
                let z = col[r];
                let d = (z.norm() / (2.0 * half)).min(1.0).acos();
                let t = z.arg();
                f[(r, k)] = Complex64::from_polar(amp, t + d);
                f[(r, n_s + k)] = Complex64::from_polar(amp, t - d);
            }
            let weight = Complex64::new(half / amp, 0.0);
            w[(k, k)] = weight;
            w[(n_s + k, k)] = weight;
        }
        used = 2 * n_s;
        // Spare chains carry the next-strongest directions with zero weight.
        for (c, k) in (used..n_rf).zip(0..extra.ncols()) {
            f.set_column(c, &phase_column(&extra.column(k).into_owned()));
        }
    } else {
        // Phases of the stream directions, then of the extra directions,
        // with a least-squares digital stage.
        let candidates = (0..n_s).map(|k| opt.column(k).into_owned()).chain((0..extra.ncols()).map(|k| extra.column(k).into_owned()));
        for (c, v) in (0..n_rf).zip(candidates) {
            f.set_column(c, &phase_column(&v));
        }
        w = pinv(&f).matrix * opt;
    }
    let power = frobenius(&(&f * &w)).powi(2);
    if power > 0.0 {
        w *= Complex64::new((n_s as f64 / power).sqrt(), 0.0);
    }
    Ok((f, w))
}

/// Splits an optimal pair into phase-only analog matrices with `n_rf_t` and
/// `n_rf_r` RF chains plus digital baseband matrices.
///
/// With at least `2 N_s` chains the split is exact: each stream uses two
/// phase-only columns whose sum reproduces its optimal column, and spare
/// chains are steered along the next-strongest directions with zero digital
/// weight. With fewer chains the analog columns are the phases of the
/// stream (then extra) directions and the digital stage is the
/// least-squares fit. In both cases `||F_t W_t||_F^2 = N_s` (and likewise
/// on the receive side).
pub fn hybrid_decompose(pair: &OptimalPair, n_rf_t: usize, n_rf_r: usize) -> Result<BeamformerSet> {
    let (f_t, w_t) = decompose_side(&pair.precoder, &pair.tx_extra, n_rf_t)?;
    let (f_r, w_r) = decompose_side(&pair.combiner, &pair.rx_extra, n_rf_r)?;
    Ok(BeamformerSet {
        architecture: Architecture::FullyConnected,
        f_t,
        w_t,
        f_r,
        w_r,
        stream_gains: pair.gains.clone(),
    })
}

/// A stream of the partially connected architecture and the path it rides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcStream {
    pub rx_rau: usize,
    pub tx_rau: usize,
    pub path: usize,
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct PcBeamformer {
    pub set: BeamformerSet,
    pub streams: Vec<PcStream>,
}

/// Paths whose receive and transmit RAUs are both still free.
pub fn pc_candidates<'a>(table: &'a [PathEntry], used_rx: &[usize], used_tx: &[usize]) -> Vec<&'a PathEntry> {
    table
        .iter()
        .filter(|e| !used_rx.contains(&e.rx_rau) && !used_tx.contains(&e.tx_rau))
        .collect()
}

/// Greedy stream-to-path assignment for the partially connected
/// architecture (`N_t^rf = K_t`, `N_r^rf = K_r`, block-diagonal analog
/// stages).
///
/// Stream 1 takes the strongest path overall; each following stream takes
/// the strongest path whose receive and transmit RAUs are both unused. A
/// selected RAU steers its phases along the chosen path; unselected RAUs get
/// all-ones placeholder phases and zero digital weight.
pub fn pc_greedy_assign(ch: &DistributedChannel, n_s: usize) -> Result<PcBeamformer> {
    let (k_r, k_t) = (ch.k_r(), ch.k_t());
    if n_s == 0 || n_s > k_t.min(k_r) {
        return Err(Error::Precondition(format!(
            "partially connected processing needs 1 <= N_s <= min(K_t, K_r) = {}, got N_s = {n_s}",
            k_t.min(k_r)
        )));
    }
    let table = path_table(ch);
    let mut used_rx = Vec::with_capacity(n_s);
    let mut used_tx = Vec::with_capacity(n_s);
    let mut chosen: Vec<&PathEntry> = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        let e = pc_candidates(&table, &used_rx, &used_tx)[0];
        used_rx.push(e.rx_rau);
        used_tx.push(e.tx_rau);
        chosen.push(e);
    }

    let (n_r, n_t) = (ch.n_r(), ch.n_t());
    let ones = |n: usize| CMatrix::from_element(n, 1, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    let tx_blocks: Vec<CMatrix> = (0..k_t)
        .map(|j| match chosen.iter().find(|e| e.tx_rau == j) {
            Some(e) => {
                let local = e.a_t.rows(j * n_t, n_t) * Complex64::from_polar(1.0, -e.gain.arg());
                CMatrix::from_column_slice(n_t, 1, local.as_slice())
            }
            None => ones(n_t),
        })
        .collect();
    let rx_blocks: Vec<CMatrix> = (0..k_r)
        .map(|i| match chosen.iter().find(|e| e.rx_rau == i) {
            Some(e) => CMatrix::from_column_slice(n_r, 1, e.a_r.rows(i * n_r, n_r).into_owned().as_slice()),
            None => ones(n_r),
        })
        .collect();
    let mut w_t = CMatrix::zeros(k_t, n_s);
    let mut w_r = CMatrix::zeros(k_r, n_s);
    for (s, e) in chosen.iter().enumerate() {
        w_t[(e.tx_rau, s)] = ONE;
        w_r[(e.rx_rau, s)] = ONE;
    }
    let streams = chosen
        .iter()
        .map(|e| PcStream {
            rx_rau: e.rx_rau,
            tx_rau: e.tx_rau,
            path: e.index,
            gain: e.gain.norm(),
        })
        .collect::<Vec<_>>();
    Ok(PcBeamformer {
        set: BeamformerSet {
            architecture: Architecture::PartiallyConnected,
            f_t: block_diag(&tx_blocks),
            w_t,
            f_r: block_diag(&rx_blocks),
            w_r,
            stream_gains: streams.iter().map(|s| s.gain).collect(),
        },
        streams,
    })
}

/// Analog and digital combiner of one mobile station.
#[derive(Debug, Clone)]
pub struct UserCombiner {
    /// `N_u x N_u^rf`.
    pub f_u: CMatrix,
    /// `N_u^rf x N_s`.
    pub w_u: CMatrix,
}

/// Downlink beamformers for `K_u` users sharing one distributed base station.
#[derive(Debug, Clone)]
pub struct MultiuserDownlink {
    pub users: Vec<UserCombiner>,
    /// `K_b N_b x N_b^rf`.
    pub f_b: CMatrix,
    /// `N_b^rf x K_u N_s`, columns scaled so each stream has unit radiated
    /// power.
    pub w_b: CMatrix,
    /// `blockdiag(F_ui^H) [H_1; ...; H_Ku] F_b`.
    pub h_eq: CMatrix,
    pub n_s: usize,
    /// Amplitude each stream arrives with after zero-forcing and power
    /// normalization.
    pub stream_gains: Vec<f64>,
}

impl MultiuserDownlink {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// `W_ui^H F_ui^H H_i F_b W_b`: user `i`'s view of all `K_u N_s` streams.
    pub fn user_effective(&self, user: usize, h_i: &CMatrix) -> CMatrix {
        let u = &self.users[user];
        u.w_u.adjoint() * u.f_u.adjoint() * (h_i * (&self.f_b * &self.w_b))
    }
}

/// Zero-forcing precoder for `h_eq`: returns `pinv(h_eq) * targets`, so that
/// `h_eq * W = targets`. Requires full row rank.
pub fn zf_precoder(h_eq: &CMatrix, targets: &CMatrix) -> Result<CMatrix> {
    let p = pinv(h_eq);
    if p.rank < h_eq.nrows() {
        return Err(Error::RankDeficient {
            rank: p.rank,
            required: h_eq.nrows(),
        });
    }
    Ok(p.matrix * targets)
}

/// Multiuser downlink processing.
///
/// Each user's analog combiner takes the phases of the leading `N_u^rf`
/// left singular vectors of its own channel `H_i`; its first `N_s` chains
/// carry its streams. The base station's analog precoder stacks, per user,
/// the phases of that user's leading right singular vectors (the
/// `N_b^rf` chains are split evenly, earlier users taking any remainder).
/// The digital precoder zero-forces the equivalent channel so that each
/// user's stream chains see only their own symbol and all other analog
/// outputs see nothing; columns are then scaled to unit radiated power.
pub fn multiuser_downlink(users: &[DistributedChannel], n_s: usize, n_u_rf: usize, n_b_rf: usize) -> Result<MultiuserDownlink> {
    let k_u = users.len();
    if k_u == 0 {
        return Err(Error::Precondition("at least one user is required".into()));
    }
    let first = users[0].layout();
    for u in users {
        let l = u.layout();
        if l.k_r != 1 {
            return Err(Error::DimensionMismatch("each mobile station has a single array (K_r = 1)".into()));
        }
        if l.k_t != first.k_t || l.tx != first.tx || l.rx != first.rx {
            return Err(Error::DimensionMismatch("all users must share the base-station and handset geometry".into()));
        }
    }
    let n_u = first.rx.len();
    let bs_antennas = first.k_t * first.tx.len();
    if n_s == 0 || n_s > n_u_rf || n_u_rf > n_u {
        return Err(Error::Precondition(format!(
            "need N_s <= N_u^rf <= N_u, got N_s = {n_s}, N_u^rf = {n_u_rf}, N_u = {n_u}"
        )));
    }
    if k_u * n_s > n_b_rf || n_b_rf > bs_antennas {
        return Err(Error::Precondition(format!(
            "need K_u N_s <= N_b^rf <= K_b N_b, got K_u N_s = {}, N_b^rf = {n_b_rf}, K_b N_b = {bs_antennas}",
            k_u * n_s
        )));
    }

    let mut combiners = Vec::with_capacity(k_u);
    let mut f_b = CMatrix::zeros(bs_antennas, n_b_rf);
    let mut col = 0;
    for (idx, ch) in users.iter().enumerate() {
        check_streams(n_s, ch.total_paths())?;
        let svd = ch.svd();
        let mut f_u = CMatrix::zeros(n_u, n_u_rf);
        for k in 0..n_u_rf.min(svd.u.ncols()) {
            f_u.set_column(k, &phase_column(&svd.u.column(k).into_owned()));
        }
        let mut w_u = CMatrix::zeros(n_u_rf, n_s);
        for k in 0..n_s {
            w_u[(k, k)] = ONE;
        }
        combiners.push(UserCombiner { f_u, w_u });

        let share = n_b_rf / k_u + usize::from(idx < n_b_rf % k_u);
        for k in 0..share.min(svd.v.ncols()) {
            f_b.set_column(col + k, &phase_column(&svd.v.column(k).into_owned()));
        }
        col += share;
    }

    let f_u_h: Vec<CMatrix> = combiners.iter().map(|c| c.f_u.adjoint()).collect();
    let mut stacked = CMatrix::zeros(k_u * n_u, bs_antennas);
    for (i, ch) in users.iter().enumerate() {
        stacked.view_mut((i * n_u, 0), (n_u, bs_antennas)).copy_from(ch.matrix());
    }
    let h_eq = block_diag(&f_u_h) * stacked * &f_b;

    let targets = block_diag(&combiners.iter().map(|c| c.w_u.clone()).collect::<Vec<_>>());
    let mut w_b = zf_precoder(&h_eq, &targets)?;
    let radiated = &f_b * &w_b;
    let mut stream_gains = Vec::with_capacity(k_u * n_s);
    for c in 0..w_b.ncols() {
        let norm = radiated.column(c).norm();
        if norm == 0.0 {
            return Err(Error::RankDeficient {
                rank: 0,
                required: 1,
            });
        }
        w_b.column_mut(c).scale_mut(1.0 / norm);
        stream_gains.push(1.0 / norm);
    }
    Ok(MultiuserDownlink {
        users: combiners,
        f_b,
        w_b,
        h_eq,
        n_s,
        stream_gains,
    })
}

/// Which closed-form diversity result to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DiversityMode {
    /// Fully connected single user, `L` paths per subchannel.
    Full { k_t: usize, k_r: usize, paths: usize },
    /// Partially connected single user.
    Pc { k_t: usize, k_r: usize, paths: usize },
    /// Multiuser downlink with `K_b` base-station RAUs.
    MuDownlink { k_b: usize, paths: usize },
    /// Multiuser uplink (same gain as the downlink).
    MuUplink { k_b: usize, paths: usize },
}

/// Asymptotic (large-array) diversity gain.
///
/// * full: `K_r K_t L - N_s + 1`, requires `N_s <= K_r K_t L`
/// * pc: `(K_t - N_s + 1)(K_r - N_s + 1) L`, requires `N_s <= min(K_t, K_r)`
/// * multiuser: `K_b L - N_s + 1`, requires `N_s <= K_b L`
pub fn diversity_gain_formula(mode: DiversityMode, n_s: usize) -> Result<usize> {
    if n_s == 0 {
        return Err(Error::Precondition("N_s must be at least 1".into()));
    }
    let positive = |xs: &[usize]| xs.iter().all(|&x| x > 0);
    match mode {
        DiversityMode::Full { k_t, k_r, paths } => {
            if !positive(&[k_t, k_r, paths]) {
                return Err(Error::Precondition("K_t, K_r and L must be positive".into()));
            }
            let l_s = k_r * k_t * paths;
            if n_s > l_s {
                return Err(Error::Precondition(format!("N_s = {n_s} exceeds K_r K_t L = {l_s}")));
            }
            Ok(l_s - n_s + 1)
        }
        DiversityMode::Pc { k_t, k_r, paths } => {
            if !positive(&[k_t, k_r, paths]) {
                return Err(Error::Precondition("K_t, K_r and L must be positive".into()));
            }
            if n_s > k_t.min(k_r) {
                return Err(Error::Precondition(format!(
                    "partially connected processing needs N_s <= min(K_t, K_r) = {}, got {n_s}",
                    k_t.min(k_r)
                )));
            }
            Ok((k_t - n_s + 1) * (k_r - n_s + 1) * paths)
        }
        DiversityMode::MuDownlink { k_b, paths } | DiversityMode::MuUplink { k_b, paths } => {
            if !positive(&[k_b, paths]) {
                return Err(Error::Precondition("K_b and L must be positive".into()));
            }
            if n_s > k_b * paths {
                return Err(Error::Precondition(format!("N_s = {n_s} exceeds K_b L = {}", k_b * paths)));
            }
            Ok(k_b * paths - n_s + 1)
        }
    }
}

/// Gap between fully and partially connected diversity,
/// `(N_s - 1)((K_r + K_t - N_s + 1) L - 1)`.
pub fn fc_pc_gap(k_t: usize, k_r: usize, paths: usize, n_s: usize) -> Result<usize> {
    let fc = diversity_gain_formula(DiversityMode::Full { k_t, k_r, paths }, n_s)?;
    let pc = diversity_gain_formula(DiversityMode::Pc { k_t, k_r, paths }, n_s)?;
    Ok(fc - pc)
}
