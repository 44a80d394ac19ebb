//! Clustered narrowband channel between two distributed arrays.
//!
//! Each pair (receive RAU `i`, transmit RAU `j`) is linked by a subchannel
//! made of `L_ij` single-ray clusters:
//!
//! ```text
//! H_ij = sqrt(N_t N_r / L_ij) * sum_l alpha_l a_r(aoa_l) a_t(aod_l)^H
//! ```
//!
//! and the full channel stacks `sqrt(g_ij) H_ij` in a `K_r x K_t` block grid.
//! RAU indices are zero-based throughout.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arrays::{steering_vector, Angle, ArrayGeometry};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::rng::{self, Purpose, StreamId};

/// Path count and large-scale fading of one subchannel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubchannelSpec {
    pub paths: usize,
    pub g_db: f64,
}

impl SubchannelSpec {
    pub fn new(paths: usize, g_db: f64) -> Result<Self> {
        let s = SubchannelSpec { paths, g_db };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidSpec("a subchannel needs at least one path".into()));
        }
        if !self.g_db.is_finite() {
            return Err(Error::InvalidSpec(format!("large-scale gain must be finite, got {}", self.g_db)));
        }
        Ok(())
    }

    /// Linear power coefficient `10^(g_db / 10)`.
    pub fn linear_gain(&self) -> f64 {
        10f64.powf(self.g_db / 10.0)
    }
}

/// One propagation path: complex gain and arrival/departure directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: Complex64,
    pub aoa: Angle,
    pub aod: Angle,
}

pub type PathSet = Vec<Path>;

/// Standard circularly symmetric complex Gaussian sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Draws `spec.paths` paths with CN(0,1) gains and uniformly drawn angles.
pub fn draw_paths<R: Rng + ?Sized>(spec: &SubchannelSpec, rng: &mut R) -> PathSet {
    (0..spec.paths)
        .map(|_| {
            let gain = complex_normal(rng);
            let aoa = Angle::sample(rng);
            let aod = Angle::sample(rng);
            Path { gain, aoa, aod }
        })
        .collect()
}

/// Normalized subchannel matrix `H_ij` (without the large-scale factor).
pub fn subchannel_matrix(paths: &[Path], tx: &ArrayGeometry, rx: &ArrayGeometry) -> CMatrix {
    let (n_t, n_r) = (tx.len(), rx.len());
    let scale = ((n_t * n_r) as f64 / paths.len() as f64).sqrt();
    let l = paths.len();
    // A_r diag(c alpha) A_t^H
    let mut a_r = CMatrix::zeros(n_r, l);
    let mut a_t_h = CMatrix::zeros(l, n_t);
    for (k, p) in paths.iter().enumerate() {
        let ar = steering_vector(rx, p.aoa);
        let at = steering_vector(tx, p.aod);
        let w = p.gain * scale;
        for r in 0..n_r {
            a_r[(r, k)] = ar[r] * w;
        }
        for c in 0..n_t {
            a_t_h[(k, c)] = at[c].conj();
        }
    }
    a_r * a_t_h
}

/// Draws one subchannel: its paths and the matrix they define.
pub fn draw_subchannel<R: Rng + ?Sized>(
    spec: &SubchannelSpec,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    rng: &mut R,
) -> Result<(PathSet, CMatrix)> {
    spec.validate()?;
    tx.validate()?;
    rx.validate()?;
    let paths = draw_paths(spec, rng);
    let h = subchannel_matrix(&paths, tx, rx);
    Ok((paths, h))
}

/// Static description of a distributed link: RAU counts, per-RAU arrays and
/// the `K_r x K_t` grid of subchannel specs (row-major, receive RAU major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub k_r: usize,
    pub k_t: usize,
    pub rx: ArrayGeometry,
    pub tx: ArrayGeometry,
    pub specs: Vec<SubchannelSpec>,
}

impl ChannelLayout {
    pub fn new(k_r: usize, k_t: usize, rx: ArrayGeometry, tx: ArrayGeometry, specs: Vec<SubchannelSpec>) -> Result<Self> {
        let l = ChannelLayout { k_r, k_t, rx, tx, specs };
        l.validate()?;
        Ok(l)
    }

    /// Every subchannel with the same path count and gain.
    pub fn homogeneous(k_r: usize, k_t: usize, rx: ArrayGeometry, tx: ArrayGeometry, spec: SubchannelSpec) -> Result<Self> {
        Self::new(k_r, k_t, rx, tx, vec![spec; k_r * k_t])
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_r == 0 || self.k_t == 0 {
            return Err(Error::InvalidSpec("RAU counts must be positive".into()));
        }
        self.rx.validate()?;
        self.tx.validate()?;
        if self.specs.len() != self.k_r * self.k_t {
            return Err(Error::DimensionMismatch(format!(
                "expected {} subchannel specs for a {}x{} RAU grid, got {}",
                self.k_r * self.k_t,
                self.k_r,
                self.k_t,
                self.specs.len()
            )));
        }
        self.specs.iter().try_for_each(|s| s.validate())
    }

    pub fn spec(&self, i: usize, j: usize) -> &SubchannelSpec {
        &self.specs[i * self.k_t + j]
    }

    /// Total path count `L_s`.
    pub fn total_paths(&self) -> usize {
        self.specs.iter().map(|s| s.paths).sum()
    }

    /// Draws a channel realization. Subchannel `(i, j)` of `trial` uses its
    /// own stream, so the draw of one block never depends on another.
    pub fn draw(&self, seed: u64, trial: u64) -> Result<DistributedChannel> {
        self.draw_with_offset(seed, trial, 0)
    }

    /// Like [`draw`](Self::draw), with the receive-RAU stream index shifted by
    /// `row_offset` (used to give each user of a multiuser link its own
    /// streams).
    pub fn draw_with_offset(&self, seed: u64, trial: u64, row_offset: usize) -> Result<DistributedChannel> {
        self.validate()?;
        let mut parts = Vec::with_capacity(self.specs.len());
        for i in 0..self.k_r {
            for j in 0..self.k_t {
                let mut r = rng::stream(seed, StreamId::new(trial, Purpose::Channel, i + row_offset, j));
                parts.push(draw_subchannel(self.spec(i, j), &self.tx, &self.rx, &mut r)?);
            }
        }
        assemble(self.clone(), parts)
    }

    /// The same layout with a different large-scale gain grid (dB).
    pub fn with_gains_db(&self, g_db: &[f64]) -> Result<Self> {
        if g_db.len() != self.specs.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} gains, got {}",
                self.specs.len(),
                g_db.len()
            )));
        }
        let specs = self
            .specs
            .iter()
            .zip(g_db)
            .map(|(s, &g)| SubchannelSpec::new(s.paths, g))
            .collect::<Result<_>>()?;
        Self::new(self.k_r, self.k_t, self.rx, self.tx, specs)
    }
}

/// A drawn distributed channel: layout, per-block paths and the assembled
/// `(K_r N_r) x (K_t N_t)` matrix.
#[derive(Debug, Clone)]
pub struct DistributedChannel {
    layout: ChannelLayout,
    paths: Vec<PathSet>,
    h: CMatrix,
}

/// Builds the block channel from per-subchannel parts given in row-major
/// `(i, j)` order. Block `(i, j)` becomes `sqrt(10^(g_db/10)) H_ij`.
pub fn assemble(layout: ChannelLayout, parts: Vec<(PathSet, CMatrix)>) -> Result<DistributedChannel> {
    layout.validate()?;
    if parts.len() != layout.specs.len() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} subchannels, got {}",
            layout.specs.len(),
            parts.len()
        )));
    }
    let (n_r, n_t) = (layout.rx.len(), layout.tx.len());
    let mut h = CMatrix::zeros(layout.k_r * n_r, layout.k_t * n_t);
    let mut paths = Vec::with_capacity(parts.len());
    for (idx, (ps, hij)) in parts.into_iter().enumerate() {
        let (i, j) = (idx / layout.k_t, idx % layout.k_t);
        let spec = layout.spec(i, j);
        if hij.shape() != (n_r, n_t) {
            return Err(Error::DimensionMismatch(format!(
                "subchannel ({i},{j}) is {}x{}, expected {n_r}x{n_t}",
                hij.nrows(),
                hij.ncols()
            )));
        }
        if ps.len() != spec.paths {
            return Err(Error::DimensionMismatch(format!(
                "subchannel ({i},{j}) has {} paths, spec says {}",
                ps.len(),
                spec.paths
            )));
        }
        let amp = spec.linear_gain().sqrt();
        h.view_mut((i * n_r, j * n_t), (n_r, n_t)).copy_from(&(hij * Complex64::new(amp, 0.0)));
        paths.push(ps);
    }
    Ok(DistributedChannel { layout, paths, h })
}

impl DistributedChannel {
    /// Assembles a channel from explicit path sets.
    pub fn from_paths(layout: ChannelLayout, paths: Vec<PathSet>) -> Result<Self> {
        layout.validate()?;
        let parts = paths
            .into_iter()
            .map(|ps| {
                let h = subchannel_matrix(&ps, &layout.tx, &layout.rx);
                (ps, h)
            })
            .collect();
        assemble(layout, parts)
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.h
    }

    pub fn paths(&self, i: usize, j: usize) -> &[Path] {
        &self.paths[i * self.layout.k_t + j]
    }

    pub fn k_r(&self) -> usize {
        self.layout.k_r
    }

    pub fn k_t(&self) -> usize {
        self.layout.k_t
    }

    /// Elements per receive RAU.
    pub fn n_r(&self) -> usize {
        self.layout.rx.len()
    }

    /// Elements per transmit RAU.
    pub fn n_t(&self) -> usize {
        self.layout.tx.len()
    }

    pub fn total_paths(&self) -> usize {
        self.layout.total_paths()
    }

    /// Paths in `(i, j, l)` order with effective gains
    /// `sqrt(g_ij N_t N_r / L_ij) alpha` and embedded response vectors.
    pub fn paths_in_block_order(&self) -> Vec<PathEntry> {
        let (n_r, n_t) = (self.n_r(), self.n_t());
        let mut out = Vec::with_capacity(self.total_paths());
        for i in 0..self.k_r() {
            for j in 0..self.k_t() {
                let spec = self.layout.spec(i, j);
                let scale = (spec.linear_gain() * (n_t * n_r) as f64 / spec.paths as f64).sqrt();
                for (l, p) in self.paths(i, j).iter().enumerate() {
                    let a_r = steering_vector(&self.layout.rx, p.aoa);
                    let a_t = steering_vector(&self.layout.tx, p.aod);
                    out.push(PathEntry {
                        rx_rau: i,
                        tx_rau: j,
                        index: l,
                        gain: p.gain * scale,
                        aoa: p.aoa,
                        aod: p.aod,
                        a_r: embed(&a_r, i, self.k_r()).expect("index in range"),
                        a_t: embed(&a_t, j, self.k_t()).expect("index in range"),
                    });
                }
            }
        }
        out
    }

    /// Exact thin SVD of `H` computed from its path factorization
    /// `H = A_r D A_t^H`. Only the (at most `L_s`) nonzero-rank directions
    /// are returned; singular values are sorted in descending order.
    pub fn svd(&self) -> ChannelSvd {
        let entries = self.paths_in_block_order();
        let ls = entries.len();
        let (m, n) = self.h.shape();
        let mut a_r = CMatrix::zeros(m, ls);
        let mut a_t = CMatrix::zeros(n, ls);
        for (k, e) in entries.iter().enumerate() {
            a_r.set_column(k, &e.a_r);
            a_t.set_column(k, &(&e.a_t * e.gain.conj()));
        }
        // H = A_r (A_t')^H with gains folded into A_t'.
        let qr_r = a_r.qr();
        let qr_t = a_t.qr();
        let (q_r, r_r) = (qr_r.q(), qr_r.r());
        let (q_t, r_t) = (qr_t.q(), qr_t.r());
        let core = &r_r * r_t.adjoint();
        let svd = core.svd(true, true);
        let u_c = svd.u.expect("u requested");
        let v_c = svd.v_t.expect("v_t requested").adjoint();
        let s = svd.singular_values;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let u_full = q_r * u_c;
        let v_full = q_t * v_c;
        let mut u = CMatrix::zeros(m, order.len());
        let mut v = CMatrix::zeros(n, order.len());
        for (dst, &src) in order.iter().enumerate() {
            u.set_column(dst, &u_full.column(src));
            v.set_column(dst, &v_full.column(src));
        }
        ChannelSvd {
            u,
            singular_values: order.iter().map(|&k| s[k]).collect(),
            v,
        }
    }
}

/// Thin SVD `H = U diag(s) V^H` restricted to the path subspace.
#[derive(Debug, Clone)]
pub struct ChannelSvd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

/// Zero-pads a per-RAU vector into block `rau` of a `count`-RAU array.
pub fn embed(a: &CVector, rau: usize, count: usize) -> Result<CVector> {
    if rau >= count {
        return Err(Error::RauIndex { index: rau, count });
    }
    let n = a.len();
    let mut out = CVector::zeros(n * count);
    out.rows_mut(rau * n, n).copy_from(a);
    Ok(out)
}

/// Receive-side embedded response vector of RAU `i` among `k_r`.
pub fn embed_rx(a_r: &CVector, i: usize, k_r: usize) -> Result<CVector> {
    embed(a_r, i, k_r)
}

/// Transmit-side embedded response vector of RAU `j` among `k_t`.
pub fn embed_tx(a_t: &CVector, j: usize, k_t: usize) -> Result<CVector> {
    embed(a_t, j, k_t)
}

/// One rank-one term of the channel's path decomposition.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub rx_rau: usize,
    pub tx_rau: usize,
    pub index: usize,
    /// Effective gain including large-scale fading and array scaling.
    pub gain: Complex64,
    pub aoa: Angle,
    pub aod: Angle,
    pub a_r: CVector,
    pub a_t: CVector,
}

/// All `L_s` paths sorted by `|gain|`, strongest first. Ties keep `(i, j, l)`
/// order.
pub fn path_table(ch: &DistributedChannel) -> Vec<PathEntry> {
    let mut entries = ch.paths_in_block_order();
    // sort_by is stable
    entries.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
    entries
}

/// Writes the path table as CSV:
/// `i,j,l,re_gain,im_gain,aoa_az,aoa_el,aod_az,aod_el`.
pub fn write_path_table_csv<W: Write>(ch: &DistributedChannel, mut w: W) -> std::io::Result<()> {
    writeln!(w, "i,j,l,re_gain,im_gain,aoa_az,aoa_el,aod_az,aod_el")?;
    for e in path_table(ch) {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            e.rx_rau, e.tx_rau, e.index, e.gain.re, e.gain.im, e.aoa.azimuth, e.aoa.elevation, e.aod.azimuth, e.aod.elevation
        )?;
    }
    Ok(())
}
