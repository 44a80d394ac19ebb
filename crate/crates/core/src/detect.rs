//! BPSK transmission through the hybrid link and zero-forcing detection.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use libm::erfc;

use crate::beamforming::BeamformerSet;
use crate::channel::complex_normal;
use crate::error::{Error, Result};
use crate::linalg::{pinv, CMatrix};

/// `N_s x T` block of bits and their BPSK symbols `(2b - 1) sqrt(P / N_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub bits: DMatrix<u8>,
    pub symbols: CMatrix,
}

impl SymbolBlock {
    pub fn new(bits: DMatrix<u8>, power: f64) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidSpec("bits must be 0 or 1".into()));
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::InvalidSpec(format!("transmit power must be non-negative, got {power}")));
        }
        let amp = (power / bits.nrows().max(1) as f64).sqrt();
        let symbols = bits.map(|b| Complex64::new((2.0 * b as f64 - 1.0) * amp, 0.0));
        Ok(SymbolBlock { bits, symbols })
    }

    /// Uniformly random bits.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_s: usize, t: usize, power: f64) -> Result<Self> {
        let bits = DMatrix::from_fn(n_s, t, |_, _| rng.random::<bool>() as u8);
        Self::new(bits, power)
    }

    pub fn n_streams(&self) -> usize {
        self.bits.nrows()
    }

    pub fn len(&self) -> usize {
        self.bits.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// `rows x cols` matrix of i.i.d. CN(0, 1) samples.
pub fn noise_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // column-major fill so the draw order is fixed
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_normal(rng);
        }
    }
    m
}

/// `F_r^H (H F_t W_t s + n)` for a given noise realization `n`.
pub fn receive_with_noise(bf: &BeamformerSet, h: &CMatrix, block: &SymbolBlock, noise: &CMatrix) -> Result<CMatrix> {
    let (m, n) = h.shape();
    if bf.f_t.nrows() != n || bf.f_r.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "channel is {m}x{n} but beamformers expect {}x{}",
            bf.f_r.nrows(),
            bf.f_t.nrows()
        )));
    }
    if block.n_streams() != bf.n_streams() {
        return Err(Error::DimensionMismatch(format!(
            "{} streams sent through beamformers built for {}",
            block.n_streams(),
            bf.n_streams()
        )));
    }
    if noise.shape() != (m, block.len()) {
        return Err(Error::DimensionMismatch(format!(
            "noise is {:?}, expected {:?}",
            noise.shape(),
            (m, block.len())
        )));
    }
    let x = bf.precoder() * &block.symbols;
    Ok(bf.f_r.adjoint() * (h * x + noise))
}

/// Sends `block` through the link with fresh unit-variance noise.
pub fn transmit_receive<R: Rng + ?Sized>(bf: &BeamformerSet, h: &CMatrix, block: &SymbolBlock, rng: &mut R) -> Result<CMatrix> {
    let noise = noise_matrix(rng, h.nrows(), block.len());
    receive_with_noise(bf, h, block, &noise)
}

/// Zero-forcing detector for one effective channel, with its pseudoinverse
/// computed once.
#[derive(Debug, Clone)]
pub struct ZfDetector {
    pinv: CMatrix,
}

impl ZfDetector {
    /// Fails if the effective channel has rank below its column count.
    pub fn new(effective: &CMatrix) -> Result<Self> {
        let p = pinv(effective);
        if p.rank < effective.ncols() {
            return Err(Error::RankDeficient {
                rank: p.rank,
                required: effective.ncols(),
            });
        }
        Ok(ZfDetector { pinv: p.matrix })
    }

    /// Equalized symbol estimates `pinv(effective) * received`.
    pub fn equalize(&self, received: &CMatrix) -> Result<CMatrix> {
        if received.nrows() != self.pinv.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "received block has {} rows, detector expects {}",
                received.nrows(),
                self.pinv.ncols()
            )));
        }
        Ok(&self.pinv * received)
    }

    pub fn detect(&self, received: &CMatrix) -> Result<DMatrix<u8>> {
        Ok(slice(&self.equalize(received)?))
    }
}

/// BPSK decisions on the real axis.
pub fn slice(estimates: &CMatrix) -> DMatrix<u8> {
    estimates.map(|z| (z.re > 0.0) as u8)
}

/// Zero-forcing detection: signs of `Re(pinv(effective) * received)`.
pub fn zf_detect(effective: &CMatrix, received: &CMatrix) -> Result<DMatrix<u8>> {
    ZfDetector::new(effective)?.detect(received)
}

pub fn count_bit_errors(sent: &DMatrix<u8>, detected: &DMatrix<u8>) -> usize {
    assert_eq!(sent.shape(), detected.shape());
    sent.iter().zip(detected.iter()).filter(|(a, b)| a != b).count()
}

/// Standard Gaussian tail probability `P(X > x)`, `X ~ N(0, 1)`.
pub fn qfunc(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// BER of BPSK over AWGN at per-symbol SNR `snr`: `Q(sqrt(2 snr))`.
pub fn bpsk_ber(snr: f64) -> f64 {
    qfunc((2.0 * snr).sqrt())
}
