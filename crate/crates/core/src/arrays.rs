//! Uniform linear and planar arrays and their normalized response vectors.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVector;

/// Inter-element spacing (in wavelengths) used when none is given.
pub const DEFAULT_SPACING: f64 = 0.5;

/// Antenna array layout of one remote antenna unit.
///
/// Spacings are expressed as `d / lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrayGeometry {
    Ula { n: usize, spacing: f64 },
    Upa { n_h: usize, n_v: usize, spacing_h: f64, spacing_v: f64 },
}

impl ArrayGeometry {
    pub fn ula(n: usize, spacing: f64) -> Result<Self> {
        let g = ArrayGeometry::Ula { n, spacing };
        g.validate()?;
        Ok(g)
    }

    /// Half-wavelength ULA.
    pub fn half_wave_ula(n: usize) -> Result<Self> {
        Self::ula(n, DEFAULT_SPACING)
    }

    pub fn upa(n_h: usize, n_v: usize, spacing_h: f64, spacing_v: f64) -> Result<Self> {
        let g = ArrayGeometry::Upa {
            n_h,
            n_v,
            spacing_h,
            spacing_v,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_spacing = |d: f64| d.is_finite() && d > 0.0;
        match *self {
            ArrayGeometry::Ula { n, spacing } => {
                if n == 0 {
                    return Err(Error::InvalidGeometry("ULA needs at least one element".into()));
                }
                if !ok_spacing(spacing) {
                    return Err(Error::InvalidGeometry(format!("ULA spacing must be positive, got {spacing}")));
                }
            }
            ArrayGeometry::Upa {
                n_h,
                n_v,
                spacing_h,
                spacing_v,
            } => {
                if n_h == 0 || n_v == 0 {
                    return Err(Error::InvalidGeometry("UPA needs at least one element per axis".into()));
                }
                if !ok_spacing(spacing_h) || !ok_spacing(spacing_v) {
                    return Err(Error::InvalidGeometry(format!(
                        "UPA spacings must be positive, got ({spacing_h}, {spacing_v})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total number of antenna elements.
    pub fn len(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { n, .. } => n,
            ArrayGeometry::Upa { n_h, n_v, .. } => n_h * n_v,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Azimuth/elevation pair in radians, canonicalized to `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle {
    pub azimuth: f64,
    pub elevation: f64,
}

fn wrap(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2*pi for tiny negative inputs
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl Angle {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "angles must be finite, got ({azimuth}, {elevation})"
            )));
        }
        Ok(Angle {
            azimuth: wrap(azimuth),
            elevation: wrap(elevation),
        })
    }

    pub fn azimuth_only(azimuth: f64) -> Result<Self> {
        Self::new(azimuth, 0.0)
    }

    /// Azimuth and elevation independently uniform on `(-pi/2, pi/2)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let half = PI / 2.0;
        let az = rng.random_range(-half..half);
        let el = rng.random_range(-half..half);
        Angle {
            azimuth: az,
            elevation: el,
        }
    }
}

fn ula_response(n: usize, spacing: f64, angle: f64) -> impl Iterator<Item = Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let step = 2.0 * PI * spacing * angle.sin();
    (0..n).map(move |m| Complex64::from_polar(scale, step * m as f64))
}

/// Unit-norm array response vector.
///
/// ULA entries are `exp(j 2 pi (d/lambda) m sin(azimuth)) / sqrt(N)`; the
/// elevation is ignored. A UPA response is the Kronecker product of the
/// horizontal (azimuth) and vertical (elevation) ULA responses, horizontal
/// index major.
pub fn steering_vector(geom: &ArrayGeometry, angle: Angle) -> CVector {
    match *geom {
        ArrayGeometry::Ula { n, spacing } => CVector::from_iterator(n, ula_response(n, spacing, angle.azimuth)),
        ArrayGeometry::Upa {
            n_h,
            n_v,
            spacing_h,
            spacing_v,
        } => {
            let h: Vec<Complex64> = ula_response(n_h, spacing_h, angle.azimuth).collect();
            let v: Vec<Complex64> = ula_response(n_v, spacing_v, angle.elevation).collect();
            CVector::from_iterator(n_h * n_v, h.iter().flat_map(|a| v.iter().map(move |b| a * b)))
        }
    }
}
