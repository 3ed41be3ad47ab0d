//! Closed-form zero-energy bound mode of model B, its associated function
//! and the secular solution family at the symmetry-breaking point.
//!
//! All formulas use unit background coupling.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{Hamiltonian, LatticeError, LatticeModel};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Interior residual below which an identity is considered exact.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModesError {
    #[error("gain g must be positive and finite, got {0}")]
    NonPositiveGain(f64),
    #[error("half width must be at least {min}, got {got}")]
    HalfWidth { min: usize, got: usize },
    #[error("dimension mismatch: Hamiltonian has {expected} sites, vector has {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Amplitudes exactly as given by the closed form.
    Raw,
    UnitNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    half_width: usize,
    amplitudes: Vec<Complex64>,
    pub energy: Complex64,
    pub normalization: Normalization,
}

impl ModeVector {
    /// Arbitrary amplitudes over `-N..=N` with an assigned energy.
    pub fn new(amplitudes: Vec<Complex64>, energy: Complex64) -> Self {
        assert!(amplitudes.len() % 2 == 1, "window must have odd length");
        Self {
            half_width: (amplitudes.len() - 1) / 2,
            amplitudes,
            energy,
            normalization: Normalization::Raw,
        }
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, n: i64) -> Complex64 {
        self.amplitudes[(n + self.half_width as i64) as usize]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.amplitudes)
    }

    pub fn normalized(&self) -> Self {
        let s = self.norm();
        Self {
            half_width: self.half_width,
            amplitudes: self.amplitudes.iter().map(|z| z / s).collect(),
            energy: self.energy,
            normalization: Normalization::UnitNorm,
        }
    }
}

/// Zero-energy mode of model B:
/// `c_0 = 1/g`, `c_n = 0` for odd `n`, `c_n = sgn(n)·i^{n+1}/sqrt(n²-1)` for
/// even `n ≠ 0`.
pub fn type2_bic_closed_form(g: f64, half_width: usize) -> Result<ModeVector, ModesError> {
    if !(g.is_finite() && g > 0.0) {
        return Err(ModesError::NonPositiveGain(g));
    }
    if half_width < 4 {
        return Err(ModesError::HalfWidth {
            min: 4,
            got: half_width,
        });
    }
    let w = half_width as i64;
    let amplitudes = (-w..=w)
        .map(|n| {
            if n == 0 {
                Complex64::new(1.0 / g, 0.0)
            } else if n % 2 != 0 {
                ZERO
            } else {
                let sign = n.signum() as f64;
                I.powi((n + 1).rem_euclid(4) as i32) * (sign / ((n * n - 1) as f64).sqrt())
            }
        })
        .collect();
    Ok(ModeVector {
        half_width,
        amplitudes,
        energy: ZERO,
        normalization: Normalization::Raw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociatedFunction {
    half_width: usize,
    values: Vec<Complex64>,
}

impl AssociatedFunction {
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, n: i64) -> Complex64 {
        self.values[(n + self.half_width as i64) as usize]
    }
}

/// `f_n = -(i/2) sin(nπ/2)`, evaluated exactly from `n mod 4`.
pub fn associated_function(half_width: usize) -> Result<AssociatedFunction, ModesError> {
    if half_width < 4 {
        return Err(ModesError::HalfWidth {
            min: 4,
            got: half_width,
        });
    }
    let w = half_width as i64;
    let values = (-w..=w)
        .map(|n| {
            let s = match n.rem_euclid(4) {
                1 => 1.0,
                3 => -1.0,
                _ => 0.0,
            };
            Complex64::new(0.0, -0.5 * s)
        })
        .collect();
    Ok(AssociatedFunction { half_width, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    /// `max |(Hv)_n - E v_n|` over `|n| <= N-1`.
    pub interior: f64,
    /// Same over `n = ±N`.
    pub boundary: f64,
}

fn split_max(h: &Hamiltonian, r: impl Fn(usize) -> f64) -> Residual {
    let last = h.dim() - 1;
    let mut interior: f64 = 0.0;
    for i in 1..last {
        interior = interior.max(r(i));
    }
    Residual {
        interior,
        boundary: r(0).max(r(last)),
    }
}

pub fn residual(h: &Hamiltonian, v: &ModeVector) -> Result<Residual, ModesError> {
    check_dim(h, v.amplitudes.len())?;
    let hv = h.apply(&v.amplitudes);
    Ok(split_max(h, |i| {
        (hv[i] - v.energy * v.amplitudes[i]).norm()
    }))
}

fn check_dim(h: &Hamiltonian, got: usize) -> Result<(), ModesError> {
    if h.dim() == got {
        Ok(())
    } else {
        Err(ModesError::Dimension {
            expected: h.dim(),
            got,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceptionalPointReport {
    pub g: f64,
    #[serde(rename = "N")]
    pub half_width: usize,
    /// Split residual of `H f - c̄`.
    pub residual: Residual,
    /// `|(H f)_0 - c̄_0|`, equal to `|g - 1/g|`.
    pub deviation_at_origin: f64,
    /// Interior residual below [`EXACT_TOL`].
    pub holds: bool,
}

/// Test `H f = c̄` on model B with gain `g`. The identity holds only at
/// `g = 1`.
pub fn exceptional_point_check(
    g: f64,
    half_width: usize,
) -> Result<ExceptionalPointReport, ModesError> {
    if half_width < 8 {
        return Err(ModesError::HalfWidth {
            min: 8,
            got: half_width,
        });
    }
    let bic = type2_bic_closed_form(g, half_width)?;
    let f = associated_function(half_width)?;
    let h = LatticeModel::model_b(g, half_width)?.hamiltonian();
    let hf = h.apply(&f.values);
    let diff = |i: usize| (hf[i] - bic.amplitudes[i]).norm();
    let residual = split_max(&h, diff);
    Ok(ExceptionalPointReport {
        g,
        half_width,
        residual,
        deviation_at_origin: diff(half_width),
        holds: residual.interior < EXACT_TOL,
    })
}

/// Secular solution `c(z) = (1 - iεz) c̄ + ε f` of model B at `g = 1`.
pub fn jordan_family(eps: f64, z: f64, half_width: usize) -> Result<Vec<Complex64>, ModesError> {
    let bic = type2_bic_closed_form(1.0, half_width)?;
    let f = associated_function(half_width)?;
    let a = Complex64::new(1.0, -eps * z);
    Ok(bic
        .amplitudes
        .iter()
        .zip(&f.values)
        .map(|(c, f)| a * c + eps * f)
        .collect())
}

/// Interior mismatch of `i dc/dz = H c` for the secular family, with the
/// derivative taken by a central difference of step `dz`.
pub fn jordan_equation_residual(
    eps: f64,
    z: f64,
    dz: f64,
    half_width: usize,
) -> Result<Residual, ModesError> {
    let h = LatticeModel::model_b(1.0, half_width)?.hamiltonian();
    let c = jordan_family(eps, z, half_width)?;
    let ahead = jordan_family(eps, z + dz, half_width)?;
    let behind = jordan_family(eps, z - dz, half_width)?;
    let hc = h.apply(&c);
    Ok(split_max(&h, |i| {
        let lhs = I * (ahead[i] - behind[i]) / (2.0 * dz);
        (lhs - hc[i]).norm()
    }))
}

/// Mode dump with columns `n, re_c, im_c, abs_c`.
pub fn write_mode_csv<W: std::io::Write>(
    amplitudes: &[Complex64],
    out: W,
) -> Result<(), csv::Error> {
    let w_half = (amplitudes.len() as i64 - 1) / 2;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "re_c", "im_c", "abs_c"])?;
    for (i, c) in amplitudes.iter().enumerate() {
        w.write_record([
            (i as i64 - w_half).to_string(),
            crate::fmt_num(c.re),
            crate::fmt_num(c.im),
            crate::fmt_num(c.norm()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
