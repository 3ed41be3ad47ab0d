//! Spectra of truncated lattices, eigenstate classification and the search
//! for symmetry-breaking and bound-state thresholds.
//!
//! Two views of the spectrum are available:
//!
//! * the truncated window `-N..=N` with open ends ([`eigendecompose`]),
//!   which yields every eigenpair and is the basis of the state
//!   classification;
//! * the window attached to semi-infinite uniform leads
//!   ([`radiating_bound_states`]), which yields only the normalizable modes
//!   of the infinite lattice and is exact whenever the lattice is uniform
//!   outside a finite core.
//!
//! Open truncation quantizes the continuum into standing waves. Near a
//! transmission resonance of a gain/loss defect these standing waves pair
//! up into complex-conjugate eigenvalues with `|Im E| ~ 1/N`, long before a
//! normalizable complex mode exists. Threshold searches therefore default to
//! the lead-attached problem when the lattice has a compact core.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fit::{fit_line, LineFit};
use crate::lattice::{Hamiltonian, LatticeError, LatticeModel};
use crate::linalg::{self, norm2, DenseMatrix, LinalgError, TridiagonalLu};

/// Band edge of the uniform lattice, `|E| = 2`.
pub const BAND_EDGE: f64 = 2.0;
/// An eigenvalue is real when `|Im E| <= IMAG_TOL`.
pub const IMAG_TOL: f64 = 1e-8;
/// Margin used when comparing `|Re E|` against the band edge.
pub const EDGE_TOL: f64 = 1e-6;
/// A state is localized when less than this fraction of its norm sits in
/// the outer tenth of the window.
pub const TAIL_TOL: f64 = 1e-3;
/// Amplitudes below this (on a unit-norm vector) are ignored by the fits.
pub const AMPLITUDE_FLOOR: f64 = 1e-14;
/// Minimum coefficient of determination for a localization fit.
pub const MIN_FIT_R2: f64 = 0.98;
/// Tolerance used to decide where a lattice becomes uniform.
pub const CORE_TOL: f64 = 1e-9;
/// A lead-attached root `w` is decaying when `|w| > 1 + DECAY_TOL`.
pub const DECAY_TOL: f64 = 1e-9;
/// Eigenpair residual bound relative to `‖H‖_∞`.
pub const RESIDUAL_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("Hamiltonian dimension {0} is too small (need at least 2)")]
    TooSmall(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("inverse iteration did not reach the residual bound for eigenpairs {indices:?}")]
    EigenvectorNoConvergence { indices: Vec<usize> },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("vector half width {0} is below the minimum of 20 for localization fits")]
    ShortVector(usize),
    #[error("all amplitudes are below the floor")]
    AllBelowFloor,
    #[error("predicate not bracketed: value at g_lo={g_lo} is {at_lo}, at g_hi={g_hi} is {at_hi}")]
    NotBracketed {
        g_lo: f64,
        g_hi: f64,
        at_lo: bool,
        at_hi: bool,
    },
    #[error("parameter grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("spectrum scan failed at g = {g}: {source}")]
    ScanPoint {
        g: f64,
        #[source]
        source: Box<SpectrumError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub energy: Complex64,
    /// Unit Euclidean norm, largest component real and positive.
    pub vector: Vec<Complex64>,
    /// `‖H v - E v‖₂`.
    pub residual: f64,
}

fn sort_energies(v: &mut [Complex64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// All eigenvalues of the truncated Hamiltonian, sorted by real then
/// imaginary part.
pub fn eigenvalues(h: &Hamiltonian) -> Result<Vec<Complex64>, SpectrumError> {
    if h.dim() < 2 {
        return Err(SpectrumError::TooSmall(h.dim()));
    }
    // a tridiagonal matrix is already upper Hessenberg
    let mut dense = h.to_dense();
    let mut ev = linalg::hessenberg_eigenvalues(&mut dense)?;
    sort_energies(&mut ev);
    Ok(ev)
}

/// All eigenpairs of the truncated Hamiltonian. Eigenvectors come from
/// inverse iteration on the tridiagonal matrix.
pub fn eigendecompose(h: &Hamiltonian) -> Result<Vec<EigenPair>, SpectrumError> {
    let energies = eigenvalues(h)?;
    let tol = RESIDUAL_REL_TOL * h.norm_inf();
    let mut failed = Vec::new();
    let mut pairs = Vec::with_capacity(energies.len());
    for (k, e) in energies.into_iter().enumerate() {
        let (vector, residual) = inverse_iteration(h, e, tol)?;
        if residual > tol {
            failed.push(k);
        }
        pairs.push(EigenPair {
            energy: e,
            vector,
            residual,
        });
    }
    if failed.is_empty() {
        Ok(pairs)
    } else {
        Err(SpectrumError::EigenvectorNoConvergence { indices: failed })
    }
}

fn inverse_iteration(
    h: &Hamiltonian,
    e: Complex64,
    tol: f64,
) -> Result<(Vec<Complex64>, f64), SpectrumError> {
    let n = h.dim();
    let scale = h.norm_inf().max(1.0);
    let shifted: Vec<Complex64> = h.diag().iter().map(|d| d - e).collect();
    let lu = TridiagonalLu::factor_perturbed(h.sub(), &shifted, h.sup(), f64::EPSILON * scale)?;
    // fixed start vector with no special symmetry
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::new(1.0 + 0.5 * (0.7 * t).sin(), 0.3 * (1.3 * t).cos())
        })
        .collect();
    let mut best = (x.clone(), f64::INFINITY);
    for _ in 0..8 {
        lu.solve_in_place(&mut x);
        let norm = norm2(&x);
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        x.iter_mut().for_each(|z| *z /= norm);
        let r = residual_norm(h, &x, e);
        if r < best.1 {
            best = (x.clone(), r);
        }
        if r <= tol {
            break;
        }
    }
    let (mut v, r) = best;
    fix_phase(&mut v);
    Ok((v, r))
}

fn residual_norm(h: &Hamiltonian, v: &[Complex64], e: Complex64) -> f64 {
    let hv = h.apply(v);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - e * b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn fix_phase(v: &mut [Complex64]) {
    let Some(big) = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
    else {
        return;
    };
    if big.norm() > 0.0 {
        let phase = big.conj() / big.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalizationKind {
    /// `|v_n| ~ exp(-rate·|n|)`.
    Exponential {
        rate: f64,
    },
    /// `|v_n| ~ |n|^exponent`.
    Algebraic {
        exponent: f64,
    },
    Delocalized,
}

impl LocalizationKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Algebraic { .. } => "algebraic",
            Self::Delocalized => "delocalized",
        }
    }

    /// Rate or exponent; NaN when delocalized.
    pub fn parameter(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => rate,
            Self::Algebraic { exponent } => exponent,
            Self::Delocalized => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationFit {
    pub kind: LocalizationKind,
    pub fit_quality: f64,
    pub tail_mass: f64,
}

/// Fraction of the norm carried by sites with `|n| > 0.9·N`.
pub fn tail_mass(v: &[Complex64]) -> f64 {
    let half = (v.len() - 1) / 2;
    let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let cut = 0.9 * half as f64;
    let tail: f64 = v
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as f64 - half as f64).abs() > cut)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    tail / total
}

/// Classify the spatial decay of a state on the window `-N..=N`.
///
/// `log|v_n|` is fitted against `|n|` and against `log|n|` over
/// `0.2·N <= |n| <= 0.8·N` (both sides pooled); the better fit with
/// `R² > 0.98` wins. If neither qualifies the window is widened to every
/// `|n| >= 1`, and failing that the better of the two is returned with its
/// low `fit_quality`.
pub fn classify_localization(v: &[Complex64]) -> Result<LocalizationFit, SpectrumError> {
    let half = (v.len().max(1) - 1) / 2;
    if half < 20 {
        return Err(SpectrumError::ShortVector(half));
    }
    let norm = norm2(v);
    if norm == 0.0 {
        return Err(SpectrumError::AllBelowFloor);
    }
    let amps: Vec<(f64, f64)> = v
        .iter()
        .enumerate()
        .map(|(i, z)| ((i as f64 - half as f64).abs(), z.norm() / norm))
        .filter(|&(_, a)| a >= AMPLITUDE_FLOOR)
        .collect();
    if amps.is_empty() {
        return Err(SpectrumError::AllBelowFloor);
    }
    let tail = tail_mass(v);
    let (lo, hi) = (0.2 * half as f64, 0.8 * half as f64);
    let windowed: Vec<(f64, f64)> = amps
        .iter()
        .copied()
        .filter(|&(d, _)| d >= lo && d <= hi)
        .collect();
    let wide: Vec<(f64, f64)> = amps.iter().copied().filter(|&(d, _)| d >= 1.0).collect();

    let mut best = decay_fits(&windowed);
    if best.is_none_or(|(_, q)| q <= MIN_FIT_R2) {
        if let Some(alt) = decay_fits(&wide) {
            if best.is_none_or(|(_, q)| alt.1 > q) {
                best = Some(alt);
            }
        }
    }
    if tail >= TAIL_TOL {
        return Ok(LocalizationFit {
            kind: LocalizationKind::Delocalized,
            fit_quality: best.map_or(0.0, |(_, q)| q),
            tail_mass: tail,
        });
    }
    let (kind, fit_quality) = best.unwrap_or((
        // all weight on the central site
        LocalizationKind::Exponential {
            rate: f64::INFINITY,
        },
        1.0,
    ));
    Ok(LocalizationFit {
        kind,
        fit_quality,
        tail_mass: tail,
    })
}

fn decay_fits(points: &[(f64, f64)]) -> Option<(LocalizationKind, f64)> {
    if points.len() < 3 {
        return None;
    }
    let logs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let dist: Vec<f64> = points.iter().map(|p| p.0).collect();
    let log_dist: Vec<f64> = dist.iter().map(|d| d.ln()).collect();
    let exp = fit_line(&dist, &logs).filter(|f| f.slope < 0.0);
    let alg = fit_line(&log_dist, &logs).filter(|f| f.slope < 0.0);
    let pick = |f: LineFit, exponential: bool| {
        let kind = if exponential {
            LocalizationKind::Exponential { rate: -f.slope }
        } else {
            LocalizationKind::Algebraic { exponent: f.slope }
        };
        (kind, f.r_squared)
    };
    match (exp, alg) {
        (Some(e), Some(a)) if a.r_squared > e.r_squared => Some(pick(a, false)),
        (Some(e), _) => Some(pick(e, true)),
        (None, Some(a)) => Some(pick(a, false)),
        (None, None) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralClass {
    /// Extended (or box-quantized) state.
    BandLike,
    /// Real energy outside the band, localized.
    Boc,
    /// Complex energy inside the band, localized.
    TypeIBic,
    /// Real energy inside the band, localized.
    TypeIIBic,
}

impl SpectralClass {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BandLike => "band",
            Self::Boc => "boc",
            Self::TypeIBic => "type1_bic",
            Self::TypeIIBic => "type2_bic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedState {
    pub pair: EigenPair,
    pub class: SpectralClass,
    pub localization: LocalizationFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub half_width: usize,
    pub states: Vec<ClassifiedState>,
    /// Any eigenvalue of the truncated matrix with `|Im E| > IMAG_TOL`.
    pub is_pt_broken: bool,
}

impl SpectrumReport {
    pub fn band_edges(&self) -> (f64, f64) {
        (-BAND_EDGE, BAND_EDGE)
    }

    pub fn of_class(&self, class: SpectralClass) -> impl Iterator<Item = &ClassifiedState> {
        self.states.iter().filter(move |s| s.class == class)
    }

    pub fn count(&self, class: SpectralClass) -> usize {
        self.of_class(class).count()
    }

    pub fn max_imag(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.pair.energy.im.abs())
            .fold(0.0, f64::max)
    }

    pub fn energies(&self) -> Vec<Complex64> {
        self.states.iter().map(|s| s.pair.energy).collect()
    }

    /// A localized complex-energy pair is present.
    pub fn has_type1_pair(&self) -> bool {
        self.count(SpectralClass::TypeIBic) > 0
    }
}

fn class_of(energy: Complex64, localized: bool) -> SpectralClass {
    let real = energy.im.abs() <= IMAG_TOL;
    let in_band = energy.re.abs() < BAND_EDGE;
    let outside = energy.re.abs() > BAND_EDGE + EDGE_TOL;
    match (localized, real, in_band, outside) {
        (true, true, _, true) => SpectralClass::Boc,
        (true, false, true, _) => SpectralClass::TypeIBic,
        (true, true, true, _) => SpectralClass::TypeIIBic,
        _ => SpectralClass::BandLike,
    }
}

/// Assign a class and a localization fit to each eigenpair.
pub fn classify_spectrum(pairs: Vec<EigenPair>, model: &LatticeModel) -> SpectrumReport {
    let is_pt_broken = pairs.iter().any(|p| p.energy.im.abs() > IMAG_TOL);
    let states = pairs
        .into_iter()
        .map(|pair| {
            let localization = if model.half_width() >= 20 {
                classify_localization(&pair.vector).unwrap_or(LocalizationFit {
                    kind: LocalizationKind::Delocalized,
                    fit_quality: 0.0,
                    tail_mass: tail_mass(&pair.vector),
                })
            } else {
                LocalizationFit {
                    kind: LocalizationKind::Delocalized,
                    fit_quality: 0.0,
                    tail_mass: tail_mass(&pair.vector),
                }
            };
            let class = class_of(pair.energy, localization.tail_mass < TAIL_TOL);
            ClassifiedState {
                pair,
                class,
                localization,
            }
        })
        .collect();
    SpectrumReport {
        half_width: model.half_width(),
        states,
        is_pt_broken,
    }
}

/// Eigendecomposition followed by classification.
pub fn analyze(model: &LatticeModel) -> Result<SpectrumReport, SpectrumError> {
    let pairs = eigendecompose(&model.hamiltonian())?;
    Ok(classify_spectrum(pairs, model))
}

/// Normalizable mode of the lattice attached to uniform leads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundState {
    pub energy: Complex64,
    /// Amplitude ratio `c_{n+1}/c_n` in the right lead, `|z| < 1`.
    pub decay_factor: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiatingSpectrum {
    pub core_half_width: usize,
    /// True when the lattice is uniform outside the core, making the result
    /// exact for the infinite lattice.
    pub exact: bool,
    pub states: Vec<BoundState>,
}

/// Bound states of the core `-M..=M` attached to semi-infinite uniform
/// leads, where `M` is [`LatticeModel::core_half_width`].
///
/// With `E = z + 1/z` and the outgoing lead condition `c_{±(M+1)} = z c_{±M}`
/// the stationary equation becomes the quadratic eigenproblem
/// `w² c = w H c - D c` in `w = 1/z`, with `D` the identity minus the two
/// end projectors. It is solved through its companion linearization;
/// roots with `|w| > 1` are normalizable.
pub fn radiating_bound_states(model: &LatticeModel) -> Result<RadiatingSpectrum, SpectrumError> {
    let m = model.core_half_width(CORE_TOL);
    let exact = m < model.half_width();
    let mi = m as i64;
    let size = 2 * m + 1;
    let mut companion = DenseMatrix::zeros(2 * size);
    for i in 0..size {
        companion[(i, size + i)] = Complex64::new(1.0, 0.0);
        if i != 0 && i != size - 1 {
            companion[(size + i, i)] = Complex64::new(-1.0, 0.0);
        }
    }
    for i in 0..size {
        let n = i as i64 - mi;
        companion[(size + i, size + i)] = model.potential(n);
        if i > 0 {
            companion[(size + i, size + i - 1)] = model.coupling(n);
        }
        if i + 1 < size {
            companion[(size + i, size + i + 1)] = model.coupling(n + 1);
        }
    }
    let roots = linalg::eigenvalues(&companion)?;
    let mut states: Vec<BoundState> = roots
        .into_iter()
        .filter(|w| w.norm() > 1.0 + DECAY_TOL)
        .map(|w| BoundState {
            energy: w + w.inv(),
            decay_factor: w.inv(),
        })
        .collect();
    states.sort_by(|a, b| {
        a.energy
            .re
            .total_cmp(&b.energy.re)
            .then(a.energy.im.total_cmp(&b.energy.im))
    });
    Ok(RadiatingSpectrum {
        core_half_width: m,
        exact,
        states,
    })
}

impl RadiatingSpectrum {
    pub fn has_complex_mode(&self) -> bool {
        self.states.iter().any(|s| s.energy.im.abs() > IMAG_TOL)
    }

    /// Real modes outside the band. Normalizability is already decided by
    /// the decay factor, so no margin is applied at the band edge, where
    /// `|E| - 2` vanishes quadratically.
    pub fn boc_count(&self) -> usize {
        self.states
            .iter()
            .filter(|s| s.energy.im.abs() <= IMAG_TOL && s.energy.re.abs() > BAND_EDGE)
            .count()
    }
}

/// How the symmetry-breaking and bound-state predicates are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakingCriterion {
    /// Lead-attached problem when the lattice has a compact core, the
    /// truncated spectrum otherwise.
    Auto,
    /// Eigenvalues of the open-ended truncated matrix.
    TruncatedSpectrum,
    /// Normalizable modes of the lead-attached problem.
    RadiatingBoundary,
}

impl BreakingCriterion {
    pub fn resolve(self, model: &LatticeModel) -> Self {
        match self {
            Self::Auto if model.core_half_width(CORE_TOL) < model.half_width() => {
                Self::RadiatingBoundary
            }
            Self::Auto => Self::TruncatedSpectrum,
            other => other,
        }
    }
}

/// True when the spectrum contains a complex-conjugate pair.
pub fn is_pt_broken(
    model: &LatticeModel,
    criterion: BreakingCriterion,
) -> Result<bool, SpectrumError> {
    match criterion.resolve(model) {
        BreakingCriterion::RadiatingBoundary => {
            Ok(radiating_bound_states(model)?.has_complex_mode())
        }
        _ => Ok(eigenvalues(&model.hamiltonian())?
            .iter()
            .any(|e| e.im.abs() > IMAG_TOL)),
    }
}

/// True when a real bound state outside the band is present.
pub fn has_boc(model: &LatticeModel, criterion: BreakingCriterion) -> Result<bool, SpectrumError> {
    match criterion.resolve(model) {
        BreakingCriterion::RadiatingBoundary => Ok(radiating_bound_states(model)?.boc_count() > 0),
        _ => Ok(analyze(model)?.count(SpectralClass::Boc) > 0),
    }
}

/// One-parameter family of built-in models indexed by `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelFamily {
    A { delta: f64, half_width: usize },
    B { half_width: usize },
}

impl ModelFamily {
    pub fn build(&self, g: f64) -> Result<LatticeModel, LatticeError> {
        match *self {
            Self::A { delta, half_width } => LatticeModel::model_a(delta, g, half_width),
            Self::B { half_width } => LatticeModel::model_b(g, half_width),
        }
    }

    pub fn half_width(&self) -> usize {
        match *self {
            Self::A { half_width, .. } | Self::B { half_width } => half_width,
        }
    }

    pub fn with_half_width(self, half_width: usize) -> Self {
        match self {
            Self::A { delta, .. } => Self::A { delta, half_width },
            Self::B { .. } => Self::B { half_width },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub g_th: f64,
    #[serde(rename = "N")]
    pub half_width: usize,
    pub tol: f64,
    pub criterion: BreakingCriterion,
}

fn bisect(
    g_lo: f64,
    g_hi: f64,
    tol: f64,
    mut predicate: impl FnMut(f64) -> Result<bool, SpectrumError>,
) -> Result<f64, SpectrumError> {
    let at_lo = predicate(g_lo)?;
    let at_hi = predicate(g_hi)?;
    if at_lo == at_hi {
        return Err(SpectrumError::NotBracketed {
            g_lo,
            g_hi,
            at_lo,
            at_hi,
        });
    }
    let (mut lo, mut hi) = (g_lo, g_hi);
    while (hi - lo).abs() > 2.0 * tol {
        let mid = 0.5 * (lo + hi);
        if predicate(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection for the onset of complex eigenvalues. Requires the spectrum
/// to be unbroken at `g_lo` and broken at `g_hi`.
pub fn find_threshold(
    family: ModelFamily,
    g_lo: f64,
    g_hi: f64,
    tol_g: f64,
    criterion: BreakingCriterion,
) -> Result<ThresholdReport, SpectrumError> {
    let resolved = criterion.resolve(&family.build(g_hi)?);
    let predicate = |g: f64| is_pt_broken(&family.build(g)?, resolved);
    if predicate(g_lo)? || !predicate(g_hi)? {
        return Err(SpectrumError::NotBracketed {
            g_lo,
            g_hi,
            at_lo: predicate(g_lo)?,
            at_hi: predicate(g_hi)?,
        });
    }
    let g_th = bisect(g_lo, g_hi, tol_g, predicate)?;
    Ok(ThresholdReport {
        g_th,
        half_width: family.half_width(),
        tol: tol_g,
        criterion: resolved,
    })
}

/// Bisection for the gain at which the bound state above the band of
/// model A merges into the continuum. Requires the state at `g_lo` and
/// none at `g_hi`.
pub fn find_boc_disappearance(
    delta: f64,
    half_width: usize,
    g_lo: f64,
    g_hi: f64,
    tol_g: f64,
    criterion: BreakingCriterion,
) -> Result<ThresholdReport, SpectrumError> {
    let family = ModelFamily::A { delta, half_width };
    let resolved = criterion.resolve(&family.build(g_lo)?);
    let predicate = |g: f64| has_boc(&family.build(g)?, resolved);
    let (at_lo, at_hi) = (predicate(g_lo)?, predicate(g_hi)?);
    if !at_lo || at_hi {
        return Err(SpectrumError::NotBracketed {
            g_lo,
            g_hi,
            at_lo,
            at_hi,
        });
    }
    let g_th = bisect(g_lo, g_hi, tol_g, predicate)?;
    Ok(ThresholdReport {
        g_th,
        half_width,
        tol: tol_g,
        criterion: resolved,
    })
}

/// Spectrum report for every `g` in a strictly increasing grid. With
/// `threads > 1` the grid points are evaluated on a dedicated pool; output
/// order is the grid order regardless.
pub fn spectrum_scan(
    family: ModelFamily,
    g_grid: &[f64],
    threads: usize,
) -> Result<Vec<(f64, SpectrumReport)>, SpectrumError> {
    if g_grid.is_empty()
        || g_grid
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(SpectrumError::BadGrid);
    }
    let point = |&g: &f64| -> Result<(f64, SpectrumReport), SpectrumError> {
        let model = family.build(g).map_err(|e| SpectrumError::ScanPoint {
            g,
            source: Box::new(e.into()),
        })?;
        analyze(&model)
            .map(|r| (g, r))
            .map_err(|e| SpectrumError::ScanPoint {
                g,
                source: Box::new(e),
            })
    };
    if threads <= 1 {
        g_grid.iter().map(point).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| g_grid.par_iter().map(point).collect())
    }
}

/// Scan rows in the format `g, index, re_E, im_E, class, loc_kind,
/// loc_param, tail_mass`.
pub fn write_scan_csv<W: std::io::Write>(
    rows: &[(f64, SpectrumReport)],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "g",
        "index",
        "re_E",
        "im_E",
        "class",
        "loc_kind",
        "loc_param",
        "tail_mass",
    ])?;
    for (g, report) in rows {
        for (k, s) in report.states.iter().enumerate() {
            w.write_record([
                crate::fmt_num(*g),
                k.to_string(),
                crate::fmt_num(s.pair.energy.re),
                crate::fmt_num(s.pair.energy.im),
                s.class.name().to_string(),
                s.localization.kind.name().to_string(),
                crate::fmt_num(s.localization.kind.parameter()),
                crate::fmt_num(s.localization.tail_mass),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeModel;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dimer_spectrum() {
        let h = Hamiltonian::from_bands(0, vec![], vec![c(0.0, 0.0)], vec![]);
        assert!(matches!(
            eigendecompose(&h),
            Err(SpectrumError::TooSmall(1))
        ));
        let m =
            LatticeModel::custom(1, vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0); 3]).unwrap();
        let ev = eigenvalues(&m.hamiltonian()).unwrap();
        let s2 = 2f64.sqrt();
        assert!((ev[0] - c(-s2, 0.0)).norm() < 1e-14);
        assert!(ev[1].norm() < 1e-14);
        assert!((ev[2] - c(s2, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn gain_loss_trimer() {
        // characteristic polynomial -λ(λ² - (2 - g²))
        for g in [0.5, 2.0] {
            let m = LatticeModel::custom(
                1,
                vec![c(1.0, 0.0), c(1.0, 0.0)],
                vec![c(0.0, g), c(0.0, 0.0), c(0.0, -g)],
            )
            .unwrap();
            let pairs = eigendecompose(&m.hamiltonian()).unwrap();
            let root = c(2.0 - g * g, 0.0).sqrt();
            for e in [-root, c(0.0, 0.0), root] {
                let p = pairs
                    .iter()
                    .min_by(|a, b| (a.energy - e).norm().total_cmp(&(b.energy - e).norm()))
                    .unwrap();
                assert!((p.energy - e).norm() < 1e-13, "{} vs {}", p.energy, e);
                assert!((norm2(&p.vector) - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn model_b_unbroken_has_zero_mode() {
        let m = LatticeModel::model_b(0.5, 100).unwrap();
        let pairs = eigendecompose(&m.hamiltonian()).unwrap();
        assert!(pairs.iter().any(|p| p.energy.norm() < 1e-8));
        assert!(pairs.iter().all(|p| p.energy.im.abs() < 1e-8));
        let tol = RESIDUAL_REL_TOL * m.hamiltonian().norm_inf();
        assert!(pairs.iter().all(|p| p.residual <= tol));
    }

    fn profile(half: usize, f: impl Fn(i64) -> Complex64) -> Vec<Complex64> {
        let h = half as i64;
        let mut v: Vec<Complex64> = (-h..=h).map(f).collect();
        let n = norm2(&v);
        v.iter_mut().for_each(|z| *z /= n);
        v
    }

    #[test]
    fn exponential_profile_is_recognized() {
        let v = profile(60, |n| c((-(n.abs() as f64) / 2.0).exp(), 0.0));
        let fit = classify_localization(&v).unwrap();
        match fit.kind {
            LocalizationKind::Exponential { rate } => assert!((rate - 0.5).abs() < 0.01),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn algebraic_profile_is_recognized() {
        // even sites only, 1/sqrt(n²-1)
        let v = profile(400, |n| {
            if n == 0 {
                c(1.0, 0.0)
            } else if n % 2 == 0 {
                c(1.0 / ((n * n - 1) as f64).sqrt(), 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let fit = classify_localization(&v).unwrap();
        match fit.kind {
            LocalizationKind::Algebraic { exponent } => assert!((exponent + 1.0).abs() < 0.05),
            other => panic!("{other:?}"),
        }
        assert!(fit.fit_quality > MIN_FIT_R2);
    }

    #[test]
    fn plane_wave_is_delocalized() {
        let v = profile(100, |n| Complex64::from_polar(1.0, 0.37 * n as f64));
        let fit = classify_localization(&v).unwrap();
        assert_eq!(fit.kind, LocalizationKind::Delocalized);
        assert!(fit.tail_mass > 0.05);
    }

    #[test]
    fn localization_errors() {
        assert!(matches!(
            classify_localization(&vec![c(1.0, 0.0); 21]),
            Err(SpectrumError::ShortVector(10))
        ));
        assert!(matches!(
            classify_localization(&vec![c(0.0, 0.0); 81]),
            Err(SpectrumError::AllBelowFloor)
        ));
    }

    #[test]
    fn single_boc_at_weak_gain() {
        let report = analyze(&LatticeModel::model_a(0.3, 0.2, 200).unwrap()).unwrap();
        let bocs: Vec<_> = report.of_class(SpectralClass::Boc).collect();
        assert_eq!(bocs.len(), 1);
        assert!(bocs[0].pair.energy.re > 2.0);
        assert!(bocs[0].pair.energy.im.abs() < IMAG_TOL);
        assert!(!report.is_pt_broken);
    }

    #[test]
    fn type1_pair_above_threshold() {
        let report = analyze(&LatticeModel::model_a(0.3, 0.9, 200).unwrap()).unwrap();
        let bics: Vec<_> = report.of_class(SpectralClass::TypeIBic).collect();
        assert_eq!(bics.len(), 2);
        let (a, b) = (bics[0].pair.energy, bics[1].pair.energy);
        assert!((a - b.conj()).norm() < 1e-8);
        assert!(a.re.abs() < 2.0);
        assert!(report.is_pt_broken);
    }

    #[test]
    fn type2_bic_of_model_b() {
        let report = analyze(&LatticeModel::model_b(0.5, 200).unwrap()).unwrap();
        let bics: Vec<_> = report.of_class(SpectralClass::TypeIIBic).collect();
        assert_eq!(bics.len(), 1);
        assert!(bics[0].pair.energy.norm() < 1e-8);
        assert!(!report.is_pt_broken);
        assert_eq!(report.count(SpectralClass::TypeIBic), 0);
    }

    #[test]
    fn radiating_spectrum_of_uniform_lattice_is_empty() {
        let m = LatticeModel::model_a(0.0, 0.0, 10).unwrap();
        let r = radiating_bound_states(&m).unwrap();
        assert!(r.exact);
        assert!(r.states.is_empty());
    }

    #[test]
    fn radiating_bound_states_match_truncated_ones() {
        // well-localized states agree between the two views
        for g in [0.2, 0.9] {
            let m = LatticeModel::model_a(0.3, g, 200).unwrap();
            let rad = radiating_bound_states(&m).unwrap();
            let report = analyze(&m).unwrap();
            let localized: Vec<Complex64> = report
                .states
                .iter()
                .filter(|s| s.class != SpectralClass::BandLike)
                .map(|s| s.pair.energy)
                .collect();
            assert_eq!(localized.len(), rad.states.len(), "g={g}");
            for s in &rad.states {
                assert!(
                    localized.iter().any(|e| (e - s.energy).norm() < 1e-9),
                    "g={g}: {} not found",
                    s.energy
                );
            }
        }
    }

    #[test]
    fn auto_criterion_resolution() {
        let a = LatticeModel::model_a(0.3, 0.5, 50).unwrap();
        let b = LatticeModel::model_b(0.5, 50).unwrap();
        assert_eq!(
            BreakingCriterion::Auto.resolve(&a),
            BreakingCriterion::RadiatingBoundary
        );
        assert_eq!(
            BreakingCriterion::Auto.resolve(&b),
            BreakingCriterion::TruncatedSpectrum
        );
    }

    #[test]
    fn unbracketed_threshold_is_an_error() {
        let fam = ModelFamily::A {
            delta: 0.3,
            half_width: 50,
        };
        assert!(matches!(
            find_threshold(fam, 0.1, 0.2, 1e-3, BreakingCriterion::Auto),
            Err(SpectrumError::NotBracketed { .. })
        ));
    }

    #[test]
    fn scan_rejects_bad_grid() {
        let fam = ModelFamily::B { half_width: 20 };
        assert!(matches!(
            spectrum_scan(fam, &[], 1),
            Err(SpectrumError::BadGrid)
        ));
        assert!(matches!(
            spectrum_scan(fam, &[0.5, 0.4], 1),
            Err(SpectrumError::BadGrid)
        ));
    }

    #[test]
    fn single_point_scan_equals_direct_report() {
        let fam = ModelFamily::B { half_width: 30 };
        let rows = spectrum_scan(fam, &[0.5], 1).unwrap();
        assert_eq!(rows.len(), 1);
        let direct = analyze(&fam.build(0.5).unwrap()).unwrap();
        assert_eq!(rows[0].1, direct);
    }
}
