//! Transmission of Bloch waves through the non-uniform part of a lattice.
//!
//! A wave `e^{iqn}` of energy `E = 2 cos q` is incident from the left. The
//! amplitudes outside the core `-M..=M` are fixed by the ansatz
//! `c_n = e^{iqn} + r e^{-iqn}` (left) and `c_n = t e^{iqn}` (right); the
//! core amplitudes solve a tridiagonal system with outgoing-wave boundary
//! rows. A uniform lattice gives `t = 1`, `r = 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

use crate::lattice::LatticeModel;
use crate::linalg::TridiagonalLu;
use crate::spectrum::CORE_TOL;

/// `|t|` above this marks a spectral singularity.
pub const SINGULAR_T: f64 = 1e12;
/// Pivot growth above this marks the linear system as numerically singular.
pub const SINGULAR_CONDITION: f64 = 1e14;
/// Features with smaller prominence are rejected.
pub const MIN_PROMINENCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error("wavenumber q = {0} outside (0, π)")]
    WavenumberOutOfRange(f64),
    #[error("spectral singularity candidate at q = {q}")]
    Singular { q: f64 },
    #[error("core half width {given} is below the non-uniform region half width {required}")]
    CoreTooSmall { given: usize, required: usize },
    #[error("wavenumber grid is empty")]
    EmptyGrid,
    #[error("curve has {0} points, need at least 3 with matching lengths")]
    ShortCurve(usize),
    #[error("no peak or dip with prominence above {MIN_PROMINENCE}")]
    Featureless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScatteringResult {
    pub q: f64,
    pub energy: f64,
    pub t: Complex64,
    pub r: Complex64,
    pub transmittance: f64,
    /// Largest stationary-equation mismatch over the core rows, relative to
    /// `max(1, max|c_n|)`.
    pub residual: f64,
}

fn check_q(q: f64) -> Result<(), ScatteringError> {
    if q > 0.0 && q < PI {
        Ok(())
    } else {
        Err(ScatteringError::WavenumberOutOfRange(q))
    }
}

/// Default core half width: where the lattice becomes uniform to 1e-9, or
/// the full window when it never does.
pub fn default_core(model: &LatticeModel) -> usize {
    model.core_half_width(CORE_TOL)
}

/// Transmission and reflection at wavenumber `q`. `core` defaults to
/// [`default_core`]; sites beyond the stored window count as uniform.
pub fn solve_scattering(
    model: &LatticeModel,
    q: f64,
    core: Option<usize>,
) -> Result<ScatteringResult, ScatteringError> {
    check_q(q)?;
    let required = default_core(model);
    let m = core.unwrap_or(required);
    if m < required {
        return Err(ScatteringError::CoreTooSmall { given: m, required });
    }
    let mi = m as i64;
    let size = 2 * m + 1;
    let energy = 2.0 * q.cos();
    let lead = Complex64::from_polar(1.0, q);
    let phase = |k: f64| Complex64::from_polar(1.0, q * k);

    let mut d: Vec<Complex64> = (-mi..=mi).map(|n| model.potential(n) - energy).collect();
    d[0] += lead;
    d[size - 1] += lead;
    let dl: Vec<Complex64> = (-mi + 1..=mi).map(|n| model.coupling(n)).collect();
    let du = dl.clone();

    let mut rhs = vec![Complex64::new(0.0, 0.0); size];
    let mf = m as f64;
    rhs[0] -= phase(-(mf + 1.0)) - phase(-(mf - 1.0));

    let lu = TridiagonalLu::factor(&dl, &d, &du).map_err(|_| ScatteringError::Singular { q })?;
    if lu.pivot_ratio() > SINGULAR_CONDITION {
        return Err(ScatteringError::Singular { q });
    }
    let mut c = rhs;
    lu.solve_in_place(&mut c);

    let t = c[size - 1] * phase(-mf);
    let r = (c[0] - phase(-mf)) * phase(-mf);
    if t.norm().is_nan() || t.norm() > SINGULAR_T {
        return Err(ScatteringError::Singular { q });
    }

    // full stationary equation on the core rows with the leads restored
    let left_outer = phase(-(mf + 1.0)) + r * phase(mf + 1.0);
    let right_outer = t * phase(mf + 1.0);
    let scale = c.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = (0..size)
        .map(|i| {
            let n = i as i64 - mi;
            let left = if i == 0 { left_outer } else { c[i - 1] };
            let right = if i == size - 1 { right_outer } else { c[i + 1] };
            let row = model.coupling(n) * left
                + model.coupling(n + 1) * right
                + (model.potential(n) - energy) * c[i];
            row.norm()
        })
        .fold(0.0, f64::max)
        / scale;

    Ok(ScatteringResult {
        q,
        energy,
        t,
        r,
        transmittance: t.norm_sqr(),
        residual,
    })
}

/// Closed-form transmission of model A,
/// `t = i sin q e^{2iq} / (Δ + i sin q - |σ|² cos q e^{2iq})`, `|σ|² = Δ² + g²`.
/// This carries an extra factor `e^{2iq}` relative to [`solve_scattering`].
pub fn transmission_model_a_analytic(
    delta: f64,
    g: f64,
    q: f64,
) -> Result<Complex64, ScatteringError> {
    check_q(q)?;
    let s = delta * delta + g * g;
    let e2 = Complex64::from_polar(1.0, 2.0 * q);
    let num = Complex64::new(0.0, q.sin()) * e2;
    let den = Complex64::new(delta, q.sin()) - s * q.cos() * e2;
    let t = num / den;
    if den.norm() == 0.0 || t.norm().is_nan() || t.norm() > SINGULAR_T {
        return Err(ScatteringError::Singular { q });
    }
    Ok(t)
}

/// One grid point of a transmittance scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub q: f64,
    pub result: Result<ScatteringResult, ScatteringError>,
}

/// [`solve_scattering`] over a grid; singular points are kept in place.
pub fn transmittance_scan(
    model: &LatticeModel,
    q_grid: &[f64],
    core: Option<usize>,
    threads: usize,
) -> Result<Vec<ScanPoint>, ScatteringError> {
    if q_grid.is_empty() {
        return Err(ScatteringError::EmptyGrid);
    }
    q_grid.iter().try_for_each(|&q| check_q(q))?;
    let point = |&q: &f64| ScanPoint {
        q,
        result: solve_scattering(model, q, core),
    };
    if threads <= 1 {
        Ok(q_grid.iter().map(point).collect())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Ok(pool.install(|| q_grid.par_iter().map(point).collect()))
    }
}

/// Uniform grid of `count` points strictly inside `(0, π)`.
pub fn interior_grid(count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| PI * k as f64 / (count + 1) as f64)
        .collect()
}

/// Columns `q_over_pi, T, re_t, im_t, re_r, im_r`, plus `T_analytic,
/// re_t_analytic, im_t_analytic` when `analytic` holds model A's `(Δ, g)`.
/// Analytic columns use the solver's phase convention. Singular points are
/// written with `T = inf` and NaN coefficients.
pub fn write_scan_csv<W: std::io::Write>(
    points: &[ScanPoint],
    analytic: Option<(f64, f64)>,
    out: W,
) -> Result<(), csv::Error> {
    use crate::fmt_num as f;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["q_over_pi", "T", "re_t", "im_t", "re_r", "im_r"];
    if analytic.is_some() {
        header.extend(["T_analytic", "re_t_analytic", "im_t_analytic"]);
    }
    w.write_record(&header)?;
    let nan = Complex64::new(f64::NAN, f64::NAN);
    for p in points {
        let (tr, t, r) = match &p.result {
            Ok(s) => (s.transmittance, s.t, s.r),
            Err(_) => (f64::INFINITY, nan, nan),
        };
        let mut row = vec![f(p.q / PI), f(tr), f(t.re), f(t.im), f(r.re), f(r.im)];
        if let Some((delta, g)) = analytic {
            let (ta, a) = match transmission_model_a_analytic(delta, g, p.q) {
                Ok(a) => {
                    let a = a * Complex64::from_polar(1.0, -2.0 * p.q);
                    (a.norm_sqr(), a)
                }
                Err(_) => (f64::INFINITY, nan),
            };
            row.extend([f(ta), f(a.re), f(a.im)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Peak,
    Dip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralFeature {
    pub kind: FeatureKind,
    pub q_loc: f64,
    /// Full width at half prominence.
    pub width: f64,
    pub extremum_t: f64,
    pub prominence: f64,
}

/// Dominant resonance peak or dip of `T(q)` relative to the reflectionless
/// baseline `T = 1`.
///
/// The global maximum and the global minimum are candidates. A candidate
/// counts only if the curve crosses its half-prominence level on both sides,
/// which discards extrema sitting on the band edges. The admissible
/// candidate with the larger prominence wins.
pub fn find_spectral_feature(q: &[f64], t: &[f64]) -> Result<SpectralFeature, ScatteringError> {
    if q.len() != t.len() || q.len() < 3 {
        return Err(ScatteringError::ShortCurve(q.len().min(t.len())));
    }
    let (imax, &tmax) = argext(t, |a, b| a > b);
    let (imin, &tmin) = argext(t, |a, b| a < b);
    let peak =
        half_width(q, t, imax, 1.0 + 0.5 * (tmax - 1.0), true).map(|width| SpectralFeature {
            kind: FeatureKind::Peak,
            q_loc: q[imax],
            width,
            extremum_t: tmax,
            prominence: tmax - 1.0,
        });
    let dip =
        half_width(q, t, imin, 1.0 - 0.5 * (1.0 - tmin), false).map(|width| SpectralFeature {
            kind: FeatureKind::Dip,
            q_loc: q[imin],
            width,
            extremum_t: tmin,
            prominence: 1.0 - tmin,
        });
    [peak, dip]
        .into_iter()
        .flatten()
        .filter(|f| f.prominence > MIN_PROMINENCE)
        .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
        .ok_or(ScatteringError::Featureless)
}

fn argext(t: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, &f64) {
    let mut best = 0;
    for (i, &v) in t.iter().enumerate() {
        if better(v, t[best]) {
            best = i;
        }
    }
    (best, &t[best])
}

/// Distance between the nearest half-level crossings around `at`, with
/// linear interpolation; `None` if either side never crosses.
fn half_width(q: &[f64], t: &[f64], at: usize, level: f64, peak: bool) -> Option<f64> {
    let beyond = |v: f64| if peak { v < level } else { v > level };
    let cross = |i: usize, j: usize| q[i] + (level - t[i]) * (q[j] - q[i]) / (t[j] - t[i]);
    let left = (0..at)
        .rev()
        .find(|&i| beyond(t[i]))
        .map(|i| cross(i, i + 1))?;
    let right = (at + 1..t.len())
        .find(|&i| beyond(t[i]))
        .map(|i| cross(i - 1, i))?;
    Some(right - left)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_lattice_is_transparent() {
        let m = LatticeModel::model_a(0.0, 0.0, 10).unwrap();
        for q in [0.1, 1.0, 2.5, 3.0] {
            let s = solve_scattering(&m, q, None).unwrap();
            assert!((s.t - 1.0).norm() < 1e-13);
            assert!(s.r.norm() < 1e-13);
            assert!(s.residual < 1e-13);
        }
    }

    #[test]
    fn wavenumber_bounds() {
        let m = LatticeModel::model_a(0.3, 0.3, 10).unwrap();
        for q in [0.0, PI, -0.1, f64::NAN] {
            assert!(matches!(
                solve_scattering(&m, q, None),
                Err(ScatteringError::WavenumberOutOfRange(_))
            ));
        }
    }

    #[test]
    fn core_must_cover_defect() {
        let m = LatticeModel::model_a(0.3, 0.3, 10).unwrap();
        assert_eq!(default_core(&m), 2);
        assert!(matches!(
            solve_scattering(&m, 1.0, Some(1)),
            Err(ScatteringError::CoreTooSmall {
                given: 1,
                required: 2
            })
        ));
        // a larger core changes nothing
        let a = solve_scattering(&m, 1.0, Some(2)).unwrap();
        let b = solve_scattering(&m, 1.0, Some(7)).unwrap();
        assert!((a.t - b.t).norm() < 1e-13);
        assert!((a.r - b.r).norm() < 1e-13);
    }

    #[test]
    fn analytic_examples() {
        let t = transmission_model_a_analytic(0.0, 0.0, 0.7).unwrap();
        assert!((t - Complex64::from_polar(1.0, 1.4)).norm() < 1e-15);
        for (delta, g) in [(0.3, 0.2), (1.0, 0.5)] {
            let t = transmission_model_a_analytic(delta, g, PI / 2.0).unwrap();
            let expect = Complex64::new(0.0, -1.0) / Complex64::new(delta, 1.0);
            assert!((t - expect).norm() < 1e-14);
            assert!((t.norm_sqr() - 1.0 / (delta * delta + 1.0)).abs() < 1e-14);
        }
        let near = transmission_model_a_analytic(0.3, 0.752, 0.1621 * PI).unwrap();
        assert!(near.norm() > 1e3);
    }

    #[test]
    fn hermitian_unitarity() {
        let m = LatticeModel::model_a(0.7, 0.0, 10).unwrap();
        for q in interior_grid(50) {
            let s = solve_scattering(&m, q, None).unwrap();
            assert!((s.t.norm_sqr() + s.r.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn numeric_matches_closed_form_phase() {
        let m = LatticeModel::model_a(0.3, 0.6, 10).unwrap();
        for q in interior_grid(40) {
            let s = solve_scattering(&m, q, None).unwrap();
            let a = transmission_model_a_analytic(0.3, 0.6, q).unwrap();
            assert!((s.t - a * Complex64::from_polar(1.0, -2.0 * q)).norm() < 1e-12);
        }
    }

    #[test]
    fn scan_grid_validation() {
        let m = LatticeModel::model_a(0.3, 0.3, 10).unwrap();
        assert_eq!(
            transmittance_scan(&m, &[], None, 1),
            Err(ScatteringError::EmptyGrid)
        );
        assert!(transmittance_scan(&m, &[1.0, 4.0], None, 1).is_err());
        let one = transmittance_scan(&m, &[1.0], None, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].result, solve_scattering(&m, 1.0, None));
    }

    #[test]
    fn flat_curve_is_featureless() {
        let q = interior_grid(300);
        let t = vec![1.0; 300];
        assert_eq!(
            find_spectral_feature(&q, &t),
            Err(ScatteringError::Featureless)
        );
    }

    #[test]
    fn lorentzian_peak_width() {
        let q = interior_grid(2001);
        let (q0, gamma) = (1.2, 0.05);
        let t: Vec<f64> = q
            .iter()
            .map(|&x| 1.0 + 4.0 * gamma * gamma / ((x - q0) * (x - q0) + gamma * gamma))
            .collect();
        let f = find_spectral_feature(&q, &t).unwrap();
        assert_eq!(f.kind, FeatureKind::Peak);
        assert!((f.q_loc - q0).abs() < 2e-3);
        assert!((f.width - 2.0 * gamma).abs() < 2e-3);
    }

    #[test]
    fn edge_extremum_is_ignored() {
        // interior peak of prominence 0.5, transmittance falling to zero at q = π
        let q = interior_grid(1000);
        let t: Vec<f64> = q
            .iter()
            .map(|&x| {
                (1.0 + 0.5 * (-(x - 1.0f64).powi(2) / 0.01).exp()) * (1.0 - (-(PI - x) / 0.1).exp())
            })
            .collect();
        let f = find_spectral_feature(&q, &t).unwrap();
        assert_eq!(f.kind, FeatureKind::Peak);
        assert!((f.q_loc - 1.0).abs() < 5e-3);
    }

    #[test]
    fn model_b_dip_sits_at_quarter_band() {
        let m = LatticeModel::model_b(0.9, 2000).unwrap();
        let q = interior_grid(399);
        let t: Vec<f64> = q
            .iter()
            .map(|&x| solve_scattering(&m, x, None).unwrap().transmittance)
            .collect();
        let f = find_spectral_feature(&q, &t).unwrap();
        assert_eq!(f.kind, FeatureKind::Dip);
        assert!((f.q_loc - PI / 2.0).abs() < 0.01 * PI);
    }
}
