//! Evolution `i dc/dz = H c` on the truncated lattice, total power and its
//! growth law.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::fit::fit_line;
use crate::lattice::{Hamiltonian, LatticeModel};
use crate::linalg::norm2;

/// Propagation stops once `‖c‖` exceeds this.
pub const OVERFLOW_NORM: f64 = 1e150;
/// Relative local tolerance of the adaptive integrator.
pub const RK_RTOL: f64 = 1e-12;
/// Minimum samples inside the growth-fit window.
pub const MIN_GROWTH_SAMPLES: usize = 50;
/// Log-log slopes below this count as bounded.
pub const BOUNDED_SLOPE: f64 = 0.5;
/// Exponential growth needs this fit quality.
pub const EXP_MIN_R2: f64 = 0.995;
/// Exponential growth needs `rate · window length` above this.
pub const EXP_MIN_EXPONENT: f64 = 2.0;

const MINUS_I: Complex64 = Complex64::new(0.0, -1.0);

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("initial state has zero norm or non-finite entries")]
    BadInitialState,
    #[error("initial state has {got} sites, lattice has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("need 0 < dz_out <= z_max, got z_max = {z_max}, dz_out = {dz_out}")]
    BadRange { z_max: f64, dz_out: f64 },
    #[error("norm exceeded {OVERFLOW_NORM:e} at z = {z_reached}")]
    Overflow {
        z_reached: f64,
        trace: Box<PropagationTrace>,
    },
    #[error("adaptive step size collapsed at z = {0}")]
    StepUnderflow(f64),
    #[error("growth fit needs at least {need} samples in the window, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-positive power {p} at z = {z}")]
    NonPositivePower { z: f64, p: f64 },
    #[error("window fraction must lie in [0, 1), got {0}")]
    BadWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exponential action by a scaled Taylor series.
    MatrixExponential,
    /// Dormand-Prince 5(4) with step-size control.
    AdaptiveRk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationTrace {
    pub half_width: usize,
    pub z: Vec<f64>,
    /// One row per sample, sites `-N..=N`.
    pub states: Vec<Vec<Complex64>>,
    pub power: Vec<f64>,
}

impl PropagationTrace {
    pub fn last_state(&self) -> &[Complex64] {
        self.states.last().expect("trace is never empty")
    }
}

pub fn power(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum()
}

pub fn propagate(
    model: &LatticeModel,
    c0: &[Complex64],
    z_max: f64,
    dz_out: f64,
    method: Method,
) -> Result<PropagationTrace, PropagationError> {
    propagate_hamiltonian(&model.hamiltonian(), c0, z_max, dz_out, method)
}

/// Integrate from `z = 0` to `z_max`, sampling every `dz_out` (the last
/// sample is `z_max` itself).
pub fn propagate_hamiltonian(
    h: &Hamiltonian,
    c0: &[Complex64],
    z_max: f64,
    dz_out: f64,
    method: Method,
) -> Result<PropagationTrace, PropagationError> {
    if c0.len() != h.dim() {
        return Err(PropagationError::Dimension {
            expected: h.dim(),
            got: c0.len(),
        });
    }
    let n0 = norm2(c0);
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(PropagationError::BadInitialState);
    }
    if !(dz_out > 0.0 && z_max >= dz_out && z_max.is_finite()) {
        return Err(PropagationError::BadRange { z_max, dz_out });
    }
    let steps = (z_max / dz_out - 1e-9).ceil() as usize;
    let mut trace = PropagationTrace {
        half_width: h.half_width(),
        z: vec![0.0],
        states: vec![c0.to_vec()],
        power: vec![power(c0)],
    };
    let mut c = c0.to_vec();
    let mut stepper: Box<dyn Stepper> = match method {
        Method::MatrixExponential => Box::new(TaylorStepper::new(h)),
        Method::AdaptiveRk => Box::new(DormandPrince::new(h, n0)),
    };
    let mut z = 0.0;
    for k in 1..=steps {
        let z_next = (k as f64 * dz_out).min(z_max);
        stepper.advance(&mut c, z, z_next)?;
        z = z_next;
        let p = power(&c);
        trace.z.push(z);
        trace.states.push(c.clone());
        trace.power.push(p);
        if p.is_nan() || p.sqrt() > OVERFLOW_NORM {
            return Err(PropagationError::Overflow {
                z_reached: z,
                trace: Box::new(trace),
            });
        }
    }
    Ok(trace)
}

trait Stepper {
    fn advance(&mut self, c: &mut [Complex64], z0: f64, z1: f64) -> Result<(), PropagationError>;
}

/// `exp(-i H Δz) c` as a Taylor series on substeps with `‖H‖ h <= 1`.
struct TaylorStepper<'a> {
    h: &'a Hamiltonian,
    norm: f64,
    term: Vec<Complex64>,
    next: Vec<Complex64>,
}

impl<'a> TaylorStepper<'a> {
    fn new(h: &'a Hamiltonian) -> Self {
        Self {
            h,
            norm: h.norm_inf(),
            term: vec![Complex64::default(); h.dim()],
            next: vec![Complex64::default(); h.dim()],
        }
    }
}

impl Stepper for TaylorStepper<'_> {
    fn advance(&mut self, c: &mut [Complex64], z0: f64, z1: f64) -> Result<(), PropagationError> {
        let span = z1 - z0;
        let subs = (self.norm * span).ceil().max(1.0) as usize;
        let dz = span / subs as f64;
        for _ in 0..subs {
            self.term.copy_from_slice(c);
            for k in 1..=60 {
                self.h.apply_into(&self.term, &mut self.next);
                let factor = MINUS_I * (dz / k as f64);
                for (t, n) in self.term.iter_mut().zip(&self.next) {
                    *t = factor * n;
                }
                let mut tn: f64 = 0.0;
                for (ci, t) in c.iter_mut().zip(&self.term) {
                    *ci += t;
                    tn = tn.max(t.norm());
                }
                let cn = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if tn <= 1e-18 * cn {
                    break;
                }
            }
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct DormandPrince<'a> {
    h: &'a Hamiltonian,
    step: f64,
    atol: f64,
    k: [Vec<Complex64>; 7],
    y: Vec<Complex64>,
    fsal_valid: bool,
}

impl<'a> DormandPrince<'a> {
    fn new(h: &'a Hamiltonian, initial_norm: f64) -> Self {
        let zero = vec![Complex64::default(); h.dim()];
        Self {
            h,
            step: 0.1 / h.norm_inf().max(1.0),
            atol: RK_RTOL * initial_norm,
            k: std::array::from_fn(|_| zero.clone()),
            y: zero,
            fsal_valid: false,
        }
    }

    fn rhs(h: &Hamiltonian, x: &[Complex64], out: &mut [Complex64]) {
        h.apply_into(x, out);
        out.iter_mut().for_each(|z| *z *= MINUS_I);
    }

    fn stage(&mut self, c: &[Complex64], dz: f64, coeffs: &[f64], into: usize) {
        for (i, &ci) in c.iter().enumerate() {
            let mut acc = ci;
            for (j, &a) in coeffs.iter().enumerate() {
                acc += self.k[j][i] * (a * dz);
            }
            self.y[i] = acc;
        }
        let (_, tail) = self.k.split_at_mut(into);
        Self::rhs(self.h, &self.y, &mut tail[0]);
    }
}

impl Stepper for DormandPrince<'_> {
    fn advance(&mut self, c: &mut [Complex64], z0: f64, z1: f64) -> Result<(), PropagationError> {
        let mut z = z0;
        while z < z1 {
            let dz = self.step.min(z1 - z);
            if dz < 1e-13 * z1.max(1.0) {
                return Err(PropagationError::StepUnderflow(z));
            }
            if !self.fsal_valid {
                let (k0, _) = self.k.split_at_mut(1);
                Self::rhs(self.h, c, &mut k0[0]);
                self.fsal_valid = true;
            }
            self.stage(c, dz, &[A21], 1);
            self.stage(c, dz, &[A31, A32], 2);
            self.stage(c, dz, &[A41, A42, A43], 3);
            self.stage(c, dz, &[A51, A52, A53, A54], 4);
            self.stage(c, dz, &[A61, A62, A63, A64, A65], 5);
            // fifth-order solution; its derivative is the last stage
            self.stage(c, dz, &[B1, 0.0, B3, B4, B5, B6], 6);
            let mut err2 = 0.0;
            for i in 0..c.len() {
                let e = self.k[0][i] * E1
                    + self.k[2][i] * E3
                    + self.k[3][i] * E4
                    + self.k[4][i] * E5
                    + self.k[5][i] * E6
                    + self.k[6][i] * E7;
                err2 += (e * dz).norm_sqr();
            }
            let scale = self.atol + RK_RTOL * norm2(c).max(norm2(&self.y));
            let err = err2.sqrt() / scale;
            if err <= 1.0 {
                z += dz;
                c.copy_from_slice(&self.y);
                let (k0, rest) = self.k.split_at_mut(1);
                std::mem::swap(&mut k0[0], &mut rest[5]);
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // keep the step proposal when only clipped by the output grid
            if dz == self.step || err > 1.0 || factor < 1.0 {
                self.step = dz * factor;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthKind {
    Bounded,
    Polynomial {
        degree: f64,
    },
    /// `P ~ exp(rate · z)`.
    Exponential {
        rate: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthClassification {
    #[serde(flatten)]
    pub kind: GrowthKind,
    pub fit_window: [f64; 2],
    pub fit_quality: f64,
}

/// Growth law of `P(z)` on `[window_frac · z_max, z_max]`.
///
/// `log P` is fitted against `z` and against `log z`. The exponential
/// candidate wins when its fit is at least as good, `R² > 0.995` and the
/// fitted rate times the window length exceeds 2. Otherwise a log-log slope
/// below 0.5 is bounded and anything else polynomial of that degree.
pub fn classify_growth(
    p: &[f64],
    z: &[f64],
    window_frac: f64,
) -> Result<GrowthClassification, PropagationError> {
    assert_eq!(p.len(), z.len());
    if !(0.0..1.0).contains(&window_frac) {
        return Err(PropagationError::BadWindow(window_frac));
    }
    let z_max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z_lo = window_frac * z_max;
    let picked: Vec<(f64, f64)> = z
        .iter()
        .zip(p)
        .filter(|(&zz, _)| zz >= z_lo && zz > 0.0)
        .map(|(&zz, &pp)| (zz, pp))
        .collect();
    if picked.len() < MIN_GROWTH_SAMPLES {
        return Err(PropagationError::TooFewSamples {
            need: MIN_GROWTH_SAMPLES,
            got: picked.len(),
        });
    }
    if let Some(&(zz, pp)) = picked.iter().find(|(_, pp)| pp.is_nan() || *pp <= 0.0) {
        return Err(PropagationError::NonPositivePower { z: zz, p: pp });
    }
    let zs: Vec<f64> = picked.iter().map(|x| x.0).collect();
    let log_z: Vec<f64> = zs.iter().map(|x| x.ln()).collect();
    let log_p: Vec<f64> = picked.iter().map(|x| x.1.ln()).collect();
    let window = [zs[0], *zs.last().unwrap()];
    let exp = fit_line(&zs, &log_p).expect("window has distinct z");
    let poly = fit_line(&log_z, &log_p).expect("window has distinct z");

    let exponential = exp.slope > 0.0
        && exp.r_squared > EXP_MIN_R2
        && exp.slope * (window[1] - window[0]) > EXP_MIN_EXPONENT
        && exp.r_squared >= poly.r_squared;
    let (kind, fit_quality) = if exponential {
        (GrowthKind::Exponential { rate: exp.slope }, exp.r_squared)
    } else if poly.slope < BOUNDED_SLOPE {
        (GrowthKind::Bounded, poly.r_squared)
    } else {
        (
            GrowthKind::Polynomial { degree: poly.slope },
            poly.r_squared,
        )
    };
    Ok(GrowthClassification {
        kind,
        fit_window: window,
        fit_quality,
    })
}

/// `|c_n(z)|²`, one row per sample.
pub fn intensity_map(trace: &PropagationTrace) -> Vec<Vec<f64>> {
    trace
        .states
        .iter()
        .map(|s| s.iter().map(|c| c.norm_sqr()).collect())
        .collect()
}

/// Long format `z, n, re_c, im_c, abs2`.
pub fn write_trace_csv<W: std::io::Write>(
    trace: &PropagationTrace,
    out: W,
) -> Result<(), csv::Error> {
    use crate::fmt_num as f;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z", "n", "re_c", "im_c", "abs2"])?;
    let half = trace.half_width as i64;
    for (z, state) in trace.z.iter().zip(&trace.states) {
        for (i, c) in state.iter().enumerate() {
            w.write_record([
                f(*z),
                (i as i64 - half).to_string(),
                f(c.re),
                f(c.im),
                f(c.norm_sqr()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `z, P, P_over_P0`.
pub fn write_power_csv<W: std::io::Write>(
    trace: &PropagationTrace,
    out: W,
) -> Result<(), csv::Error> {
    use crate::fmt_num as f;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z", "P", "P_over_P0"])?;
    let p0 = trace.power[0];
    for (z, p) in trace.z.iter().zip(&trace.power) {
        w.write_record([f(*z), f(*p), f(p / p0)])?;
    }
    w.flush()?;
    Ok(())
}

/// Unit excitation of site `n` on the window `-N..=N`.
pub fn site_excitation(half_width: usize, n: i64) -> Option<Vec<Complex64>> {
    let idx = n + half_width as i64;
    if idx < 0 || idx > 2 * half_width as i64 {
        return None;
    }
    let mut c = vec![Complex64::default(); 2 * half_width + 1];
    c[idx as usize] = Complex64::new(1.0, 0.0);
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> LatticeModel {
        LatticeModel::model_a(0.0, 0.0, n).unwrap()
    }

    #[test]
    fn input_validation() {
        let m = uniform(10);
        let e0 = site_excitation(10, 0).unwrap();
        let zero = vec![Complex64::default(); 21];
        assert!(matches!(
            propagate(&m, &zero, 1.0, 0.1, Method::AdaptiveRk),
            Err(PropagationError::BadInitialState)
        ));
        assert!(matches!(
            propagate(&m, &e0[..5], 1.0, 0.1, Method::AdaptiveRk),
            Err(PropagationError::Dimension { .. })
        ));
        assert!(matches!(
            propagate(&m, &e0, 0.0, 0.1, Method::AdaptiveRk),
            Err(PropagationError::BadRange { .. })
        ));
        assert!(site_excitation(10, 11).is_none());
    }

    #[test]
    fn sampling_grid_ends_at_z_max() {
        let m = uniform(10);
        let e0 = site_excitation(10, 0).unwrap();
        let t = propagate(&m, &e0, 1.05, 0.25, Method::MatrixExponential).unwrap();
        assert_eq!(t.z, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.05]);
    }

    #[test]
    fn hermitian_norm_conservation() {
        let m = uniform(120);
        let e0 = site_excitation(120, 0).unwrap();
        for method in [Method::MatrixExponential, Method::AdaptiveRk] {
            let t = propagate(&m, &e0, 50.0, 0.5, method).unwrap();
            for p in &t.power {
                assert!((p - 1.0).abs() < 1e-8, "{method:?}: {p}");
            }
        }
    }

    #[test]
    fn free_spreading_matches_bessel_amplitudes() {
        // uniform chain: c_n(z) = (-i)^n J_n(2z); J_0(2)=0.2238907791, J_1(2)=0.5767248078
        let m = uniform(40);
        let e0 = site_excitation(40, 0).unwrap();
        let t = propagate(&m, &e0, 1.0, 1.0, Method::MatrixExponential).unwrap();
        let c = t.last_state();
        assert!((c[40] - Complex64::new(0.2238907791, 0.0)).norm() < 1e-9);
        assert!((c[41] - Complex64::new(0.0, -0.5767248078)).norm() < 1e-9);
        assert!((c[39] - c[41]).norm() < 1e-14);
    }

    #[test]
    fn integrators_agree() {
        let m = LatticeModel::model_a(0.3, 0.5, 60).unwrap();
        let e0 = site_excitation(60, 0).unwrap();
        let a = propagate(&m, &e0, 20.0, 1.0, Method::MatrixExponential).unwrap();
        let b = propagate(&m, &e0, 20.0, 1.0, Method::AdaptiveRk).unwrap();
        let diff: Vec<Complex64> = a
            .last_state()
            .iter()
            .zip(b.last_state())
            .map(|(x, y)| x - y)
            .collect();
        assert!(norm2(&diff) < 1e-9 * norm2(a.last_state()));
    }

    #[test]
    fn overflow_stops_with_partial_trace() {
        // strongly broken phase: exponential blow-up
        let m = LatticeModel::model_a(0.0, 20.0, 10).unwrap();
        let e0 = site_excitation(10, -1).unwrap();
        match propagate(&m, &e0, 100.0, 0.5, Method::MatrixExponential) {
            Err(PropagationError::Overflow { z_reached, trace }) => {
                assert!(z_reached < 100.0);
                assert_eq!(*trace.z.last().unwrap(), z_reached);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn power_of_single_site() {
        let mut c = vec![Complex64::default(); 5];
        c[2] = Complex64::new(2.0, 0.0);
        assert_eq!(power(&c), 4.0);
    }

    fn grid(n: usize, z_max: f64) -> Vec<f64> {
        (0..=n).map(|k| z_max * k as f64 / n as f64).collect()
    }

    #[test]
    fn growth_laws_on_synthetic_curves() {
        let z = grid(300, 150.0);
        let lin: Vec<f64> = z.iter().map(|x| 1.0 + 0.5 * x).collect();
        let quad: Vec<f64> = z.iter().map(|x| 1.0 + x * x).collect();
        let exp: Vec<f64> = z.iter().map(|x| (0.1 * x).exp()).collect();
        let flat: Vec<f64> = z.iter().map(|x| 1.0 + 0.3 * (x * 0.7).sin()).collect();
        let kind = |p: &[f64]| classify_growth(p, &z, 0.5).unwrap().kind;
        match kind(&lin) {
            GrowthKind::Polynomial { degree } => assert!((degree - 1.0).abs() < 0.05),
            k => panic!("{k:?}"),
        }
        match kind(&quad) {
            GrowthKind::Polynomial { degree } => assert!((degree - 2.0).abs() < 0.01),
            k => panic!("{k:?}"),
        }
        match kind(&exp) {
            GrowthKind::Exponential { rate } => assert!((rate - 0.1).abs() < 1e-10),
            k => panic!("{k:?}"),
        }
        assert_eq!(kind(&flat), GrowthKind::Bounded);
    }

    #[test]
    fn growth_errors() {
        let z = grid(40, 10.0);
        let p = vec![1.0; 41];
        assert!(matches!(
            classify_growth(&p, &z, 0.5),
            Err(PropagationError::TooFewSamples { .. })
        ));
        let z = grid(200, 10.0);
        let mut p = vec![1.0; 201];
        p[150] = 0.0;
        assert!(matches!(
            classify_growth(&p, &z, 0.5),
            Err(PropagationError::NonPositivePower { .. })
        ));
        assert!(matches!(
            classify_growth(&p, &z, 1.0),
            Err(PropagationError::BadWindow(_))
        ));
    }

    #[test]
    fn uniform_spreading_is_symmetric() {
        let m = uniform(60);
        let e0 = site_excitation(60, 0).unwrap();
        let t = propagate(&m, &e0, 20.0, 2.0, Method::AdaptiveRk).unwrap();
        for row in intensity_map(&t) {
            for k in 0..60 {
                assert!((row[k] - row[120 - k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_layouts() {
        let m = uniform(4);
        let t = propagate(
            &m,
            &site_excitation(4, 0).unwrap(),
            1.0,
            0.5,
            Method::MatrixExponential,
        )
        .unwrap();
        let mut a = Vec::new();
        write_trace_csv(&t, &mut a).unwrap();
        let a = String::from_utf8(a).unwrap();
        assert!(a.starts_with("z,n,re_c,im_c,abs2\n0,-4,0,0,0\n"));
        assert_eq!(a.lines().count(), 1 + 3 * 9);
        let mut b = Vec::new();
        write_power_csv(&t, &mut b).unwrap();
        let b = String::from_utf8(b).unwrap();
        assert!(b.starts_with("z,P,P_over_P0\n0,1,1\n"));
    }
}
