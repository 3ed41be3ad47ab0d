//! Shared fixtures and closed-form oracles for the integration tests.
#![allow(dead_code)]

use ptbic::{Complex64, LatticeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random lattice obeying `κ_{-n} = κ_{n+1}^*`, `V_{-n} = V_n^*`.
pub fn random_pt_lattice(rng: &mut impl Rng, half_width: usize) -> LatticeModel {
    let n = half_width;
    // right half: κ_1..κ_N and V_0..V_N
    let right_k: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.4..0.4)))
        .collect();
    let mut right_v: Vec<Complex64> = (0..=n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)))
        .collect();
    right_v[0].im = 0.0;
    // couplings ordered n = -N+1..=N; κ_{-m} = conj(κ_{m+1}) for m = 0..N-1
    let mut couplings: Vec<Complex64> = (0..n).rev().map(|m| right_k[m].conj()).collect();
    couplings.extend(right_k.iter().copied());
    let mut potentials: Vec<Complex64> = (1..=n).rev().map(|m| right_v[m].conj()).collect();
    potentials.extend(right_v.iter().copied());
    LatticeModel::custom(n, couplings, potentials).expect("valid random lattice")
}

/// `count` lattices from a fixed seed with half widths in `20..=40`.
pub fn random_pt_lattices(count: usize, seed: u64) -> Vec<LatticeModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(20..=40);
            random_pt_lattice(&mut rng, n)
        })
        .collect()
}

/// Real-axis zero of `Δ + i sin q - s cos q e^{2iq}` with `s = Δ² + g²`.
///
/// Imaginary part: `sin q (1 - 2 s cos² q) = 0`, so `cos² q = 1/(2s)`.
/// Real part: `Δ = cos q (1 - s)`. Eliminating `q` gives
/// `s² - 2(1 + Δ²) s + 1 = 0`; the root below one keeps `cos q > 0`.
/// A real `q` needs `2s >= 1`, which holds for `|Δ| <= 1/2`.
/// Returns `(g_th, q_0)`.
pub fn singularity_oracle(delta: f64) -> Option<(f64, f64)> {
    let b = 1.0 + delta * delta;
    let s = b - (b * b - 1.0).sqrt();
    if 2.0 * s < 1.0 {
        return None;
    }
    let g = (s - delta * delta).sqrt();
    let q0 = (1.0 / (2.0 * s).sqrt()).acos();
    Some((g, q0))
}

/// Bound-state energies of model A from the transmission poles.
///
/// With `z = e^{iq}` the denominator is proportional to
/// `s z⁴ + (s - 1) z² - 2Δ z + 1`; roots with `|z| < 1` (`Im q > 0`) are
/// normalizable and have `E = z + 1/z`. Roots are found by simultaneous
/// Weierstrass iteration followed by Newton polishing.
pub fn pole_energies(delta: f64, g: f64) -> Vec<Complex64> {
    let s = delta * delta + g * g;
    assert!(s > 0.0);
    // monic coefficients, highest first
    let c = [1.0, 0.0, (s - 1.0) / s, -2.0 * delta / s, 1.0 / s];
    let p = |z: Complex64| {
        c.iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
    };
    let dp = |z: Complex64| {
        Complex64::new(4.0, 0.0) * z * z * z + Complex64::new(2.0 * c[2], 0.0) * z + c[3]
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..4).map(|k| seed.powi(k)).collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..4 {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..4 {
                if j != i {
                    den *= roots[i] - roots[j];
                }
            }
            let step = p(roots[i]) / den;
            roots[i] -= step;
        }
        let change = roots
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if change < 1e-16 {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..5 {
            let d = dp(*r);
            if d.norm() > 0.0 {
                *r -= p(*r) / d;
            }
        }
    }
    let mut energies: Vec<Complex64> = roots
        .into_iter()
        .filter(|z| z.norm() < 1.0 - 1e-9)
        .map(|z| z + z.inv())
        .collect();
    energies.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    energies
}

/// `|t|²` from the closed-form transmission, evaluated independently of the
/// library.
pub fn closed_form_transmittance(delta: f64, g: f64, q: f64) -> f64 {
    let s = delta * delta + g * g;
    let e2 = Complex64::from_polar(1.0, 2.0 * q);
    let t = Complex64::new(0.0, q.sin()) * e2 / (Complex64::new(delta, q.sin()) - s * q.cos() * e2);
    t.norm_sqr()
}

/// Location of the transmittance maximum of model A on `(0, π)`: a dense
/// scan refined by golden-section search.
pub fn closed_form_peak(delta: f64, g: f64) -> f64 {
    let n = 20000;
    let f = |q: f64| closed_form_transmittance(delta, g, q);
    let grid: Vec<f64> = (1..n)
        .map(|k| std::f64::consts::PI * k as f64 / n as f64)
        .collect();
    let mut best = grid[0];
    for &q in &grid {
        if f(q) > f(best) {
            best = q;
        }
    }
    let h = std::f64::consts::PI / n as f64;
    let (mut a, mut b) = (best - h, best + h);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) > f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    0.5 * (a + b)
}
