//! Bound states in the continuum of non-Hermitian tight-binding lattices.
//!
//! The crate models a one-dimensional lattice
//! `i dc_n/dz = κ_n c_{n-1} + κ_{n+1} c_{n+1} + V_n c_n`
//! on a finite window `-N..=N` and provides spectra with state
//! classification, closed-form bound modes, scattering off the defect
//! region and time evolution.

pub mod cli;
pub mod fit;
pub mod lattice;
pub mod linalg;
pub mod modes;
pub mod propagation;
pub mod scattering;
pub mod spectrum;

pub use lattice::{check_pt_symmetry, Hamiltonian, LatticeError, LatticeModel, ModelLabel};
pub use num_complex::Complex64;

/// Format a float for CSV output: plain notation in the usual range,
/// exponent notation otherwise, shortest round-trip digits in both cases.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn number_formatting_round_trips() {
        for x in [0.0, 1.5, -2.25e-7, 3.0e20, 0.1, 1e-300, f64::MIN_POSITIVE] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_num(1e-20), "1e-20");
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(-0.0), "0");
    }
}
