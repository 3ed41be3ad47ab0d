//! Lattice models and their tridiagonal Hamiltonians.
//!
//! A model lives on the sites `n = -N..=N`. The coupling `κ_n` joins sites
//! `n - 1` and `n` and is stored for `n = -N+1..=N`; the on-site potential
//! `V_n` is stored for every site. Energies are measured in units of the
//! asymptotic coupling, which is fixed to one.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("half width must be at least {min}, got {got}")]
    HalfWidth { min: usize, got: usize },
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("gain parameter g must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("{what} array has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} entry at site {site} is not a finite complex number")]
    NonFiniteEntry { what: &'static str, site: i64 },
    #[error("coupling at site {site} is zero")]
    ZeroCoupling { site: i64 },
    #[error("failed to read or write lattice file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed lattice file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Which family a model was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelLabel {
    /// Uniform chain with the complex potential pair `Δ ± i g` on sites `∓1`.
    ModelA {
        delta: f64,
        g: f64,
    },
    /// Zero potential, inhomogeneous couplings and imaginary `κ_0`, `κ_1`.
    ModelB {
        g: f64,
    },
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    half_width: usize,
    couplings: Vec<Complex64>,
    potentials: Vec<Complex64>,
    label: ModelLabel,
}

fn finite(name: &'static str, value: f64) -> Result<f64, LatticeError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LatticeError::NonFinite { name, value })
    }
}

impl LatticeModel {
    /// Uniform lattice with two site defects: `V_{-1} = Δ + i g`,
    /// `V_{+1} = Δ - i g`, `κ_n = 1`.
    pub fn model_a(delta: f64, g: f64, half_width: usize) -> Result<Self, LatticeError> {
        let delta = finite("delta", delta)?;
        let g = finite("g", g)?;
        if half_width < 2 {
            return Err(LatticeError::HalfWidth {
                min: 2,
                got: half_width,
            });
        }
        let n = half_width;
        let mut potentials = vec![ZERO; 2 * n + 1];
        potentials[n - 1] = Complex64::new(delta, g);
        potentials[n + 1] = Complex64::new(delta, -g);
        Ok(Self {
            half_width: n,
            couplings: vec![ONE; 2 * n],
            potentials,
            label: ModelLabel::ModelA { delta, g },
        })
    }

    /// Lattice with vanishing potential and couplings
    /// `κ_0 = -i g`, `κ_1 = i g`, `κ_n = sqrt((n+1)/(n-1))` for other even `n`
    /// and `κ_n = sqrt((n-2)/n)` for other odd `n`.
    pub fn model_b(g: f64, half_width: usize) -> Result<Self, LatticeError> {
        let g = finite("g", g)?;
        if g <= 0.0 {
            return Err(LatticeError::NonPositiveGain(g));
        }
        if half_width < 4 {
            return Err(LatticeError::HalfWidth {
                min: 4,
                got: half_width,
            });
        }
        let n = half_width as i64;
        let couplings = (-n + 1..=n).map(|site| model_b_coupling(site, g)).collect();
        Ok(Self {
            half_width,
            couplings,
            potentials: vec![ZERO; 2 * half_width + 1],
            label: ModelLabel::ModelB { g },
        })
    }

    /// Arbitrary model. `couplings` is ordered `n = -N+1..=N`, `potentials`
    /// `n = -N..=N`.
    pub fn custom(
        half_width: usize,
        couplings: Vec<Complex64>,
        potentials: Vec<Complex64>,
    ) -> Result<Self, LatticeError> {
        if half_width < 1 {
            return Err(LatticeError::HalfWidth {
                min: 1,
                got: half_width,
            });
        }
        if couplings.len() != 2 * half_width {
            return Err(LatticeError::Length {
                what: "couplings",
                expected: 2 * half_width,
                got: couplings.len(),
            });
        }
        if potentials.len() != 2 * half_width + 1 {
            return Err(LatticeError::Length {
                what: "potentials",
                expected: 2 * half_width + 1,
                got: potentials.len(),
            });
        }
        let n = half_width as i64;
        for (k, c) in couplings.iter().enumerate() {
            let site = k as i64 - n + 1;
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(LatticeError::NonFiniteEntry {
                    what: "coupling",
                    site,
                });
            }
            if *c == ZERO {
                return Err(LatticeError::ZeroCoupling { site });
            }
        }
        for (k, v) in potentials.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(LatticeError::NonFiniteEntry {
                    what: "potential",
                    site: k as i64 - n,
                });
            }
        }
        Ok(Self {
            half_width,
            couplings,
            potentials,
            label: ModelLabel::Custom,
        })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn num_sites(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn label(&self) -> ModelLabel {
        self.label
    }

    /// Couplings ordered `n = -N+1..=N`.
    pub fn couplings(&self) -> &[Complex64] {
        &self.couplings
    }

    /// Potentials ordered `n = -N..=N`.
    pub fn potentials(&self) -> &[Complex64] {
        &self.potentials
    }

    /// `κ_n`; sites outside the stored range belong to the uniform
    /// continuation and return one.
    pub fn coupling(&self, n: i64) -> Complex64 {
        let w = self.half_width as i64;
        if n <= -w || n > w {
            ONE
        } else {
            self.couplings[(n + w - 1) as usize]
        }
    }

    /// `V_n`, zero outside the window.
    pub fn potential(&self, n: i64) -> Complex64 {
        let w = self.half_width as i64;
        if n < -w || n > w {
            ZERO
        } else {
            self.potentials[(n + w) as usize]
        }
    }

    pub fn set_potential(&mut self, n: i64, v: Complex64) {
        let w = self.half_width as i64;
        assert!(n.abs() <= w, "site {n} outside the window");
        self.potentials[(n + w) as usize] = v;
        self.label = ModelLabel::Custom;
    }

    pub fn set_coupling(&mut self, n: i64, k: Complex64) {
        let w = self.half_width as i64;
        assert!(n > -w && n <= w, "coupling {n} outside the window");
        self.couplings[(n + w - 1) as usize] = k;
        self.label = ModelLabel::Custom;
    }

    /// Smallest `M >= 1` such that `|κ_n - 1| < tol` and `|V_n| < tol` for
    /// every stored `|n| >= M`. Returns the half width when the model does
    /// not become uniform inside the window.
    pub fn core_half_width(&self, tol: f64) -> usize {
        let w = self.half_width as i64;
        let uniform_from = |m: i64| {
            (m..=w).all(|n| {
                self.potential(n).norm() < tol
                    && self.potential(-n).norm() < tol
                    && (self.coupling(n) - ONE).norm() < tol
                    && (self.coupling(-n) - ONE).norm() < tol
            })
        };
        (1..=w)
            .find(|&m| uniform_from(m))
            .map_or(self.half_width, |m| m as usize)
    }

    pub fn hamiltonian(&self) -> Hamiltonian {
        Hamiltonian {
            half_width: self.half_width,
            sub: self.couplings.clone(),
            diag: self.potentials.clone(),
            sup: self.couplings.clone(),
        }
    }

    /// The same model with every coupling and potential replaced by its
    /// real part.
    pub fn hermitian_part(&self) -> Self {
        Self {
            half_width: self.half_width,
            couplings: self
                .couplings
                .iter()
                .map(|c| Complex64::new(c.re, 0.0))
                .collect(),
            potentials: self
                .potentials
                .iter()
                .map(|v| Complex64::new(v.re, 0.0))
                .collect(),
            label: ModelLabel::Custom,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LatticeError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LatticeError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, LatticeError> {
        let file = LatticeFile {
            half_width: self.half_width,
            couplings: self.couplings.iter().map(|c| [c.re, c.im]).collect(),
            potentials: self.potentials.iter().map(|v| [v.re, v.im]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LatticeError> {
        let file: LatticeFile = serde_json::from_str(text)?;
        let pairs = |v: Vec<[f64; 2]>| {
            v.into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect()
        };
        Self::custom(
            file.half_width,
            pairs(file.couplings),
            pairs(file.potentials),
        )
    }
}

fn model_b_coupling(n: i64, g: f64) -> Complex64 {
    match n {
        0 => Complex64::new(0.0, -g),
        1 => Complex64::new(0.0, g),
        _ => {
            let n = n as f64;
            let ratio = if n.rem_euclid(2.0) == 0.0 {
                (n + 1.0) / (n - 1.0)
            } else {
                (n - 2.0) / n
            };
            Complex64::new(ratio.sqrt(), 0.0)
        }
    }
}

/// On-disk form of a lattice: complex numbers as `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeFile {
    half_width: usize,
    couplings: Vec<[f64; 2]>,
    potentials: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PtReport {
    pub pass: bool,
    pub worst_violation: f64,
}

/// Checks `κ_{-n} = κ_{n+1}^*` and `V_{-n} = V_n^*` over the window.
pub fn check_pt_symmetry(model: &LatticeModel, tol: f64) -> PtReport {
    let w = model.half_width as i64;
    let couplings = (0..w).map(|n| (model.coupling(-n) - model.coupling(n + 1).conj()).norm());
    let potentials = (0..=w).map(|n| (model.potential(-n) - model.potential(n).conj()).norm());
    let worst_violation = couplings.chain(potentials).fold(0.0, f64::max);
    PtReport {
        pass: worst_violation <= tol,
        worst_violation,
    }
}

/// Tridiagonal matrix on sites `-N..=N`; row `i` is site `i - N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    half_width: usize,
    sub: Vec<Complex64>,
    diag: Vec<Complex64>,
    sup: Vec<Complex64>,
}

impl Hamiltonian {
    /// Panics when the band lengths are inconsistent with `half_width`.
    pub fn from_bands(
        half_width: usize,
        sub: Vec<Complex64>,
        diag: Vec<Complex64>,
        sup: Vec<Complex64>,
    ) -> Self {
        let n = 2 * half_width + 1;
        assert_eq!(diag.len(), n);
        assert_eq!(sub.len(), n - 1);
        assert_eq!(sup.len(), n - 1);
        Self {
            half_width,
            sub,
            diag,
            sup,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// `(i, j)` entry; row `i` corresponds to site `i - N`.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.sub[j]
        } else if j == i + 1 {
            self.sup[i]
        } else {
            ZERO
        }
    }

    /// Entry addressed by site labels.
    pub fn site_entry(&self, n: i64, m: i64) -> Complex64 {
        let w = self.half_width as i64;
        if n.abs() > w || m.abs() > w {
            return ZERO;
        }
        self.entry((n + w) as usize, (m + w) as usize)
    }

    pub fn row_of_site(&self, n: i64) -> usize {
        (n + self.half_width as i64) as usize
    }

    pub fn site_of_row(&self, i: usize) -> i64 {
        i as i64 - self.half_width as i64
    }

    pub fn sub(&self) -> &[Complex64] {
        &self.sub
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn sup(&self) -> &[Complex64] {
        &self.sup
    }

    pub fn trace(&self) -> Complex64 {
        self.diag.iter().sum()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let mut s = self.diag[i].norm();
                if i > 0 {
                    s += self.sub[i - 1].norm();
                }
                if i + 1 < self.dim() {
                    s += self.sup[i].norm();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.sub
            .iter()
            .chain(&self.diag)
            .chain(&self.sup)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let f = |v: &Vec<Complex64>| v.iter().map(|z| z * s).collect();
        Self {
            half_width: self.half_width,
            sub: f(&self.sub),
            diag: f(&self.diag),
            sup: f(&self.sup),
        }
    }

    pub fn to_dense(&self) -> crate::linalg::DenseMatrix {
        crate::linalg::DenseMatrix::from_fn(self.dim(), |i, j| self.entry(i, j))
    }
}
