//! Dense and tridiagonal complex linear algebra used by the spectral and
//! scattering code.
//!
//! The eigenvalue routine is a port of the LAPACK single-shift complex
//! Hessenberg QR algorithm (`zlahqr`, eigenvalues only) preceded by an
//! unblocked Householder reduction to Hessenberg form (`zgehd2`). The
//! tridiagonal solver follows `zgttrf`/`zgttrs` (LU with partial pivoting).

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error(
        "QR iteration failed to converge; eigenvalues with indices {indices:?} are unresolved"
    )]
    NoConvergence { indices: Vec<usize> },
    #[error("matrix is singular (zero pivot at row {row})")]
    Singular { row: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[inline]
pub(crate) fn cabs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    fn scale_row(&mut self, row: usize, cols: std::ops::RangeInclusive<usize>, s: Complex64) {
        for j in cols {
            self[(row, j)] *= s;
        }
    }

    fn scale_col(&mut self, col: usize, rows: std::ops::RangeInclusive<usize>, s: Complex64) {
        for i in rows {
            self[(i, col)] *= s;
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// Elementary reflector `H = I - tau [1; v] [1; v]^H` with `H^H [alpha; x] = [beta; 0]`.
/// On return `alpha` holds `beta` (real) and `x` holds `v`.
fn householder(alpha: &mut Complex64, x: &mut [Complex64]) -> Complex64 {
    let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if xnorm == 0.0 && alpha.im == 0.0 {
        return ZERO;
    }
    let mag = (alpha.norm_sqr() + xnorm * xnorm).sqrt();
    let beta = if alpha.re >= 0.0 { -mag } else { mag };
    let tau = Complex64::new((beta - alpha.re) / beta, -alpha.im / beta);
    let scale = ONE / (*alpha - beta);
    for z in x.iter_mut() {
        *z *= scale;
    }
    *alpha = Complex64::new(beta, 0.0);
    tau
}

/// Reduce `a` to upper Hessenberg form in place by unitary similarity.
pub fn reduce_to_hessenberg(a: &mut DenseMatrix) {
    let n = a.n;
    if n < 3 {
        return;
    }
    let mut v = vec![ZERO; n];
    for k in 0..n - 2 {
        let mut alpha = a[(k + 1, k)];
        let mut x: Vec<Complex64> = (k + 2..n).map(|i| a[(i, k)]).collect();
        let tau = householder(&mut alpha, &mut x);
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
        if tau == ZERO {
            continue;
        }
        v[k + 1] = ONE;
        v[k + 2..n].copy_from_slice(&x);
        // A := A H on columns k+1..n
        for r in 0..n {
            let s: Complex64 = (k + 1..n).map(|i| a[(r, i)] * v[i]).sum();
            let s = s * tau;
            for i in k + 1..n {
                a[(r, i)] -= s * v[i].conj();
            }
        }
        // A := H^H A on rows k+1..n
        let tc = tau.conj();
        for j in k + 1..n {
            let s: Complex64 = (k + 1..n).map(|i| v[i].conj() * a[(i, j)]).sum();
            let s = s * tc;
            for i in k + 1..n {
                a[(i, j)] -= s * v[i];
            }
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroyed on return).
pub fn hessenberg_eigenvalues(h: &mut DenseMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let n = h.n;
    let mut w = vec![ZERO; n];
    if n == 0 {
        return Ok(w);
    }
    if n == 1 {
        w[0] = h[(0, 0)];
        return Ok(w);
    }
    let (ilo, ihi) = (0usize, n - 1);
    for j in ilo..ihi.saturating_sub(2) {
        h[(j + 2, j)] = ZERO;
        h[(j + 3, j)] = ZERO;
    }
    if ihi >= ilo + 2 {
        h[(ihi, ihi - 2)] = ZERO;
    }
    // make the subdiagonal real
    for i in ilo + 1..=ihi {
        let hij = h[(i, i - 1)];
        if hij.im != 0.0 {
            let sc = hij / cabs1(hij);
            let sc = sc.conj() / sc.norm();
            h[(i, i - 1)] = Complex64::new(hij.norm(), 0.0);
            h.scale_row(i, i..=ihi, sc);
            h.scale_col(i, ilo..=ihi.min(i + 1), sc.conj());
        }
    }

    let nh = (ihi - ilo + 1) as f64;
    let ulp = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (nh / ulp);
    let itmax = 30 * n.max(10);
    const KEXSH: usize = 10;
    const DAT1: f64 = 0.75;

    let mut kdefl = 0usize;
    let mut i = ihi as isize;
    while i >= ilo as isize {
        let iu = i as usize;
        let mut l = ilo;
        let mut converged = false;
        for _its in 0..=itmax {
            // single small subdiagonal
            let mut k = iu;
            while k > l {
                if cabs1(h[(k, k - 1)]) <= smlnum {
                    break;
                }
                let mut tst = cabs1(h[(k - 1, k - 1)]) + cabs1(h[(k, k)]);
                if tst == 0.0 {
                    if k >= ilo + 2 {
                        tst += h[(k - 1, k - 2)].re.abs();
                    }
                    if k < ihi {
                        tst += h[(k + 1, k)].re.abs();
                    }
                }
                if h[(k, k - 1)].re.abs() <= ulp * tst {
                    let hkk1 = cabs1(h[(k, k - 1)]);
                    let hk1k = cabs1(h[(k - 1, k)]);
                    let ab = hkk1.max(hk1k);
                    let ba = hkk1.min(hk1k);
                    let d1 = cabs1(h[(k, k)]);
                    let d2 = cabs1(h[(k - 1, k - 1)] - h[(k, k)]);
                    let aa = d1.max(d2);
                    let bb = d1.min(d2);
                    let s = aa + ab;
                    if ba * (ab / s) <= smlnum.max(ulp * (bb * (aa / s))) {
                        break;
                    }
                }
                k -= 1;
            }
            l = k;
            if l > ilo {
                h[(l, l - 1)] = ZERO;
            }
            if l >= iu {
                converged = true;
                break;
            }
            kdefl += 1;
            let (i1, i2) = (l, iu);

            let t = if kdefl.is_multiple_of(2 * KEXSH) {
                let s = DAT1 * h[(iu, iu - 1)].re.abs();
                h[(iu, iu)] + s
            } else if kdefl.is_multiple_of(KEXSH) {
                let s = DAT1 * h[(l + 1, l)].re.abs();
                h[(l, l)] + s
            } else {
                // Wilkinson shift
                let mut t = h[(iu, iu)];
                let u = h[(iu - 1, iu)].sqrt() * h[(iu, iu - 1)].sqrt();
                let mut s = cabs1(u);
                if s != 0.0 {
                    let x = (h[(iu - 1, iu - 1)] - t) * 0.5;
                    let sx = cabs1(x);
                    s = s.max(cabs1(x));
                    let mut y = ((x / s) * (x / s) + (u / s) * (u / s)).sqrt() * s;
                    if sx > 0.0 {
                        let xs = x / sx;
                        if xs.re * y.re + xs.im * y.im < 0.0 {
                            y = -y;
                        }
                    }
                    t -= u * (u / (x + y));
                }
                t
            };

            // two consecutive small subdiagonals
            let mut m = iu - 1;
            let mut v = [ZERO; 2];
            loop {
                let h11 = h[(m, m)];
                let h22 = h[(m + 1, m + 1)];
                let mut h11s = h11 - t;
                let mut h21 = h[(m + 1, m)].re;
                let s = cabs1(h11s) + h21.abs();
                h11s /= s;
                h21 /= s;
                v[0] = h11s;
                v[1] = Complex64::new(h21, 0.0);
                if m == l {
                    break;
                }
                let h10 = h[(m, m - 1)].re;
                if h10.abs() * h21.abs() <= ulp * (cabs1(h11s) * (cabs1(h11) + cabs1(h22))) {
                    break;
                }
                m -= 1;
            }

            // single-shift QR sweep
            for k in m..iu {
                if k > m {
                    v[0] = h[(k, k - 1)];
                    v[1] = h[(k + 1, k - 1)];
                }
                let (head, tail) = v.split_at_mut(1);
                let t1 = householder(&mut head[0], tail);
                if k > m {
                    h[(k, k - 1)] = v[0];
                    h[(k + 1, k - 1)] = ZERO;
                }
                let v2 = v[1];
                let t2 = (t1 * v2).re;
                let t1c = t1.conj();
                for j in k..=i2 {
                    let sum = t1c * h[(k, j)] + h[(k + 1, j)] * t2;
                    h[(k, j)] -= sum;
                    h[(k + 1, j)] -= sum * v2;
                }
                let v2c = v2.conj();
                for j in i1..=(k + 2).min(iu) {
                    let sum = t1 * h[(j, k)] + h[(j, k + 1)] * t2;
                    h[(j, k)] -= sum;
                    h[(j, k + 1)] -= sum * v2c;
                }
                if k == m && m > l {
                    let temp = ONE - t1;
                    let temp = temp / temp.norm();
                    h[(m + 1, m)] *= temp.conj();
                    if m + 2 <= iu {
                        h[(m + 2, m + 1)] *= temp;
                    }
                    for j in m..=iu {
                        if j != m + 1 {
                            if i2 > j {
                                h.scale_row(j, j + 1..=i2, temp);
                            }
                            if j > i1 {
                                h.scale_col(j, i1..=j - 1, temp.conj());
                            }
                        }
                    }
                }
            }

            let temp = h[(iu, iu - 1)];
            if temp.im != 0.0 {
                let rtemp = temp.norm();
                h[(iu, iu - 1)] = Complex64::new(rtemp, 0.0);
                let temp = temp / rtemp;
                if i2 > iu {
                    h.scale_row(iu, iu + 1..=i2, temp.conj());
                }
                if iu > i1 {
                    h.scale_col(iu, i1..=iu - 1, temp);
                }
            }
        }
        if !converged {
            return Err(LinalgError::NoConvergence {
                indices: (ilo..=iu).collect(),
            });
        }
        w[iu] = h[(iu, iu)];
        kdefl = 0;
        i = l as isize - 1;
    }
    Ok(w)
}

/// All eigenvalues of a general complex matrix.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>, LinalgError> {
    let mut h = a.clone();
    reduce_to_hessenberg(&mut h);
    hessenberg_eigenvalues(&mut h)
}

/// LU factorization with partial pivoting of a tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    /// Factor the matrix with subdiagonal `dl`, diagonal `d` and
    /// superdiagonal `du`. Exact zero pivots are reported as singular.
    pub fn factor(
        dl: &[Complex64],
        d: &[Complex64],
        du: &[Complex64],
    ) -> Result<Self, LinalgError> {
        let lu = Self::factor_unchecked(dl, d, du)?;
        if let Some(row) = lu.d.iter().position(|p| *p == ZERO) {
            return Err(LinalgError::Singular { row });
        }
        Ok(lu)
    }

    fn factor_unchecked(
        dl: &[Complex64],
        d: &[Complex64],
        du: &[Complex64],
    ) -> Result<Self, LinalgError> {
        let n = d.len();
        let off = n.saturating_sub(1);
        if dl.len() != off {
            return Err(LinalgError::Dimension {
                expected: off,
                got: dl.len(),
            });
        }
        if du.len() != off {
            return Err(LinalgError::Dimension {
                expected: off,
                got: du.len(),
            });
        }
        let mut dl = dl.to_vec();
        let mut d = d.to_vec();
        let mut du = du.to_vec();
        let mut du2 = vec![ZERO; n.saturating_sub(2)];
        let mut swapped = vec![false; off];
        for i in 0..off {
            if cabs1(d[i]) >= cabs1(dl[i]) {
                if d[i] != ZERO {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        Ok(Self {
            dl,
            d,
            du,
            du2,
            swapped,
        })
    }

    /// Factor with exact zero pivots replaced by `floor` (inverse iteration).
    pub(crate) fn factor_perturbed(
        dl: &[Complex64],
        d: &[Complex64],
        du: &[Complex64],
        floor: f64,
    ) -> Result<Self, LinalgError> {
        let mut lu = Self::factor_unchecked(dl, d, du)?;
        for p in lu.d.iter_mut() {
            if cabs1(*p) < floor {
                *p = Complex64::new(floor, 0.0);
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Ratio of the largest to the smallest pivot magnitude; a cheap
    /// lower bound proxy for the condition number.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self
            .d
            .iter()
            .map(|p| p.norm())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.d.len();
        assert_eq!(b.len(), n);
        if n == 0 {
            return;
        }
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

pub(crate) fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
