//! Complex tridiagonal matrices: products, pivoted LU solves and Sturm
//! bisection for the real symmetric case.

use num_complex::Complex64;

/// Square tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is entry `(i+1, i)` and `upper[i]` is entry `(i, i+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    pub upper: Vec<Complex64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<Complex64>, diag: Vec<Complex64>, upper: Vec<Complex64>) -> Self {
        assert!(!diag.is_empty());
        assert_eq!(lower.len() + 1, diag.len());
        assert_eq!(upper.len() + 1, diag.len());
        Self { lower, diag, upper }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn is_complex_symmetric(&self) -> bool {
        self.lower == self.upper
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `y = A^T x`.
    pub fn apply_transpose(&self, x: &[Complex64], y: &mut [Complex64]) {
        let t = Tridiagonal {
            lower: self.upper.clone(),
            diag: self.diag.clone(),
            upper: self.lower.clone(),
        };
        t.apply(x, y);
    }

    /// LU factorization of `A - shift I` with partial pivoting.
    pub fn factor_shifted(&self, shift: Complex64) -> TridiagonalLu {
        TridiagonalLu::factor(self, shift)
    }

    /// Entries as a dense row-major matrix. Intended for small test sizes.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
                m[i + 1][i] = self.lower[i];
            }
        }
        m
    }
}

/// Pivoted LU factors of a shifted tridiagonal matrix (LAPACK `gttrf`
/// layout: `U` has two super-diagonals after row interchanges).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    multipliers: Vec<Complex64>,
    u0: Vec<Complex64>,
    u1: Vec<Complex64>,
    u2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(a: &Tridiagonal, shift: Complex64) -> Self {
        let n = a.dim();
        let mut u0: Vec<Complex64> = a.diag.iter().map(|d| d - shift).collect();
        let mut u1 = a.upper.clone();
        let mut u2 = vec![Complex64::new(0.0, 0.0); n.saturating_sub(2)];
        let mut low = a.lower.clone();
        let mut multipliers = vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];

        for i in 0..n.saturating_sub(1) {
            if l1(u0[i]) >= l1(low[i]) {
                let m = if u0[i] == Complex64::new(0.0, 0.0) {
                    Complex64::new(0.0, 0.0)
                } else {
                    low[i] / u0[i]
                };
                multipliers[i] = m;
                u0[i + 1] -= m * u1[i];
                // u2[i] stays zero.
            } else {
                // Swap rows i and i+1.
                let m = u0[i] / low[i];
                multipliers[i] = m;
                swapped[i] = true;
                u0[i] = low[i];
                let tmp = u1[i];
                u1[i] = u0[i + 1];
                u0[i + 1] = tmp - m * u0[i + 1];
                if i + 2 < n {
                    u2[i] = u1[i + 1];
                    u1[i + 1] = -m * u1[i + 1];
                }
            }
            low[i] = Complex64::new(0.0, 0.0);
        }
        Self {
            multipliers,
            u0,
            u1,
            u2,
            swapped,
        }
    }

    /// Smallest pivot magnitude; zero means the shifted matrix is singular.
    pub fn min_pivot(&self) -> f64 {
        self.u0.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Solves in place. Exactly zero pivots are nudged to the unit roundoff
    /// so that inverse iteration at an exact eigenvalue still produces its
    /// eigenvector.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.u0.len();
        debug_assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
                let t = b[i];
                b[i + 1] -= self.multipliers[i] * t;
            } else {
                let t = b[i];
                b[i + 1] -= self.multipliers[i] * t;
            }
        }
        let tiny = f64::EPSILON
            * self
                .u0
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
        let pivot = |z: Complex64| {
            if z.norm() < tiny {
                Complex64::new(tiny, 0.0)
            } else {
                z
            }
        };
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= self.u1[i] * b[i + 1];
            }
            if i + 2 < n {
                acc -= self.u2[i] * b[i + 2];
            }
            b[i] = acc / pivot(self.u0[i]);
        }
    }
}

fn l1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Number of eigenvalues below `x` of the real symmetric tridiagonal matrix
/// with diagonal `d` and off-diagonal `e` (Sturm sequence count).
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let denom = if q == 0.0 { f64::EPSILON * (e[i - 1].abs() + 1.0) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` smallest eigenvalues of a real symmetric tridiagonal matrix by
/// bisection, in ascending order.
pub fn lowest_eigenvalues(d: &[f64], e: &[f64], k: usize) -> Vec<f64> {
    let n = d.len();
    assert_eq!(e.len() + 1, n);
    let k = k.min(n);
    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let span = (hi - lo).max(1.0);
    lo -= 1e-9 * span;
    hi += 1e-9 * span;
    (0..k)
        .map(|j| {
            // Smallest x with count(x) > j.
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(d, e, mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense_mul(m: &[Vec<Complex64>], x: &[Complex64]) -> Vec<Complex64> {
        m.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn free_laplacian_eigenvalues() {
        // 2 - 2 cos(k pi / (n + 1)) for the n x n second-difference matrix.
        let n = 50;
        let d = vec![2.0; n];
        let e = vec![-1.0; n - 1];
        let ev = lowest_eigenvalues(&d, &e, 4);
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{v} vs {exact}");
        }
    }

    #[test]
    fn solve_needs_pivoting() {
        // Zero leading diagonal forces a row interchange.
        let a = Tridiagonal::new(
            vec![c(1.0, 0.0), c(2.0, -1.0)],
            vec![c(0.0, 0.0), c(1.0, 1.0), c(3.0, 0.0)],
            vec![c(1.0, 0.0), c(0.5, 0.0)],
        );
        let x = vec![c(1.0, 2.0), c(-1.0, 0.5), c(0.25, -3.0)];
        let mut b = vec![c(0.0, 0.0); 3];
        a.apply(&x, &mut b);
        a.factor_shifted(c(0.0, 0.0)).solve(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn lu_solve_inverts_apply(
            vals in proptest::collection::vec(-3.0..3.0f64, 8 * 7),
            shift_re in -1.0..1.0f64, shift_im in -1.0..1.0f64,
        ) {
            let n = 7;
            let mk = |k: usize| c(vals[2 * k], vals[2 * k + 1]);
            let lower: Vec<_> = (0..n - 1).map(mk).collect();
            let diag: Vec<_> = (0..n).map(|i| mk(i + n) * 3.0).collect();
            let upper: Vec<_> = (0..n - 1).map(|i| mk(i + 2 * n)).collect();
            let a = Tridiagonal::new(lower, diag, upper);
            let x: Vec<_> = (0..n).map(|i| mk(i + 3 * n)).collect();
            let shift = c(shift_re, shift_im);
            let dense = a.to_dense();
            let mut b = dense_mul(&dense, &x);
            for (bi, xi) in b.iter_mut().zip(&x) {
                *bi -= shift * xi;
            }
            let lu = a.factor_shifted(shift);
            prop_assume!(lu.min_pivot() > 1e-6);
            lu.solve(&mut b);
            for (u, v) in b.iter().zip(&x) {
                prop_assert!((u - v).norm() < 1e-8 * (1.0 + v.norm()));
            }
        }
    }
}
