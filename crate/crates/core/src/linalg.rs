//! Small dense complex linear-algebra helpers shared by every module.
//!
//! All "size" questions use the spectral norm. Rank decisions are made from
//! singular values relative to the largest one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// Canonical symplectic matrix `J = ((0, -I), (I, 0))` of size 2n.
pub fn symplectic_j(n: usize) -> CMat {
    let mut j = zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -ONE;
        j[(n + i, i)] = ONE;
    }
    j
}

/// Multiply `J` into a 2n-row matrix without forming `J`.
pub fn apply_j(y: &CMat) -> CMat {
    let n = y.nrows() / 2;
    let mut out = zeros(y.nrows(), y.ncols());
    for col in 0..y.ncols() {
        for i in 0..n {
            out[(i, col)] = -y[(n + i, col)];
            out[(n + i, col)] = y[(i, col)];
        }
    }
    out
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value (0 for empty or wide-deficient matrices).
pub fn min_singular(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// `sigma_min / sigma_max`, 0 for the zero matrix.
pub fn relative_min_singular(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let Some(&hi) = s.first() else { return 0 };
    if hi == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * hi).count()
}

/// `‖X − X*‖`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    spectral_norm(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Square root of a Hermitian PSD matrix; negative rounding eigenvalues are clamped.
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = CVec::from_iterator(vals.len(), vals.iter().map(|&x| c(x.max(0.0).sqrt())));
    &vecs * CMat::from_diagonal(&d) * vecs.adjoint()
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    if m.nrows() == 0 {
        return Some(zeros(0, 0));
    }
    m.clone().try_inverse()
}

/// Orthonormal basis of the null space of `m` (columns), via SVD.
pub fn null_space(m: &CMat, rel_tol: f64) -> CMat {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return identity(cols);
    }
    if cols == 0 {
        return zeros(0, 0);
    }
    // Pad to square so that the full right singular basis is available.
    let rows = m.nrows().max(cols);
    let mut padded = zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let hi = s.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] <= rel_tol * hi || hi == 0.0).collect();
    let mut out = zeros(cols, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        let row = vt.row(i).adjoint();
        out.set_column(k, &row);
    }
    out
}

/// Orthonormal basis (columns) of the row space of `m`, i.e. `Ran(m*)`.
pub fn row_space(m: &CMat, rel_tol: f64) -> CMat {
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 {
        return zeros(cols, 0);
    }
    let rows = m.nrows().max(cols);
    let mut padded = zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let s = &svd.singular_values;
    let hi = s.iter().cloned().fold(0.0_f64, f64::max);
    if hi == 0.0 {
        return zeros(cols, 0);
    }
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > rel_tol * hi).collect();
    let mut out = zeros(cols, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &vt.row(i).adjoint());
    }
    out
}

/// General Moore–Penrose inverse via SVD, singular values below
/// `rel_tol · σ_max` treated as zero.
pub fn pseudo_inverse(m: &CMat, rel_tol: f64) -> CMat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return zeros(m.ncols(), m.nrows());
    }
    let hi = spectral_norm(m);
    if hi == 0.0 {
        return zeros(m.ncols(), m.nrows());
    }
    m.clone().pseudo_inverse(rel_tol * hi).unwrap_or_else(|_| zeros(m.ncols(), m.nrows()))
}

/// Least-squares solution of `m x = b` (minimum norm), with the residual norm.
pub fn least_squares(m: &CMat, b: &CMat, rel_tol: f64) -> (CMat, f64) {
    if m.ncols() == 0 {
        let res = b.norm();
        return (zeros(0, b.ncols()), res);
    }
    let svd = m.clone().svd(true, true);
    let hi = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = (rel_tol * hi).max(f64::MIN_POSITIVE);
    let x = svd.solve(b, eps).unwrap_or_else(|_| zeros(m.ncols(), b.ncols()));
    let res = (m * &x - b).norm();
    (x, res)
}

/// Norm of the component of `b` outside the column range of `m`.
pub fn range_residual(m: &CMat, b: &CVec, rel_tol: f64) -> f64 {
    let bm = CMat::from_column_slice(b.len(), 1, b.as_slice());
    least_squares(m, &bm, rel_tol).1
}

pub fn to_vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn col(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

/// Kahan-compensated accumulator for matrix sums.
#[derive(Clone, Debug)]
pub struct CompensatedSum {
    sum: CMat,
    carry: CMat,
}

impl CompensatedSum {
    pub fn new(r: usize, c: usize) -> Self {
        Self { sum: zeros(r, c), carry: zeros(r, c) }
    }

    pub fn add(&mut self, x: &CMat) {
        let y = x - &self.carry;
        let t = &self.sum + &y;
        self.carry = (&t - &self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> &CMat {
        &self.sum
    }
}

/// Limit of a sequence `y(x)` as `x → 0` from samples at decreasing `x`.
#[derive(Clone, Debug)]
pub struct Extrapolated {
    pub value: CMat,
    /// Largest entrywise difference between the full-order estimate and the
    /// one that drops the oldest sample.
    pub uncertainty: f64,
    /// Entries that were still moving and got extrapolated.
    pub moved: usize,
}

fn neville_at_zero(xs: &[f64], ys: &[C64]) -> C64 {
    let mut p = ys.to_vec();
    let k = xs.len();
    for m in 1..k {
        for i in 0..k - m {
            let (xi, xj) = (xs[i], xs[i + m]);
            p[i] = (p[i + 1] * xi - p[i] * xj) / (xi - xj);
        }
    }
    p[0]
}

/// Entrywise polynomial extrapolation to `x = 0` (Neville). Entries whose last
/// two samples agree to a few ulps are taken as converged and left alone.
pub fn extrapolate_limit(xs: &[f64], ys: &[CMat]) -> Extrapolated {
    assert_eq!(xs.len(), ys.len());
    let last = ys.last().expect("at least one sample").clone();
    if ys.len() < 2 {
        return Extrapolated { value: last, uncertainty: f64::INFINITY, moved: 0 };
    }
    let prev = &ys[ys.len() - 2];
    let mut value = last.clone();
    let mut uncertainty: f64 = 0.0;
    let mut moved = 0;
    for idx in 0..last.len() {
        let change = (last[idx] - prev[idx]).norm();
        if change <= 1e3 * f64::EPSILON * last[idx].norm() || change == 0.0 {
            continue;
        }
        moved += 1;
        let samples: Vec<C64> = ys.iter().map(|m| m[idx]).collect();
        let full = neville_at_zero(xs, &samples);
        let reduced = if xs.len() > 2 { neville_at_zero(&xs[1..], &samples[1..]) } else { last[idx] };
        uncertainty = uncertainty.max((full - reduced).norm());
        value[idx] = full;
    }
    Extrapolated { value, uncertainty, moved }
}
