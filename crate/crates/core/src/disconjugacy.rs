//! Generalized zeros, the quadratic form on compactly supported admissible
//! sequences, normality and the lower bound of the form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{l2, HamiltonianSystem, LatticeWindow, Trajectory};
use crate::linalg::{self, c, CMat, CVec, C64, ZERO};
use crate::propagation;

/// Eigenvalues of `B` below this fraction of `λ_max(B)` are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Range membership: least-squares residual at most this times `‖u‖`.
pub const RANGE_TOL: f64 = 1e-9;

/// `B†` of a Hermitian PSD matrix through its spectral decomposition.
pub fn moore_penrose(b: &CMat, tol: f64) -> Result<CMat> {
    let defect = linalg::hermitian_defect(b);
    if defect > tol * linalg::spectral_norm(b).max(1.0) {
        return Err(Error::NonHermitian(defect));
    }
    let n = b.nrows();
    let (vals, vecs) = linalg::hermitian_eigen(b);
    let top = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut out = linalg::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= PINV_CUTOFF * top || lam == 0.0 {
            continue;
        }
        let v = vecs.column(k);
        out += v * v.adjoint() * c(1.0 / lam);
    }
    Ok(linalg::hermitian_part(&out))
}

/// `u(t−1) ≠ 0`, `u(t) ∈ Ran(Ã(t−1)B(t−1))` and
/// `u*(t−1) B†(t−1) (I − A(t−1)) u(t) ≤ 0`; at the window start, `u(t) = 0`.
pub fn has_generalized_zero(sys: &HamiltonianSystem, y: &Trajectory, t: usize, tol: f64) -> Result<bool> {
    let start = sys.window().start;
    let u = y.u(t)?;
    if t == start {
        return Ok(u.norm() <= tol * y.max_norm().max(1.0));
    }
    let up = y.u(t - 1)?;
    let s = t - 1;
    sys.check_steps(s, t)?;
    zero_between(sys, s, &up, &u, tol)
}

fn zero_between(sys: &HamiltonianSystem, s: usize, up: &CVec, u: &CVec, tol: f64) -> Result<bool> {
    let scale = up.norm().max(u.norm());
    if scale == 0.0 || up.norm() <= tol * scale {
        return Ok(false);
    }
    let atb = sys.a_tilde(s)? * sys.b(s);
    if linalg::range_residual(&atb, u, 1e-12) > RANGE_TOL * u.norm() {
        return Ok(false);
    }
    let bdag = moore_penrose(sys.b(s), 1e-10)?;
    let m = &bdag * (linalg::identity(sys.n()) - sys.a(s));
    let form = up.dotc(&(&m * u));
    let bound = tol * up.norm() * linalg::spectral_norm(&m).max(1.0) * u.norm().max(tol * scale);
    Ok(form.re <= bound)
}

/// `F_λ` restricted to `D₀(window)` in coordinates of the free `v` values,
/// modulo the directions along which `u ≡ 0`.
///
/// For `window = [a, b]` the admissible sequences have `u(a) = u(b) = 0`,
/// `v(t)` free for `t ∈ [a, b − 1]`, `u(t+1) = Ã(t)(u(t) + B(t)v(t))`, and
/// the form is `Σ_{t=a}^{b−1} u*(t+1)C̃(t,λ)u(t+1) + v*(t)B(t)v(t)`.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    pub window: LatticeWindow,
    pub lambda: f64,
    pub n: usize,
    /// Orthonormal columns in `v`-space spanning the quotient.
    pub basis: CMat,
    /// The form in the coordinates of `basis`.
    pub matrix: CMat,
    /// `Σ u*(t+1)W(t)u(t+1)` in the same coordinates.
    pub w_gram: CMat,
    lift: Vec<CMat>,
}

impl QuadraticForm {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The admissible sequence with coordinates `x`; `v(b)` is set to 0.
    pub fn trajectory(&self, x: &CVec) -> Trajectory {
        let n = self.n;
        let a = self.window.start;
        let b = self.window.end;
        let v = &self.basis * x;
        let values = (a..=b)
            .map(|t| {
                let mut y = CVec::zeros(2 * n);
                y.rows_mut(0, n).copy_from(&(&self.lift[t - a] * &v));
                if t < b {
                    y.rows_mut(n, n).copy_from(&v.rows((t - a) * n, n));
                }
                y
            })
            .collect();
        Trajectory::new(a, values).expect("non-empty window")
    }

    pub fn min_eigen(&self) -> Option<(f64, CVec)> {
        if self.dim() == 0 {
            return None;
        }
        let (vals, vecs) = linalg::hermitian_eigen(&self.matrix);
        Some((vals[0], vecs.column(0).into_owned()))
    }
}

pub fn assemble_form(sys: &HamiltonianSystem, lambda: f64, window: LatticeWindow) -> Result<QuadraticForm> {
    let n = sys.n();
    let a = window.start;
    let b = window.end;
    sys.check_steps(a, b)?;
    let m = b - a;
    let big = n * m;
    let lam = c(lambda);
    let mut lift = vec![linalg::zeros(n, big)];
    let mut g = linalg::zeros(big, big);
    let mut gw = linalg::zeros(big, big);
    for t in a..b {
        let i = t - a;
        let mut next = lift[i].clone();
        next.view_mut((0, i * n), (n, n)).add_assign_block(sys.b(t));
        let next = sys.a_tilde(t)? * next;
        g += next.adjoint() * sys.c_tilde(t, lam) * &next;
        gw += next.adjoint() * sys.w(t) * &next;
        g.view_mut((i * n, i * n), (n, n)).add_assign_block(sys.b(t));
        lift.push(next);
    }
    let basis = if m <= 1 {
        linalg::zeros(big, 0)
    } else {
        let ns = linalg::null_space(&lift[m], 1e-10);
        let mut interior = linalg::zeros(n * (m - 1), big);
        for k in 1..m {
            interior.view_mut(((k - 1) * n, 0), (n, big)).copy_from(&lift[k]);
        }
        let k = &interior * &ns;
        &ns * linalg::row_space(&k, 1e-10)
    };
    let matrix = linalg::hermitian_part(&(basis.adjoint() * &g * &basis));
    let w_gram = linalg::hermitian_part(&(basis.adjoint() * &gw * &basis));
    Ok(QuadraticForm { window, lambda, n, basis, matrix, w_gram, lift })
}

trait AddBlock {
    fn add_assign_block(&mut self, m: &CMat);
}

impl AddBlock for nalgebra::DMatrixViewMut<'_, C64> {
    fn add_assign_block(&mut self, m: &CMat) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self[(i, j)] += m[(i, j)];
            }
        }
    }
}

/// `F_λ(y)` for `y ∈ D₀` on the trajectory's own domain `[s, e]`: checks
/// `L₂(y) = 0`, `u(s) = 0` and `u(e) = 0`.
pub fn quadratic_form_value(sys: &HamiltonianSystem, lambda: f64, y: &Trajectory, tol: f64) -> Result<f64> {
    let s = y.start();
    let e = y.end();
    let scale = y.max_norm().max(1.0);
    if y.u(s)?.norm() > tol * scale || y.u(e)?.norm() > tol * scale {
        return Err(Error::NotAdmissible("u must vanish at both ends".into()));
    }
    sys.check_steps(s, e)?;
    let lam = c(lambda);
    let mut total = ZERO;
    for t in s..e {
        let r = l2(sys, y, t)?;
        if r.norm() > tol * scale {
            return Err(Error::NotAdmissible(format!("first equation violated at t={t} ({:e})", r.norm())));
        }
        let u1 = y.u(t + 1)?;
        let v = y.v(t)?;
        total += u1.dotc(&(sys.c_tilde(t, lam) * &u1)) + v.dotc(&(sys.b(t) * &v));
    }
    if total.im.abs() > tol * scale * scale * (1.0 + total.re.abs()) {
        return Err(Error::NonHermitian(total.im.abs()));
    }
    Ok(total.re)
}

/// `Σ_{t=s}^{e−1} u*(t+1)W(t)u(t+1)` over the trajectory's own domain.
pub fn weighted_norm_sq(sys: &HamiltonianSystem, y: &Trajectory) -> Result<f64> {
    let mut total = 0.0;
    for t in y.start()..y.end() {
        let u1 = y.u(t + 1)?;
        total += u1.dotc(&(sys.w(t) * &u1)).re;
    }
    Ok(total)
}

/// Result of the solution-based scan.
#[derive(Clone, Debug)]
pub struct ZeroScan {
    /// No focal point of the principal solution and no second generalized
    /// zero in any sampled vector solution.
    pub disconjugate: bool,
    /// Steps `t` for which the principal solution fails the focal test
    /// between `t` and `t + 1`.
    pub focal_points: Vec<usize>,
    /// A sampled vector solution with `u(a) = 0` and a second zero, with the
    /// time of that zero.
    pub second_zero: Option<(Trajectory, usize)>,
}

/// Reid-type scan: the principal solution at `a` (`Y(a) = (0; I)`) must satisfy
/// `Ker U(t+1) ⊆ Ker U(t)` and `U(t)U†(t+1)Ã(t)B(t) ⪰ 0` on `[a, b − 1]`, and
/// no sampled solution with `u(a) = 0` may have a generalized zero in `(a, b]`.
pub fn generalized_zero_scan(
    sys: &HamiltonianSystem,
    lambda0: f64,
    window: LatticeWindow,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ZeroScan> {
    let n = sys.n();
    let a = window.start;
    let b = window.end;
    sys.check_steps(a, b)?;
    let lam = c(lambda0);
    let mut frame = linalg::zeros(2 * n, n);
    frame.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
    let mut focal_points = Vec::new();
    for t in a..b {
        let next = propagation::step_forward(sys, t, lam, &frame)?;
        let u = frame.rows(0, n).into_owned();
        let un = next.rows(0, n).into_owned();
        let ker = linalg::null_space(&un, 1e-10);
        let kernel_ok = ker.ncols() == 0 || (&u * &ker).norm() <= 1e-8 * u.norm().max(1e-300);
        let p = &u * linalg::pseudo_inverse(&un, 1e-10) * sys.a_tilde(t)? * sys.b(t);
        let psd = linalg::min_eigenvalue(&p) >= -tol * linalg::spectral_norm(&p).max(1e-300);
        if !(kernel_ok && psd) {
            focal_points.push(t);
        }
        frame = next.qr().q();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions: Vec<CVec> = (0..n)
        .map(|j| {
            let mut e = CVec::zeros(n);
            e[j] = linalg::ONE;
            e
        })
        .collect();
    for _ in 0..samples {
        directions.push(CVec::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
    }
    let mut second_zero = None;
    'dirs: for d in &directions {
        let mut y0 = CVec::zeros(2 * n);
        y0.rows_mut(n, n).copy_from(d);
        let full = propagation::solve_ivp(sys, lam, a, &linalg::col(&y0), propagation::Direction::Forward, Some(b))?;
        // Scale-free test on consecutive pairs.
        for t in a + 1..=b {
            let up = full.u(t - 1)?.column(0).into_owned();
            let u = full.u(t)?.column(0).into_owned();
            let s = up.norm().max(u.norm());
            if s == 0.0 {
                continue;
            }
            if zero_between(sys, t - 1, &(&up / c(s)), &(&u / c(s)), tol)? {
                second_zero = Some((full.column(0), t));
                break 'dirs;
            }
        }
    }
    Ok(ZeroScan { disconjugate: focal_points.is_empty() && second_zero.is_none(), focal_points, second_zero })
}

#[derive(Clone, Debug)]
pub struct DisconjugacyVerdict {
    pub disconjugate: bool,
    /// Smallest eigenvalue of the form on the quotient (`+∞` if it is trivial).
    pub min_eigenvalue: f64,
    pub form_dim: usize,
    /// An admissible sequence with `F_{λ0}(y) ≤ 0` and `u ≢ 0`, when not
    /// disconjugate.
    pub witness: Option<Trajectory>,
    pub witness_value: Option<f64>,
    pub scan: ZeroScan,
}

/// Positive definiteness of `F_{λ0}` on `D₀(window)`, cross-checked by
/// [`generalized_zero_scan`].
pub fn is_disconjugate(
    sys: &HamiltonianSystem,
    lambda0: f64,
    window: LatticeWindow,
    tol: f64,
) -> Result<DisconjugacyVerdict> {
    is_disconjugate_seeded(sys, lambda0, window, tol, 4, 0x5eed)
}

/// [`is_disconjugate`] with `samples` random directions in the scan.
pub fn is_disconjugate_seeded(
    sys: &HamiltonianSystem,
    lambda0: f64,
    window: LatticeWindow,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<DisconjugacyVerdict> {
    let steps = window.start..window.end;
    if !steps.is_empty() && steps.clone().all(|t| sys.b(t).norm() == 0.0) && window.len() > 1 {
        return Err(Error::DegenerateForm("B vanishes on the whole window; D0 has no v freedom".into()));
    }
    let form = assemble_form(sys, lambda0, window)?;
    let scan = generalized_zero_scan(sys, lambda0, window, samples, seed, tol)?;
    let Some((min_eig, x)) = form.min_eigen() else {
        return Ok(DisconjugacyVerdict {
            disconjugate: true,
            min_eigenvalue: f64::INFINITY,
            form_dim: 0,
            witness: None,
            witness_value: None,
            scan,
        });
    };
    let scale = linalg::spectral_norm(&form.matrix).max(1.0);
    let positive = min_eig > tol * scale;
    let (witness, witness_value) = if positive {
        (None, None)
    } else {
        let y = form.trajectory(&x);
        let value = quadratic_form_value(sys, lambda0, &y, 1e-8)?;
        (Some(y), Some(value))
    };
    Ok(DisconjugacyVerdict {
        disconjugate: positive,
        min_eigenvalue: min_eig,
        form_dim: form.dim(),
        witness,
        witness_value,
        scan,
    })
}

/// `dim Λ([s, e])` where `Λ` holds the `v` with `v(t+1) = (I − A*(t))v(t)` and
/// `B(t)v(t) = 0` for `t ∈ [s, e]`.
pub fn lambda_dimension(sys: &HamiltonianSystem, s: usize, e: usize) -> usize {
    let n = sys.n();
    let mut prop = linalg::identity(n);
    let mut rows = linalg::zeros(0, n);
    for t in s..=e {
        let block = sys.b(t) * &prop;
        let r = rows.nrows() + n;
        rows = rows.insert_rows(r - n, n, ZERO);
        rows.view_mut((r - n, 0), (n, n)).copy_from(&block);
        prop = (linalg::identity(n) - sys.a(t).adjoint()) * prop;
    }
    n - linalg::rank(&rows, 1e-10).min(n)
}

/// Normality on every subwindow of `min(n, len)` consecutive points. Since
/// `Λ` shrinks as the subwindow grows, this covers every longer subwindow.
pub fn check_identically_normal(sys: &HamiltonianSystem, window: LatticeWindow) -> bool {
    let len = sys.n().min(window.len());
    (window.start..=window.end + 1 - len).all(|s| lambda_dimension(sys, s, s + len - 1) == 0)
}

#[derive(Clone, Debug)]
pub struct LowerBound {
    pub gamma: f64,
    pub form_dim: usize,
}

/// `γ = min F_λ(y) / ‖y‖²_W` over `D₀(window)`.
pub fn lower_bound_estimate(sys: &HamiltonianSystem, lambda: f64, window: LatticeWindow) -> Result<LowerBound> {
    let form = assemble_form(sys, lambda, window)?;
    let dim = form.dim();
    if dim == 0 || linalg::max_eigenvalue(&form.w_gram) <= 0.0 {
        return Err(Error::DegenerateForm("W-Gram vanishes on D0".into()));
    }
    let (hv, hq) = linalg::hermitian_eigen(&form.matrix);
    let top = hv.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if hv[0] <= 1e-12 * top {
        // Not positive definite: γ ≤ 0 from the W-definite side when possible.
        let (wv, wq) = linalg::hermitian_eigen(&form.w_gram);
        if wv[0] <= 1e-12 * wv.last().unwrap() {
            return Err(Error::Precondition("form is not positive and the W-Gram is singular on D0".into()));
        }
        let wi = CMat::from_diagonal(&CVec::from_iterator(dim, wv.iter().map(|&x| c(1.0 / x.sqrt()))));
        let half = &wq * wi * wq.adjoint();
        let gamma = linalg::min_eigenvalue(&(&half * &form.matrix * &half));
        return Ok(LowerBound { gamma, form_dim: dim });
    }
    let hi = CMat::from_diagonal(&CVec::from_iterator(dim, hv.iter().map(|&x| c(1.0 / x.sqrt()))));
    let half = &hq * hi * hq.adjoint();
    let mu = linalg::max_eigenvalue(&(&half * &form.w_gram * &half));
    Ok(LowerBound { gamma: 1.0 / mu, form_dim: dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    fn free(end: usize) -> HamiltonianSystem {
        HamiltonianSystem::free(LatticeWindow::new(0, end).unwrap())
    }

    fn win(a: usize, b: usize) -> LatticeWindow {
        LatticeWindow::new(a, b).unwrap()
    }

    #[test]
    fn pinv_examples() {
        let b = CMat::from_row_slice(2, 2, &[c(2.0), ZERO, ZERO, ZERO]);
        let p = moore_penrose(&b, 1e-10).unwrap();
        assert!((p - CMat::from_row_slice(2, 2, &[c(0.5), ZERO, ZERO, ZERO])).norm() < 1e-15);
        let b = CMat::from_row_slice(2, 2, &[c(2.0), c(1.0), c(1.0), c(3.0)]);
        let p = moore_penrose(&b, 1e-10).unwrap();
        assert!((p - linalg::inverse(&b).unwrap()).norm() < 1e-10);
        let bad = CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(moore_penrose(&bad, 1e-10), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn generalized_zero_examples() {
        let sys = free(10);
        let y = Trajectory::scalar(0, 11, |t| t as f64, |_| 1.0);
        assert!(has_generalized_zero(&sys, &y, 0, 1e-10).unwrap());
        let y = Trajectory::scalar(0, 11, |t| t as f64 - 3.0, |_| 1.0);
        assert!(has_generalized_zero(&sys, &y, 3, 1e-10).unwrap());
        let y = Trajectory::scalar(0, 11, |_| 1.0, |_| 0.0);
        assert!((1..=11).all(|t| !has_generalized_zero(&sys, &y, t, 1e-10).unwrap()));
    }

    #[test]
    fn hat_function_values() {
        let sys = free(4);
        let y = Trajectory::scalar(0, 2, |t| if t == 1 { 1.0 } else { 0.0 }, |t| if t == 0 { 1.0 } else { -1.0 });
        assert!((quadratic_form_value(&sys, 0.0, &y, 1e-12).unwrap() - 2.0).abs() < 1e-15);
        assert!((quadratic_form_value(&sys, 1.0, &y, 1e-12).unwrap() - 1.0).abs() < 1e-15);
        let bad = Trajectory::scalar(0, 2, |_| 1.0, |_| 0.0);
        assert!(quadratic_form_value(&sys, 0.0, &bad, 1e-12).is_err());
    }

    #[test]
    fn free_form_on_two_steps() {
        // [0, 2]: u(1) = v(0), v(1) = −v(0); F = (2 − λ) v(0)².
        let sys = free(4);
        let f = assemble_form(&sys, 0.5, win(0, 2)).unwrap();
        assert_eq!(f.dim(), 1);
        // Basis vector (1, −1)/√2 in (v(0), v(1)).
        assert!((f.matrix[(0, 0)].re - 0.75).abs() < 1e-14);
    }

    #[test]
    fn free_system_disconjugate() {
        for len in [1, 2, 5, 30] {
            let v = is_disconjugate(&free(40), 0.0, win(0, len), 1e-10).unwrap();
            assert!(v.disconjugate, "len={len}");
            assert!(v.scan.disconjugate);
        }
        let v = is_disconjugate(&free(5), 0.0, LatticeWindow::closed(3, 3).unwrap(), 1e-10).unwrap();
        assert!(v.disconjugate && v.form_dim == 0);
    }

    #[test]
    fn beyond_band_not_disconjugate() {
        let sys = free(20);
        let v = is_disconjugate(&sys, 4.1, win(0, 20), 1e-10).unwrap();
        assert!(!v.disconjugate);
        assert!(v.witness_value.unwrap() <= 1e-9);
        assert!(!v.scan.disconjugate);
        let y = v.witness.unwrap();
        assert!(y.max_norm() > 0.1);
    }

    #[test]
    fn degenerate_b() {
        let sys = HamiltonianSystem::scalar(win(0, 5), 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(is_disconjugate(&sys, 0.0, win(0, 5), 1e-10), Err(Error::DegenerateForm(_))));
        assert!(!check_identically_normal(&sys, win(0, 5)));
        assert!(check_identically_normal(&free(5), win(0, 5)));
    }

    #[test]
    fn lower_bound_free() {
        let sys = free(60);
        let mut last = f64::INFINITY;
        for len in [2, 5, 10, 20, 40] {
            let g = lower_bound_estimate(&sys, -1.0, win(0, len)).unwrap().gamma;
            assert!(g > 0.0 && g <= last + 1e-12, "len={len} γ={g}");
            last = g;
        }
        // Window [0, 2]: F = (2 − λ) v², ‖u‖² = v².
        let g = lower_bound_estimate(&sys, -1.0, win(0, 2)).unwrap().gamma;
        assert!((g - 3.0).abs() < 1e-12);
    }
}
