//! One-step transfer matrices, initial-value and two-point boundary-value
//! solving.
//!
//! Because `I − A(t)` is invertible the system is equivalent to
//!
//! ```text
//! u(t+1) = Ã u(t) + Ã B v(t)
//! v(t+1) = C̃ Ã u(t) + D v(t),   Ã = (I − A)⁻¹, C̃ = C − λW, D = C̃ÃB + I − A*
//! ```
//!
//! The backward step only needs `(I − A*)⁻¹ = Ã*`, so it exists for every λ.

use crate::error::{Error, Result};
use crate::lattice::{ConjoinedBasis, HamiltonianSystem, LatticeWindow};
use crate::linalg::{self, CMat, C64};

#[derive(Clone, Debug)]
pub struct TransferMatrix {
    pub t: usize,
    pub lambda: C64,
    pub m: CMat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// The `2n × 2n` map `y(t) ↦ y(t+1)`.
pub fn transfer(sys: &HamiltonianSystem, t: usize, lambda: C64) -> Result<TransferMatrix> {
    sys.check_steps(t, t + 1)?;
    let n = sys.n();
    let at = sys.a_tilde(t)?;
    let ct = sys.c_tilde(t, lambda);
    let atb = at * sys.b(t);
    let d = &ct * &atb + linalg::identity(n) - sys.a(t).adjoint();
    let mut m = linalg::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(at);
    m.view_mut((0, n), (n, n)).copy_from(&atb);
    m.view_mut((n, 0), (n, n)).copy_from(&(&ct * at));
    m.view_mut((n, n), (n, n)).copy_from(&d);
    Ok(TransferMatrix { t, lambda, m })
}

/// `‖M* J M − J‖`.
pub fn check_symplectic(m: &CMat) -> f64 {
    let n = m.nrows() / 2;
    let j = linalg::symplectic_j(n);
    // The defect is skew-Hermitian, so its norm is the spectral radius of `iE`.
    let ie = (m.adjoint() * linalg::apply_j(m) - j) * C64::new(0.0, 1.0);
    linalg::hermitian_part(&ie).symmetric_eigenvalues().iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Forward step of a `2n × k` block without forming the transfer matrix.
pub fn step_forward(sys: &HamiltonianSystem, t: usize, lambda: C64, y: &CMat) -> Result<CMat> {
    let n = sys.n();
    let u = y.rows(0, n);
    let v = y.rows(n, n);
    let u1 = sys.a_tilde(t)? * (u + sys.b(t) * v);
    let v1 = sys.c_tilde(t, lambda) * &u1 + v - sys.a(t).adjoint() * v;
    let mut out = linalg::zeros(2 * n, y.ncols());
    out.rows_mut(0, n).copy_from(&u1);
    out.rows_mut(n, n).copy_from(&v1);
    Ok(out)
}

/// Backward step `y(t+1) ↦ y(t)`.
pub fn step_backward(sys: &HamiltonianSystem, t: usize, lambda: C64, y: &CMat) -> Result<CMat> {
    let n = sys.n();
    let u1 = y.rows(0, n);
    let v1 = y.rows(n, n);
    let at_star = sys.a_tilde(t)?.adjoint();
    let v0 = at_star * (v1 - sys.c_tilde(t, lambda) * u1);
    let u0 = u1 - sys.a(t) * u1 - sys.b(t) * &v0;
    let mut out = linalg::zeros(2 * n, y.ncols());
    out.rows_mut(0, n).copy_from(&u0);
    out.rows_mut(n, n).copy_from(&v0);
    Ok(out)
}

/// Solve the initial-value problem `Y(t0) = y0`.
///
/// Forward runs to `until` (default `end + 1`); backward runs down to `until`
/// (default `start`). The returned basis is indexed by absolute time.
pub fn solve_ivp(
    sys: &HamiltonianSystem,
    lambda: C64,
    t0: usize,
    y0: &CMat,
    direction: Direction,
    until: Option<usize>,
) -> Result<ConjoinedBasis> {
    let win = sys.window();
    if y0.nrows() != 2 * sys.n() {
        return Err(Error::ShapeMismatch(format!("initial data has {} rows, expected {}", y0.nrows(), 2 * sys.n())));
    }
    if t0 < win.start || t0 > win.end + 1 {
        return Err(Error::OutOfDomain { t: t0, start: win.start, end: win.end + 1 });
    }
    match direction {
        Direction::Forward => {
            let stop = until.unwrap_or(win.end + 1);
            if stop < t0 || stop > win.end + 1 {
                return Err(Error::OutOfDomain { t: stop, start: t0, end: win.end + 1 });
            }
            let mut values = Vec::with_capacity(stop - t0 + 1);
            values.push(y0.clone());
            for t in t0..stop {
                let next = step_forward(sys, t, lambda, values.last().unwrap())?;
                values.push(next);
            }
            ConjoinedBasis::new(t0, values)
        }
        Direction::Backward => {
            let stop = until.unwrap_or(win.start);
            if stop > t0 || stop < win.start {
                return Err(Error::OutOfDomain { t: stop, start: win.start, end: t0 });
            }
            let mut values = Vec::with_capacity(t0 - stop + 1);
            values.push(y0.clone());
            for t in (stop..t0).rev() {
                let next = step_backward(sys, t, lambda, values.last().unwrap())?;
                values.push(next);
            }
            values.reverse();
            ConjoinedBasis::new(stop, values)
        }
    }
}

/// Orthonormalized sweep of a `2n × k` solution block.
///
/// Stores `Ẑ(t)` with orthonormal columns and the triangular links `R(t)`
/// such that the true solution is `Y(t) = Ẑ(t) K(t)` with an invertible
/// `K(t)`. Right-multiplication by `K` preserves the span, so the sweep can
/// run over horizons where the raw solution would overflow.
#[derive(Clone, Debug)]
pub struct OrthoSweep {
    pub direction: Direction,
    /// Earliest time covered.
    pub lo: usize,
    /// `Ẑ(t)` for `t ∈ [lo, hi]`.
    pub frames: Vec<CMat>,
    /// `R(t)` for `t ∈ [lo, hi − 1]`: backward `step(Ẑ(t+1)) = Ẑ(t) R(t)`,
    /// forward `step(Ẑ(t)) = Ẑ(t+1) R(t)`.
    pub links: Vec<CMat>,
}

fn qr_split(m: CMat) -> (CMat, CMat) {
    let qr = m.qr();
    (qr.q(), qr.r())
}

impl OrthoSweep {
    pub fn hi(&self) -> usize {
        self.lo + self.frames.len() - 1
    }

    pub fn frame(&self, t: usize) -> &CMat {
        &self.frames[t - self.lo]
    }

    pub fn backward(sys: &HamiltonianSystem, lambda: C64, from: usize, to: usize, y: &CMat) -> Result<Self> {
        if to > from {
            return Err(Error::Invalid(format!("backward sweep needs to <= from ({to} > {from})")));
        }
        sys.check_steps(to, from)?;
        let (mut q, _) = qr_split(y.clone());
        let mut frames = vec![q.clone()];
        let mut links = Vec::with_capacity(from - to);
        for t in (to..from).rev() {
            let (nq, r) = qr_split(step_backward(sys, t, lambda, &q)?);
            q = nq;
            frames.push(q.clone());
            links.push(r);
        }
        frames.reverse();
        links.reverse();
        Ok(Self { direction: Direction::Backward, lo: to, frames, links })
    }

    pub fn forward(sys: &HamiltonianSystem, lambda: C64, from: usize, to: usize, y: &CMat) -> Result<Self> {
        if to < from {
            return Err(Error::Invalid(format!("forward sweep needs to >= from ({to} < {from})")));
        }
        sys.check_steps(from, to)?;
        let (mut q, _) = qr_split(y.clone());
        let mut frames = vec![q.clone()];
        let mut links = Vec::with_capacity(to - from);
        for t in from..to {
            let (nq, r) = qr_split(step_forward(sys, t, lambda, &q)?);
            q = nq;
            frames.push(q.clone());
            links.push(r);
        }
        Ok(Self { direction: Direction::Forward, lo: from, frames, links })
    }

    /// The solution `Y` in the sweep's span with `Y(anchor) = Ẑ(anchor) g`,
    /// materialized over the whole sweep.
    pub fn anchored(&self, anchor: usize, g: &CMat) -> Result<ConjoinedBasis> {
        if anchor < self.lo || anchor > self.hi() {
            return Err(Error::OutOfDomain { t: anchor, start: self.lo, end: self.hi() });
        }
        let len = self.frames.len();
        let mut coef = vec![linalg::zeros(0, 0); len];
        let a = anchor - self.lo;
        coef[a] = g.clone();
        // Going to later times.
        for i in a..len - 1 {
            let r = &self.links[i];
            coef[i + 1] = match self.direction {
                // Ẑ(t) R(t) K(t+1) = Ẑ(t) K(t)  ⇒  K(t+1) = R(t)⁻¹ K(t)
                Direction::Backward => solve_upper(r, &coef[i])?,
                // Ẑ(t+1) R(t) K(t) = Ẑ(t+1) K(t+1)
                Direction::Forward => r * &coef[i],
            };
        }
        // Going to earlier times.
        for i in (0..a).rev() {
            let r = &self.links[i];
            coef[i] = match self.direction {
                Direction::Backward => r * &coef[i + 1],
                Direction::Forward => solve_upper(r, &coef[i + 1])?,
            };
        }
        let values = self.frames.iter().zip(coef.iter()).map(|(z, k)| z * k).collect();
        ConjoinedBasis::new(self.lo, values)
    }
}

fn solve_upper(r: &CMat, b: &CMat) -> Result<CMat> {
    r.solve_upper_triangular(b)
        .ok_or_else(|| Error::RankDeficient("solution block lost rank during sweep".into()))
}

/// Solution `Y(·, s)` with `U(t1, s) = I`, `U(s, s) = 0`.
///
/// Shooting is done from `s` backward with `Y(s) = (0; I)` and the result is
/// normalized by `U(t1)`; the boundary rows therefore hold exactly at `s` and
/// to rounding at `t1`. Returned on `[window.start, s]`.
pub fn solve_two_point_bvp(
    sys: &HamiltonianSystem,
    lambda: C64,
    t1: usize,
    s: usize,
    tol: f64,
) -> Result<ConjoinedBasis> {
    solve_two_point_bvp_from(sys, lambda, t1, s, sys.window().start, tol)
}

/// As [`solve_two_point_bvp`], materialized on `[lo, s]` with `lo ≤ t1`.
pub fn solve_two_point_bvp_from(
    sys: &HamiltonianSystem,
    lambda: C64,
    t1: usize,
    s: usize,
    lo: usize,
    tol: f64,
) -> Result<ConjoinedBasis> {
    let n = sys.n();
    if t1 >= s {
        return Err(Error::Invalid(format!("need t1 < s, got t1={t1}, s={s}")));
    }
    if lo > t1 {
        return Err(Error::Invalid(format!("materialization start {lo} after t1={t1}")));
    }
    let mut init = linalg::zeros(2 * n, n);
    init.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
    let sweep = OrthoSweep::backward(sys, lambda, s, lo, &init)?;
    let z = sweep.frame(t1);
    let u_hat = z.rows(0, n).into_owned();
    let sigma = linalg::min_singular(&u_hat);
    if sigma <= tol {
        return Err(Error::SingularShooting { t1, s, sigma });
    }
    let g = linalg::inverse(&u_hat).ok_or(Error::SingularShooting { t1, s, sigma })?;
    let mut basis = sweep.anchored(t1, &g)?;
    // Boundary rows are imposed, not approximated.
    let mut values = basis.values().to_vec();
    values[t1 - lo].view_mut((0, 0), (n, n)).copy_from(&linalg::identity(n));
    values[s - lo].view_mut((0, 0), (n, n)).fill(linalg::ZERO);
    basis = ConjoinedBasis::new(lo, values)?;
    Ok(basis)
}

/// True iff for all `t1 < t2` in `window` only the trivial solution has
/// `u(t1) = u(t2) = 0`, i.e. `U(t2)` of the solution `Y(t1) = (0; I)` is
/// invertible. Tested on orthonormalized frames, so `tol` is an absolute
/// threshold on `σ_min(Û(t2)) ≤ 1`.
pub fn unique_two_point_property(sys: &HamiltonianSystem, lambda0: f64, window: LatticeWindow, tol: f64) -> Result<bool> {
    let n = sys.n();
    let mut init = linalg::zeros(2 * n, n);
    init.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
    for t1 in window.start..window.end {
        let sweep = OrthoSweep::forward(sys, linalg::c(lambda0), t1, window.end, &init)?;
        for t2 in t1 + 1..=window.end {
            let u_hat = sweep.frame(t2).rows(0, n).into_owned();
            if linalg::min_singular(&u_hat) <= tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

const CORRECT_BELOW: f64 = 1e4;

/// Symplectic bookkeeping of a long propagation.
#[derive(Clone, Debug)]
pub struct SymplecticDrift {
    pub steps: usize,
    /// `Σ_t ‖M(t)* J M(t) − J‖`.
    pub per_step_sum: f64,
    pub per_step_max: f64,
    /// `‖Φ* J Φ − J‖ / max(1, ‖Φ‖²)` for the accumulated fundamental matrix.
    pub fundamental_relative: f64,
    /// `log10` of the scalar factor removed from `Φ` to avoid overflow.
    pub log10_scale: f64,
}

/// Accumulate `Φ(to) = M(to−1)···M(from)` and track symplectic residuals.
///
/// When `correct` is set and `‖Φ‖ ≤ 1e4` (so that `E` is not dominated by
/// rounding), `Φ` is pulled back toward the symplectic group after each step
/// by `Φ ← Φ(I + ½ J E)`, `E = Φ*JΦ − J`, which removes the first-order
/// defect.
pub fn accumulated_symplectic_residual(
    sys: &HamiltonianSystem,
    lambda: f64,
    from: usize,
    to: usize,
    correct: bool,
) -> Result<SymplecticDrift> {
    let n = sys.n();
    let j = linalg::symplectic_j(n);
    let lam = linalg::c(lambda);
    let mut phi = linalg::identity(2 * n);
    let mut log10_scale = 0.0;
    let mut per_step_sum = 0.0;
    let mut per_step_max: f64 = 0.0;
    for t in from..to {
        let m = transfer(sys, t, lam)?;
        let r = check_symplectic(&m.m);
        per_step_sum += r;
        per_step_max = per_step_max.max(r);
        phi = &m.m * phi;
        let norm = phi.norm();
        if norm > 1e100 {
            phi /= linalg::c(norm);
            log10_scale += norm.log10();
        } else if correct && log10_scale == 0.0 && norm <= CORRECT_BELOW {
            let e = phi.adjoint() * linalg::apply_j(&phi) - &j;
            phi = &phi + &phi * linalg::apply_j(&e) * linalg::c(0.5);
        }
    }
    let pn = linalg::spectral_norm(&phi);
    let fundamental_relative = if log10_scale == 0.0 {
        let defect = phi.adjoint() * linalg::apply_j(&phi) - &j;
        linalg::spectral_norm(&defect) / (pn * pn).max(1.0)
    } else {
        // Φ = σ Φ̂ with σ = 10^log10_scale; J/σ² underflows harmlessly.
        let scale2 = 10f64.powf(-2.0 * log10_scale);
        let defect = phi.adjoint() * linalg::apply_j(&phi) - &j * linalg::c(scale2);
        linalg::spectral_norm(&defect) / (pn * pn)
    };
    Ok(SymplecticDrift { steps: to - from, per_step_sum, per_step_max, fundamental_relative, log10_scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{operator_residuals, LatticeWindow, Trajectory};
    use crate::linalg::{c, C64, ONE, ZERO};

    fn free(end: usize) -> HamiltonianSystem {
        HamiltonianSystem::free(LatticeWindow::new(0, end).unwrap())
    }

    #[test]
    fn free_transfer_examples() {
        let sys = free(4);
        let m = transfer(&sys, 0, ZERO).unwrap().m;
        assert_eq!(m, CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]));
        let m = transfer(&sys, 0, c(-1.0)).unwrap().m;
        assert_eq!(m, CMat::from_row_slice(2, 2, &[ONE, ONE, ONE, c(2.0)]));
        assert!(check_symplectic(&m) < 1e-15);
    }

    #[test]
    fn symplectic_identity_and_j() {
        assert_eq!(check_symplectic(&linalg::identity(4)), 0.0);
        assert!(check_symplectic(&linalg::symplectic_j(2)) < 1e-15);
        let m = transfer(&free(2), 0, C64::new(0.0, 1.0)).unwrap().m;
        assert!(check_symplectic(&m) > 0.5);
    }

    #[test]
    fn ivp_free_examples() {
        let sys = free(10);
        let y = solve_ivp(&sys, ZERO, 0, &CMat::from_column_slice(2, 1, &[ZERO, ONE]), Direction::Forward, None)
            .unwrap();
        for t in 0..=11 {
            assert_eq!(y.u(t).unwrap()[(0, 0)], c(t as f64));
            assert_eq!(y.v(t).unwrap()[(0, 0)], ONE);
        }
        let y = solve_ivp(&sys, ZERO, 0, &CMat::from_column_slice(2, 1, &[ONE, ZERO]), Direction::Forward, None)
            .unwrap();
        assert!(y.values().iter().all(|m| m[(0, 0)] == ONE && m[(1, 0)] == ZERO));
    }

    #[test]
    fn ivp_round_trip() {
        let sys = HamiltonianSystem::scalar(LatticeWindow::new(0, 8).unwrap(), 0.3, 0.5, 0.1, 1.0).unwrap();
        let y0 = CMat::from_column_slice(2, 1, &[c(0.4), c(-1.3)]);
        let fwd = solve_ivp(&sys, c(0.2), 0, &y0, Direction::Forward, None).unwrap();
        let back = solve_ivp(&sys, c(0.2), 9, &fwd.y(9).unwrap().clone(), Direction::Backward, None).unwrap();
        let err = (back.y(0).unwrap() - &y0).norm();
        assert!(err < 1e-12 * fwd.y(9).unwrap().norm().max(1.0), "{err} {} {}", back.y(0).unwrap(), fwd.y(9).unwrap());
    }

    #[test]
    fn ivp_output_solves_system() {
        let sys = HamiltonianSystem::scalar(LatticeWindow::new(0, 20).unwrap(), 0.1, 1.5, 0.2, 0.5).unwrap();
        let y = solve_ivp(&sys, c(0.3), 0, &CMat::from_column_slice(2, 1, &[ONE, c(0.5)]), Direction::Forward, None)
            .unwrap();
        let res = operator_residuals(&sys, c(0.3), &y.column(0)).unwrap();
        assert!(res.max_norm() < 1e-10);
    }

    #[test]
    fn bvp_free_linear_interpolation() {
        let sys = free(10);
        let y = solve_two_point_bvp(&sys, ZERO, 1, 5, 1e-12).unwrap();
        for t in 1..=5 {
            let u = y.u(t).unwrap()[(0, 0)];
            assert!((u - c((5.0 - t as f64) / 4.0)).norm() < 1e-13, "t={t}: {u}");
        }
        for t in 1..5 {
            assert!((y.v(t).unwrap()[(0, 0)] - c(-0.25)).norm() < 1e-13);
        }
        let res = operator_residuals(&sys, ZERO, &y.column(0).slice(0, 5).unwrap()).unwrap();
        assert!(res.max_norm() < 1e-13);
    }

    #[test]
    fn bvp_singular_when_b_vanishes() {
        let sys = HamiltonianSystem::scalar(LatticeWindow::new(0, 10).unwrap(), 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(solve_two_point_bvp(&sys, ZERO, 1, 5, 1e-10), Err(Error::SingularShooting { .. })));
    }

    #[test]
    fn two_point_property_examples() {
        let win = LatticeWindow::new(0, 12).unwrap();
        assert!(unique_two_point_property(&free(12), 0.0, win, 1e-10).unwrap());
        let degenerate = HamiltonianSystem::scalar(LatticeWindow::new(0, 12).unwrap(), 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(!unique_two_point_property(&degenerate, 0.0, win, 1e-10).unwrap());
        // At λ = 2 the free transfer squares to −I, so u returns to zero.
        assert!(!unique_two_point_property(&free(12), 2.0, win, 1e-10).unwrap());
    }

    #[test]
    fn fundamental_determinant_nonzero() {
        let sys = HamiltonianSystem::scalar(LatticeWindow::new(0, 15).unwrap(), 0.2, 1.0, -0.3, 2.0).unwrap();
        let phi = solve_ivp(&sys, c(0.7), 0, &linalg::identity(2), Direction::Forward, None).unwrap();
        let mut prod = 1.0;
        for t in 0..16 {
            let d = phi.y(t).unwrap().determinant().norm();
            assert!((d - prod).abs() < 1e-9 * prod.max(1.0));
            prod *= transfer(&sys, t, c(0.7)).unwrap().m.determinant().norm();
        }
    }

    #[test]
    fn ortho_sweep_reconstructs_raw_solution() {
        let sys = HamiltonianSystem::scalar(LatticeWindow::new(0, 20).unwrap(), 0.0, 1.0, 0.5, 1.0).unwrap();
        let y0 = CMat::from_column_slice(2, 1, &[c(0.3), c(1.0)]);
        let raw = solve_ivp(&sys, c(-1.0), 20, &y0, Direction::Backward, None).unwrap();
        let sweep = OrthoSweep::backward(&sys, c(-1.0), 20, 0, &y0).unwrap();
        let g = sweep.frame(20).adjoint() * &y0;
        let rebuilt = sweep.anchored(20, &g).unwrap();
        for t in 0..=20 {
            let a = raw.y(t).unwrap();
            let b = rebuilt.y(t).unwrap();
            assert!((a - b).norm() <= 1e-10 * a.norm());
        }
        let _ = Trajectory::scalar(0, 0, |_| 0.0, |_| 0.0);
    }

    #[test]
    fn bounded_propagation_stays_symplectic() {
        // λ = 2 sits in the middle of the free band: the product stays bounded.
        let sys = free(10_000);
        let drift = accumulated_symplectic_residual(&sys, 2.0, 0, 10_000, true).unwrap();
        assert!(drift.per_step_max <= 1e-12);
        assert!(drift.fundamental_relative <= 1e-8, "{drift:?}");
    }
}
