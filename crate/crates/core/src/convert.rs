//! Hamiltonian systems from a scalar even-order equation and from a vector
//! Sturm–Liouville equation.

use crate::error::{Error, Result};
use crate::lattice::{HamiltonianSystem, LatticeWindow, Trajectory};
use crate::linalg::{self, c, CMat, CVec, C64, ONE, ZERO};

/// Coefficients of
/// `Σ_j (−1)^j Δ^j(p_j ∇^j z) + i Σ_k [(−1)^{k+1} Δ^k(q_k z) + q_k ∇^k z] = λ w z`.
///
/// Sequences are indexed by `t − window.start` and must cover
/// `[start, end + n]` so that every `Δ^j` evaluated on the window is defined.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalarEquationSpec {
    pub n: usize,
    pub t_start: usize,
    pub t_end: usize,
    /// `p[j]` for `j = 0..=n`.
    pub p: Vec<Vec<f64>>,
    /// `q[k − 1]` for `k = 1..=n`.
    pub q: Vec<Vec<f64>>,
    pub w: Vec<f64>,
}

impl ScalarEquationSpec {
    pub fn constant(n: usize, window: LatticeWindow, p: &[f64], q: &[f64], w: f64) -> Self {
        let len = window.len() + n;
        Self {
            n,
            t_start: window.start,
            t_end: window.end,
            p: p.iter().map(|&x| vec![x; len]).collect(),
            q: q.iter().map(|&x| vec![x; len]).collect(),
            w: vec![w; len],
        }
    }

    pub fn window(&self) -> Result<LatticeWindow> {
        LatticeWindow::new(self.t_start, self.t_end)
    }

    fn check(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Invalid("order n must be at least 1".into()));
        }
        if self.p.len() != n + 1 || self.q.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "need {} p-sequences and {n} q-sequences, got {} and {}",
                n + 1,
                self.p.len(),
                self.q.len()
            )));
        }
        let need = self.window()?.len();
        for s in self.p.iter().chain(self.q.iter()).chain(std::iter::once(&self.w)) {
            if s.len() < need {
                return Err(Error::ShapeMismatch(format!("coefficient sequence has {} entries, need {need}", s.len())));
            }
        }
        if let Some(i) = self.w.iter().position(|&x| x < 0.0) {
            return Err(Error::Invalid(format!("w is negative at t={}", self.t_start + i)));
        }
        Ok(())
    }

    fn p(&self, j: usize, t: usize) -> f64 {
        self.p[j][t - self.t_start]
    }

    fn q(&self, k: usize, t: usize) -> f64 {
        self.q[k - 1][t - self.t_start]
    }
}

/// Hermitian `P`, `Q`, `W` for `−∇(PΔu) + Qu = λWu`. `P` covers the window;
/// `Q` and `W` need one extra entry at `end + 1`.
#[derive(Clone, Debug)]
pub struct SturmLiouvilleSpec {
    pub n: usize,
    pub window: LatticeWindow,
    pub p: Vec<CMat>,
    pub q: Vec<CMat>,
    pub w: Vec<CMat>,
}

impl SturmLiouvilleSpec {
    pub fn constant(window: LatticeWindow, p: CMat, q: CMat, w: CMat) -> Self {
        let len = window.len();
        Self { n: p.nrows(), window, p: vec![p; len], q: vec![q; len + 1], w: vec![w; len + 1] }
    }
}

/// A converted system with its index bookkeeping.
#[derive(Clone, Debug)]
pub struct Converted {
    pub system: HamiltonianSystem,
    /// The original unknown at time `t` is `u₁(t + u_shift)` (scalar) or
    /// `u(t + u_shift)` (vector).
    pub u_shift: usize,
    /// System coefficients at `t` come from the original ones at
    /// `t + coefficient_shift`.
    pub coefficient_shift: usize,
}

/// The block coefficients for the scalar equation.
pub fn from_scalar(spec: &ScalarEquationSpec) -> Result<Converted> {
    spec.check()?;
    let n = spec.n;
    let window = spec.window()?;
    let mut a = Vec::with_capacity(window.len());
    let mut b = Vec::with_capacity(window.len());
    let mut cm = Vec::with_capacity(window.len());
    let mut w = Vec::with_capacity(window.len());
    for t in window.iter() {
        let pn = spec.p(n, t);
        if pn == 0.0 {
            return Err(Error::Invalid(format!("p_n vanishes at t={t}")));
        }
        let qn = spec.q(n, t);
        let mut at = linalg::zeros(n, n);
        for i in 0..n - 1 {
            at[(i, i + 1)] = ONE;
        }
        at[(n - 1, 0)] += C64::new(0.0, qn / pn);
        a.push(at);

        let mut bt = linalg::zeros(n, n);
        bt[(n - 1, n - 1)] = c(1.0 / pn);
        b.push(bt);

        let mut ct = linalg::zeros(n, n);
        ct[(0, 0)] = c(spec.p(0, t) + qn / pn);
        for j in 1..n {
            let alpha = C64::new(0.0, spec.q(n - j, t));
            ct[(0, j)] = alpha;
            ct[(j, 0)] = alpha.conj();
            ct[(j, j)] = c(spec.p(j, t));
        }
        cm.push(ct);

        let mut wt = linalg::zeros(n, n);
        wt[(0, 0)] = c(spec.w[t - spec.t_start]);
        w.push(wt);
    }
    Ok(Converted { system: HamiltonianSystem::new(n, window, a, b, cm, w)?, u_shift: 1, coefficient_shift: 0 })
}

/// `A ≡ 0, B = P⁻¹(t), C(t) = Q(t+1), W(t) = W(t+1)`.
pub fn from_sturm_liouville(spec: &SturmLiouvilleSpec) -> Result<Converted> {
    let len = spec.window.len();
    if spec.p.len() != len || spec.q.len() != len + 1 || spec.w.len() != len + 1 {
        return Err(Error::ShapeMismatch(format!(
            "P needs {len} entries and Q, W need {}; got {}, {}, {}",
            len + 1,
            spec.p.len(),
            spec.q.len(),
            spec.w.len()
        )));
    }
    let n = spec.n;
    let mut b = Vec::with_capacity(len);
    for (i, p) in spec.p.iter().enumerate() {
        let inv = linalg::inverse(p)
            .filter(|_| linalg::relative_min_singular(p) > 1e-14)
            .ok_or_else(|| Error::Invalid(format!("P is singular at t={}", spec.window.start + i)))?;
        b.push(linalg::hermitian_part(&inv));
    }
    let system = HamiltonianSystem::new(
        n,
        spec.window,
        vec![linalg::zeros(n, n); len],
        b,
        spec.q[1..].to_vec(),
        spec.w[1..].to_vec(),
    )?;
    Ok(Converted { system, u_shift: 0, coefficient_shift: 1 })
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Δ^j f(t) = Σ_i (−1)^{j−i} C(j,i) f(t+i)`.
fn forward_diff(f: &dyn Fn(usize) -> C64, j: usize, t: usize) -> C64 {
    (0..=j).map(|i| f(t + i) * c(binom(j, i) * if (j - i) % 2 == 0 { 1.0 } else { -1.0 })).sum()
}

/// `∇^j f(t) = Σ_i (−1)^i C(j,i) f(t−i)`.
fn backward_diff(f: &dyn Fn(usize) -> C64, j: usize, t: usize) -> C64 {
    (0..=j).map(|i| f(t - i) * c(binom(j, i) * if i % 2 == 0 { 1.0 } else { -1.0 })).sum()
}

/// Residual of the scalar equation at `t` for `z(s) = u₁(s + 1)` read off a
/// trajectory of the converted system. Needs `z` on `[t − n, t + n]`.
pub fn scalar_residual(spec: &ScalarEquationSpec, lambda: C64, y: &Trajectory, t: usize) -> Result<C64> {
    let n = spec.n;
    if t < y.start() + n - 1 || t + n + 1 > y.end() || t < spec.t_start {
        return Err(Error::OutOfDomain { t, start: y.start() + n - 1, end: y.end().saturating_sub(n + 1) });
    }
    let z = |s: usize| -> C64 { y.u(s + 1).map(|u| u[0]).unwrap_or(ZERO) };
    let mut total = ZERO;
    for j in 0..=n {
        let inner = |s: usize| c(spec.p(j, s)) * backward_diff(&z, j, s);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        total += c(sign) * forward_diff(&inner, j, t);
    }
    let i = C64::new(0.0, 1.0);
    for k in 1..=n {
        let qz = |s: usize| c(spec.q(k, s)) * z(s);
        let sign = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
        total += i * (c(sign) * forward_diff(&qz, k, t) + c(spec.q(k, t)) * backward_diff(&z, k, t));
    }
    Ok(total - lambda * c(spec.w[t - spec.t_start]) * z(t))
}

/// `−∇(PΔu)(t) + Q(t)u(t) − λW(t)u(t)` for `t ∈ [start + 1, end]`, with
/// `u[i]` holding `u(start + i)`.
pub fn sturm_liouville_residual(spec: &SturmLiouvilleSpec, lambda: C64, u: &[CVec], t: usize) -> Result<CVec> {
    let s = spec.window.start;
    if t <= s || t > spec.window.end || t + 1 - s >= u.len() {
        return Err(Error::OutOfDomain { t, start: s + 1, end: spec.window.end });
    }
    let at = |k: usize| &u[k - s];
    let flux = |k: usize| &spec.p[k - s] * (at(k + 1) - at(k));
    Ok(-(flux(t) - flux(t - 1)) + &spec.q[t - s] * at(t) - &spec.w[t - s] * at(t) * lambda)
}

/// Largest substitution residual of the scalar equation along a few
/// propagated solutions of the converted system, relative to the solution
/// size. Near rounding when the block form reproduces the equation.
pub fn scalar_substitution_defect(spec: &ScalarEquationSpec, lambda: f64) -> Result<f64> {
    let n = spec.n;
    let conv = from_scalar(spec)?;
    let sys = &conv.system;
    let win = sys.window();
    if win.len() < 2 * n + 3 {
        return Err(Error::WindowTooShort(format!("need at least {} points for the substitution test", 2 * n + 3)));
    }
    let lam = c(lambda);
    let mut worst: f64 = 0.0;
    for k in 0..2 * n {
        let mut y0 = linalg::zeros(2 * n, 1);
        y0[(k, 0)] = ONE;
        y0[((k + 1) % (2 * n), 0)] = c(0.5);
        let y = crate::propagation::solve_ivp(sys, lam, win.start, &y0, crate::propagation::Direction::Forward, None)?
            .column(0);
        let scale = y.max_norm().max(1.0);
        for t in win.start + n..=win.end - n {
            worst = worst.max(scalar_residual(spec, lam, &y, t)?.norm() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::validate_system;
    use crate::propagation::{solve_ivp, Direction};

    fn win(a: usize, b: usize) -> LatticeWindow {
        LatticeWindow::new(a, b).unwrap()
    }

    #[test]
    fn scalar_order_one_is_free_system() {
        let spec = ScalarEquationSpec::constant(1, win(0, 10), &[0.0, 1.0], &[0.0], 1.0);
        let sys = from_scalar(&spec).unwrap().system;
        let free = HamiltonianSystem::free(win(0, 10));
        for t in 0..=10 {
            assert_eq!(sys.a(t), free.a(t));
            assert_eq!(sys.b(t), free.b(t));
            assert_eq!(sys.c(t), free.c(t));
            assert_eq!(sys.w(t), free.w(t));
        }
    }

    #[test]
    fn scalar_order_two_blocks() {
        let spec = ScalarEquationSpec::constant(2, win(0, 5), &[0.5, 2.0, 1.0], &[0.0, 0.0], 1.0);
        let sys = from_scalar(&spec).unwrap().system;
        assert_eq!(sys.a(3), &CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]));
        assert_eq!(sys.b(3), &CMat::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]));
        assert_eq!(sys.c(3), &CMat::from_row_slice(2, 2, &[c(0.5), ZERO, ZERO, c(2.0)]));
        assert!(validate_system(&sys, 1e-10).is_empty());
    }

    #[test]
    fn rejects_vanishing_leading_coefficient() {
        let spec = ScalarEquationSpec::constant(1, win(0, 5), &[0.0, 0.0], &[0.0], 1.0);
        assert!(from_scalar(&spec).is_err());
    }

    #[test]
    fn real_scalar_substitution_vanishes() {
        // Variable real coefficients, q ≡ 0: the converted system reproduces the equation.
        for n in 1..=3 {
            let len = 30 + n;
            let mut spec = ScalarEquationSpec::constant(n, win(0, 29), &vec![1.0; n + 1], &vec![0.0; n], 1.0);
            for j in 0..=n {
                spec.p[j] = (0..len).map(|t| 1.0 + 0.3 * j as f64 + 0.1 * ((t * (j + 2)) as f64).sin()).collect();
            }
            spec.w = (0..len).map(|t| 1.0 + 0.5 * (t as f64 * 0.7).cos()).collect();
            let sys = from_scalar(&spec).unwrap().system;
            let lam = c(0.3);
            let y0 = CVec::from_fn(2 * n, |i, _| c(0.2 + i as f64 * 0.37));
            let y = solve_ivp(&sys, lam, 0, &linalg::col(&y0), Direction::Forward, None).unwrap().column(0);
            for t in n..=(30 - n - 2) {
                let r = scalar_residual(&spec, lam, &y, t).unwrap();
                let scale = y.max_norm().max(1.0);
                assert!(r.norm() <= 1e-9 * scale, "n={n} t={t} residual {r}");
            }
        }
    }

    #[test]
    fn sturm_liouville_free_and_constant_q() {
        let spec = SturmLiouvilleSpec::constant(win(0, 8), linalg::identity(1), linalg::zeros(1, 1), linalg::identity(1));
        let sys = from_sturm_liouville(&spec).unwrap().system;
        let free = HamiltonianSystem::free(win(0, 8));
        for t in 0..=8 {
            assert_eq!(sys.b(t), free.b(t));
            assert_eq!(sys.c(t), free.c(t));
            assert_eq!(sys.w(t), free.w(t));
        }
        let q = CMat::from_element(1, 1, c(0.7));
        let spec = SturmLiouvilleSpec::constant(win(0, 8), linalg::identity(1), q.clone(), linalg::identity(1));
        let sys = from_sturm_liouville(&spec).unwrap().system;
        assert!((0..=8).all(|t| sys.c(t) == &q));
    }

    #[test]
    fn sturm_liouville_rejects_singular_p() {
        let spec = SturmLiouvilleSpec::constant(win(0, 3), linalg::zeros(1, 1), linalg::zeros(1, 1), linalg::identity(1));
        assert!(from_sturm_liouville(&spec).is_err());
    }

    #[test]
    fn sturm_liouville_substitution_vanishes() {
        let w = win(0, 12);
        let p = CMat::from_row_slice(2, 2, &[c(1.0), ZERO, ZERO, c(2.0)]);
        let q = CMat::from_row_slice(2, 2, &[c(0.4), C64::new(0.1, -0.3), C64::new(0.1, 0.3), c(-0.2)]);
        let spec = SturmLiouvilleSpec::constant(w, p, q, linalg::identity(2));
        let sys = from_sturm_liouville(&spec).unwrap().system;
        assert_eq!(sys.b(0), &CMat::from_row_slice(2, 2, &[c(1.0), ZERO, ZERO, c(0.5)]));
        let lam = c(0.25);
        let y0 = CMat::from_row_slice(4, 1, &[c(1.0), c(-0.5), c(0.3), c(0.8)]);
        let y = solve_ivp(&sys, lam, 0, &y0, Direction::Forward, None).unwrap();
        let u: Vec<CVec> = (0..=13).map(|t| linalg::to_vec(&y.u(t).unwrap())).collect();
        for t in 1..=12 {
            let r = sturm_liouville_residual(&spec, lam, &u, t).unwrap();
            assert!(r.norm() < 1e-10, "t={t}: {r}");
        }
    }

    #[test]
    fn printed_blocks_with_imaginary_terms() {
        let real = ScalarEquationSpec::constant(2, win(0, 20), &[0.5, 1.0, 1.0], &[0.0, 0.0], 1.0);
        assert!(scalar_substitution_defect(&real, 0.2).unwrap() < 1e-12);
        // With q_n ≠ 0 the block form as printed does not reproduce the
        // equation under u_j(t) = Δ^{j−1} z(t − j).
        let complex = ScalarEquationSpec::constant(1, win(0, 20), &[0.5, 1.0], &[0.3], 1.0);
        assert!(scalar_substitution_defect(&complex, 0.2).unwrap() > 1e-3);
    }
}
