//! System data, trajectories, the symplectic pairing, operator residuals and
//! the weighted semi-inner product.
//!
//! A [`HamiltonianSystem`] stores its coefficients materialized per lattice
//! point of its [`LatticeWindow`] `[start, end]`. A solution of the system is
//! defined on `[start, end + 1]`, since the last step maps `y(end)` to
//! `y(end + 1)`.
//!
//! The system is
//!
//! ```text
//! Δu(t) = A(t) u(t+1) + B(t) v(t)
//! Δv(t) = (C(t) − λ W(t)) u(t+1) − A*(t) v(t)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64, ZERO};
use crate::propagation;

/// Finite truncation `[start, end]` of the half-line lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub start: usize,
    pub end: usize,
}

impl LatticeWindow {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end <= start {
            return Err(Error::Invalid(format!("window [{start}, {end}] must satisfy start < end")));
        }
        Ok(Self { start, end })
    }

    /// Window that is allowed to be a single point; used for sums.
    pub fn closed(start: usize, end: usize) -> Result<Self> {
        if end < start {
            return Err(Error::Invalid(format!("window [{start}, {end}] is empty")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

/// Tolerances shared across modules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Hermitian / PSD / symplectic checks, scaled by the matrix norm.
    pub structural: f64,
    /// Relative singular-value threshold for invertibility and rank.
    pub rank: f64,
    /// Eigenvalues below `pinv_cutoff · λ_max` are zeroed in a pseudo-inverse.
    pub pinv_cutoff: f64,
    /// Relative least-squares residual for range membership.
    pub range: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { structural: 1e-10, rank: 1e-10, pinv_cutoff: 1e-12, range: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSystem {
    n: usize,
    window: LatticeWindow,
    a: Vec<CMat>,
    b: Vec<CMat>,
    c: Vec<CMat>,
    w: Vec<CMat>,
    /// `(I − A(t))⁻¹`, `None` where singular.
    a_tilde: Vec<Option<CMat>>,
}

impl HamiltonianSystem {
    /// Build from per-point coefficient sequences covering `window`.
    pub fn new(
        n: usize,
        window: LatticeWindow,
        a: Vec<CMat>,
        b: Vec<CMat>,
        c: Vec<CMat>,
        w: Vec<CMat>,
    ) -> Result<Self> {
        let len = window.len();
        for (name, seq) in [("A", &a), ("B", &b), ("C", &c), ("W", &w)] {
            if seq.len() != len {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has {} entries, window needs {len}",
                    seq.len()
                )));
            }
            if let Some(m) = seq.iter().find(|m| m.nrows() != n || m.ncols() != n) {
                return Err(Error::ShapeMismatch(format!(
                    "{name} entry is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let a_tilde = a
            .iter()
            .map(|at| {
                let m = linalg::identity(n) - at;
                if linalg::min_singular(&m) > 1e-14 * linalg::spectral_norm(&m).max(1.0) {
                    linalg::inverse(&m)
                } else {
                    None
                }
            })
            .collect();
        Ok(Self { n, window, a, b, c, w, a_tilde })
    }

    /// Constant coefficients on `window`.
    pub fn constant(n: usize, window: LatticeWindow, a: CMat, b: CMat, c: CMat, w: CMat) -> Result<Self> {
        let len = window.len();
        Self::new(n, window, vec![a; len], vec![b; len], vec![c; len], vec![w; len])
    }

    /// Scalar (n = 1) constant-coefficient system.
    pub fn scalar(window: LatticeWindow, a: f64, b: f64, cc: f64, w: f64) -> Result<Self> {
        let m = |x: f64| CMat::from_element(1, 1, c(x));
        Self::constant(1, window, m(a), m(b), m(cc), m(w))
    }

    /// `A ≡ 0, B ≡ 1, C ≡ 0, W ≡ 1`: the free second-order difference system.
    pub fn free(window: LatticeWindow) -> Self {
        Self::scalar(window, 0.0, 1.0, 0.0, 1.0).expect("constant scalar system is well formed")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    fn idx(&self, t: usize) -> usize {
        assert!(self.window.contains(t), "t={t} outside coefficient window {:?}", self.window);
        t - self.window.start
    }

    pub fn a(&self, t: usize) -> &CMat {
        &self.a[self.idx(t)]
    }

    pub fn b(&self, t: usize) -> &CMat {
        &self.b[self.idx(t)]
    }

    pub fn c(&self, t: usize) -> &CMat {
        &self.c[self.idx(t)]
    }

    pub fn w(&self, t: usize) -> &CMat {
        &self.w[self.idx(t)]
    }

    /// `Ã(t) = (I − A(t))⁻¹`.
    pub fn a_tilde(&self, t: usize) -> Result<&CMat> {
        self.a_tilde[self.idx(t)].as_ref().ok_or_else(|| Error::SingularTransfer {
            t,
            sigma: linalg::min_singular(&(linalg::identity(self.n) - self.a(t))),
        })
    }

    /// `C̃(t, λ) = C(t) − λ W(t)`.
    pub fn c_tilde(&self, t: usize, lambda: C64) -> CMat {
        self.c(t) - self.w(t) * lambda
    }

    /// Check that coefficients exist for every step in `[from, to)`.
    pub fn check_steps(&self, from: usize, to: usize) -> Result<()> {
        if from < self.window.start || (to > from && to - 1 > self.window.end) {
            return Err(Error::OutOfDomain {
                t: if from < self.window.start { from } else { to - 1 },
                start: self.window.start,
                end: self.window.end,
            });
        }
        Ok(())
    }

    /// The same system restricted to a sub-window.
    pub fn restrict(&self, window: LatticeWindow) -> Result<Self> {
        if !self.window.contains(window.start) || !self.window.contains(window.end) {
            return Err(Error::OutOfDomain { t: window.end, start: self.window.start, end: self.window.end });
        }
        let r = (window.start - self.window.start)..=(window.end - self.window.start);
        Self::new(
            self.n,
            window,
            self.a[r.clone()].to_vec(),
            self.b[r.clone()].to_vec(),
            self.c[r.clone()].to_vec(),
            self.w[r].to_vec(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    NotHermitian(&'static str),
    NotPsd(&'static str),
    SingularIMinusA,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub t: usize,
    pub kind: ViolationKind,
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collect every structural violation; nothing here is an error.
pub fn validate_system(sys: &HamiltonianSystem, tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    let n = sys.n();
    for t in sys.window().iter() {
        for (name, m, psd) in [("B", sys.b(t), true), ("C", sys.c(t), false), ("W", sys.w(t), true)] {
            let scale = linalg::spectral_norm(m).max(1.0);
            let defect = linalg::hermitian_defect(m);
            if defect > tol * scale {
                violations.push(Violation { t, kind: ViolationKind::NotHermitian(name), magnitude: defect });
            }
            if psd {
                let lo = linalg::min_eigenvalue(m);
                if lo < -tol * scale {
                    violations.push(Violation { t, kind: ViolationKind::NotPsd(name), magnitude: -lo });
                }
            }
        }
        let ima = linalg::identity(n) - sys.a(t);
        let sigma = linalg::min_singular(&ima);
        if sigma <= tol {
            violations.push(Violation { t, kind: ViolationKind::SingularIMinusA, magnitude: sigma });
        }
    }
    ValidationReport { violations }
}

/// Vector sequence `y(t) = (u(t); v(t))` on `[start, start + len − 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    start: usize,
    values: Vec<CVec>,
}

impl Trajectory {
    pub fn new(start: usize, values: Vec<CVec>) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::Invalid("empty trajectory".into()));
        };
        let dim = first.len();
        if dim % 2 != 0 || dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::ShapeMismatch("trajectory entries must all have the same even length".into()));
        }
        Ok(Self { start, values })
    }

    /// Build from a closure over `[start, end]`.
    pub fn from_fn(start: usize, end: usize, f: impl Fn(usize) -> CVec) -> Result<Self> {
        Self::new(start, (start..=end).map(f).collect())
    }

    /// Scalar (n = 1) trajectory from real `u`, `v` profiles.
    pub fn scalar(start: usize, end: usize, u: impl Fn(usize) -> f64, v: impl Fn(usize) -> f64) -> Self {
        Self::from_fn(start, end, |t| CVec::from_vec(vec![c(u(t)), c(v(t))])).expect("non-empty scalar trajectory")
    }

    pub fn n(&self) -> usize {
        self.values[0].len() / 2
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t <= self.end()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if self.contains(t) {
            Ok(t - self.start)
        } else {
            Err(Error::OutOfDomain { t, start: self.start, end: self.end() })
        }
    }

    pub fn y(&self, t: usize) -> Result<&CVec> {
        Ok(&self.values[self.check(t)?])
    }

    pub fn u(&self, t: usize) -> Result<CVec> {
        let n = self.n();
        Ok(self.y(t)?.rows(0, n).into_owned())
    }

    pub fn v(&self, t: usize) -> Result<CVec> {
        let n = self.n();
        Ok(self.y(t)?.rows(n, n).into_owned())
    }

    pub fn values(&self) -> &[CVec] {
        &self.values
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { start: self.start, values: self.values.iter().map(|v| v * s).collect() }
    }

    /// `self − other` on the common domain.
    pub fn sub(&self, other: &Trajectory) -> Result<Self> {
        let start = self.start.max(other.start);
        let end = self.end().min(other.end());
        Self::from_fn(start, end, |t| self.values[t - self.start].clone() - &other.values[t - other.start])
    }

    /// Restrict to `[start, end]`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        self.check(start)?;
        self.check(end)?;
        Ok(Self { start, values: self.values[start - self.start..=end - self.start].to_vec() })
    }

    /// `max_t ‖y(t)‖`.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Matrix sequence `Y(t) = (U(t); V(t))`, each entry `2n × k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjoinedBasis {
    start: usize,
    values: Vec<CMat>,
}

impl ConjoinedBasis {
    pub fn new(start: usize, values: Vec<CMat>) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::Invalid("empty basis".into()));
        };
        let (r, k) = first.shape();
        if r % 2 != 0 || r == 0 || values.iter().any(|m| m.shape() != (r, k)) {
            return Err(Error::ShapeMismatch("basis entries must share an even row count".into()));
        }
        Ok(Self { start, values })
    }

    pub fn n(&self) -> usize {
        self.values[0].nrows() / 2
    }

    pub fn k(&self) -> usize {
        self.values[0].ncols()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }

    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t <= self.end()
    }

    pub fn y(&self, t: usize) -> Result<&CMat> {
        if !self.contains(t) {
            return Err(Error::OutOfDomain { t, start: self.start, end: self.end() });
        }
        Ok(&self.values[t - self.start])
    }

    pub fn u(&self, t: usize) -> Result<CMat> {
        let n = self.n();
        Ok(self.y(t)?.rows(0, n).into_owned())
    }

    pub fn v(&self, t: usize) -> Result<CMat> {
        let n = self.n();
        Ok(self.y(t)?.rows(n, n).into_owned())
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Trajectory {
        Trajectory {
            start: self.start,
            values: self.values.iter().map(|m| m.column(j).into_owned()).collect(),
        }
    }

    pub fn columns(&self) -> Vec<Trajectory> {
        (0..self.k()).map(|j| self.column(j)).collect()
    }

    /// `Y(t) · R` for a constant `k × k'` matrix.
    pub fn right_mul(&self, r: &CMat) -> Self {
        Self { start: self.start, values: self.values.iter().map(|m| m * r).collect() }
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        self.y(start)?;
        self.y(end)?;
        Ok(Self { start, values: self.values[start - self.start..=end - self.start].to_vec() })
    }

    pub fn from_columns(cols: &[Trajectory]) -> Result<Self> {
        let Some(first) = cols.first() else {
            return Err(Error::Invalid("no columns".into()));
        };
        let start = cols.iter().map(|c| c.start).max().unwrap_or(first.start);
        let end = cols.iter().map(|c| c.end()).min().unwrap_or(first.end());
        let dim = first.values[0].len();
        let values = (start..=end)
            .map(|t| CMat::from_fn(dim, cols.len(), |i, j| cols[j].values[t - cols[j].start][i]))
            .collect();
        Self::new(start, values)
    }
}

/// `(y₁, y₂)(t) = y₂*(t) J y₁(t)`.
pub fn symplectic_form(y1: &Trajectory, y2: &Trajectory, t: usize) -> Result<C64> {
    let a = y1.y(t)?;
    let b = y2.y(t)?;
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch("trajectories of different dimension".into()));
    }
    Ok(pair_vectors(a, b))
}

/// `b* J a` for two 2n-vectors.
pub fn pair_vectors(a: &CVec, b: &CVec) -> C64 {
    let n = a.len() / 2;
    let mut s = ZERO;
    for i in 0..n {
        // (J a)_i = −a_{n+i}, (J a)_{n+i} = a_i
        s += b[i].conj() * (-a[n + i]) + b[n + i].conj() * a[i];
    }
    s
}

/// Residuals of the two equations along a trajectory, indexed from `start`.
#[derive(Clone, Debug)]
pub struct Residuals {
    pub start: usize,
    pub r1: Vec<CVec>,
    pub r2: Vec<CVec>,
}

impl Residuals {
    pub fn max_norm(&self) -> f64 {
        self.r1.iter().chain(self.r2.iter()).map(|r| r.norm()).fold(0.0, f64::max)
    }

    pub fn max_r2(&self) -> f64 {
        self.r2.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

/// `L₁(y)(t) = −Δv(t) + C(t)u(t+1) − A*(t)v(t)`.
pub fn l1(sys: &HamiltonianSystem, y: &Trajectory, t: usize) -> Result<CVec> {
    let v0 = y.v(t)?;
    let v1 = y.v(t + 1)?;
    let u1 = y.u(t + 1)?;
    Ok(-(&v1 - &v0) + sys.c(t) * u1 - sys.a(t).adjoint() * v0)
}

/// `L₂(y)(t) = Δu(t) − A(t)u(t+1) − B(t)v(t)`.
pub fn l2(sys: &HamiltonianSystem, y: &Trajectory, t: usize) -> Result<CVec> {
    let u0 = y.u(t)?;
    let u1 = y.u(t + 1)?;
    let v0 = y.v(t)?;
    Ok(&u1 - &u0 - sys.a(t) * &u1 - sys.b(t) * v0)
}

fn step_range(sys: &HamiltonianSystem, y: &Trajectory) -> std::ops::Range<usize> {
    let from = y.start().max(sys.window().start);
    let to = y.end().min(sys.window().end + 1);
    from..to.max(from)
}

/// `r₁ = L₁(y) − λ W u(t+1)`, `r₂ = L₂(y)` on every step where both are defined.
pub fn operator_residuals(sys: &HamiltonianSystem, lambda: C64, y: &Trajectory) -> Result<Residuals> {
    let range = step_range(sys, y);
    let mut r1 = Vec::with_capacity(range.len());
    let mut r2 = Vec::with_capacity(range.len());
    for t in range.clone() {
        r1.push(l1(sys, y, t)? - sys.w(t) * y.u(t + 1)? * lambda);
        r2.push(l2(sys, y, t)?);
    }
    Ok(Residuals { start: range.start, r1, r2 })
}

/// Partial right shift `R(y)(t) = (u(t+1); v(t))`.
pub fn right_shift(y: &Trajectory, t: usize) -> Result<CVec> {
    let n = y.n();
    let mut out = CVec::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&y.u(t + 1)?);
    out.rows_mut(n, n).copy_from(&y.v(t)?);
    Ok(out)
}

/// The natural difference operator `𝓛(y)(t) = (L₁(y)(t); L₂(y)(t))` written in
/// the form `((I − A*)v(t) − v(t+1) + C u(t+1); (I − A)u(t+1) − u(t) − B v(t))`.
pub fn natural_operator(sys: &HamiltonianSystem, y: &Trajectory, t: usize) -> Result<CVec> {
    let n = y.n();
    let mut out = CVec::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&l1(sys, y, t)?);
    out.rows_mut(n, n).copy_from(&l2(sys, y, t)?);
    Ok(out)
}

/// Defect of the summation identity
/// `Σ_{t=s}^{k} [R(y₂)*𝓛(y₁) − 𝓛(y₂)*R(y₁)] = (y₁,y₂)(k+1) − (y₁,y₂)(s)`,
/// valid for arbitrary sequences.
pub fn lagrange_identity_check(
    sys: &HamiltonianSystem,
    y1: &Trajectory,
    y2: &Trajectory,
    s: usize,
    k: usize,
) -> Result<f64> {
    if s >= k {
        return Err(Error::WindowTooShort(format!("need s < k, got s={s}, k={k}")));
    }
    sys.check_steps(s, k + 1)?;
    let mut lhs = ZERO;
    for t in s..=k {
        let l_1 = natural_operator(sys, y1, t)?;
        let l_2 = natural_operator(sys, y2, t)?;
        let r_1 = right_shift(y1, t)?;
        let r_2 = right_shift(y2, t)?;
        lhs += r_2.dotc(&l_1) - l_2.dotc(&r_1);
    }
    let rhs = symplectic_form(y1, y2, k + 1)? - symplectic_form(y1, y2, s)?;
    Ok((lhs - rhs).norm())
}

/// `⟨y₁, y₂⟩_W = Σ_{t∈window} u₂*(t+1) W(t) u₁(t+1)`.
pub fn weighted_inner(
    sys: &HamiltonianSystem,
    y1: &Trajectory,
    y2: &Trajectory,
    window: LatticeWindow,
) -> Result<C64> {
    sys.check_steps(window.start, window.end + 1)?;
    let mut s = ZERO;
    for t in window.iter() {
        let u1 = y1.u(t + 1)?;
        let u2 = y2.u(t + 1)?;
        s += u2.dotc(&(sys.w(t) * u1));
    }
    Ok(s)
}

/// Defect of the inner-product/Green identity on `window = [a, b]`:
///
/// `⟨y₁′, y₂⟩_W = Σ {u₂*(t+1)C u₁(t+1) + v₂*(t)B v₁(t)} − [u₂*(t)v₁(t)]_{a}^{b+1}`
///
/// where `y₁` solves the non-homogeneous system with right side `y₁′`
/// (`W(t)u₁′(t+1) = L₁(y₁)(t)`). Passing `None` for `y1_prime` means `y₁`
/// solves the homogeneous system at `lambda`, so `y₁′ = λ y₁`.
pub fn green_identity_check(
    sys: &HamiltonianSystem,
    lambda: C64,
    y1: &Trajectory,
    y1_prime: Option<&Trajectory>,
    y2: &Trajectory,
    window: LatticeWindow,
    tol: f64,
) -> Result<f64> {
    sys.check_steps(window.start, window.end + 1)?;
    let owned;
    let y1p = match y1_prime {
        Some(p) => p,
        None => {
            owned = y1.scale(lambda);
            &owned
        }
    };
    let scale = y1.max_norm().max(y2.max_norm()).max(1.0);
    for t in window.iter() {
        let r2a = l2(sys, y1, t)?.norm();
        let r2b = l2(sys, y2, t)?.norm();
        if r2a > tol * scale || r2b > tol * scale {
            return Err(Error::Precondition(format!("first equation violated at t={t}")));
        }
        let forcing = l1(sys, y1, t)? - sys.w(t) * y1p.u(t + 1)?;
        if forcing.norm() > tol * scale * (1.0 + linalg::spectral_norm(sys.w(t))) {
            return Err(Error::Precondition(format!(
                "y1 does not solve the non-homogeneous system at t={t} (defect {:e})",
                forcing.norm()
            )));
        }
    }
    let lhs = weighted_inner(sys, y1p, y2, window)?;
    let mut rhs = ZERO;
    for t in window.iter() {
        let u1 = y1.u(t + 1)?;
        let u2 = y2.u(t + 1)?;
        let v1 = y1.v(t)?;
        let v2 = y2.v(t)?;
        rhs += u2.dotc(&(sys.c(t) * u1)) + v2.dotc(&(sys.b(t) * v1));
    }
    let boundary = |t: usize| -> Result<C64> { Ok(y2.u(t)?.dotc(&y1.v(t)?)) };
    rhs -= boundary(window.end + 1)? - boundary(window.start)?;
    Ok((lhs - rhs).norm())
}

#[derive(Clone, Debug)]
pub struct DefinitenessReport {
    pub holds: bool,
    pub gram: CMat,
    pub min_eigenvalue: f64,
}

/// Gram matrix `Σ_{t∈window} Φ_u*(t+1) W(t) Φ_u(t+1)` of the fundamental
/// solution with `Φ(window.start) = I`; the definiteness condition holds on
/// the window iff it is positive definite. Evaluated at a real `lambda`.
pub fn definiteness_check(
    sys: &HamiltonianSystem,
    window: LatticeWindow,
    lambda: f64,
    tol: f64,
) -> Result<DefinitenessReport> {
    let n = sys.n();
    sys.check_steps(window.start, window.end + 1)?;
    let phi = propagation::solve_ivp(
        sys,
        c(lambda),
        window.start,
        &linalg::identity(2 * n),
        propagation::Direction::Forward,
        Some(window.end + 1),
    )?;
    let mut gram = linalg::CompensatedSum::new(2 * n, 2 * n);
    for t in window.iter() {
        let pu = phi.u(t + 1)?;
        gram.add(&(pu.adjoint() * sys.w(t) * &pu));
    }
    let gram = linalg::hermitian_part(gram.value());
    let min_eigenvalue = linalg::min_eigenvalue(&gram);
    let holds = min_eigenvalue > tol * linalg::spectral_norm(&gram).max(1.0);
    Ok(DefinitenessReport { holds, gram, min_eigenvalue })
}
