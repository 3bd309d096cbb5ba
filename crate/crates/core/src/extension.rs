//! Square-summable solutions, the deficiency index, the matrix Θ of limit
//! pairings, self-adjoint boundary conditions and the Friedrichs extension.
//!
//! Times follow the half-line convention: the window start `a` plays the
//! role of `0` and `t1 = a + 1` the anchor where `Ũ(t1) = I`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conjoined::{self, RecessiveResult, OVERFLOW_GUARD};
use crate::error::{Error, Result};
use crate::lattice::{self, symplectic_form, ConjoinedBasis, HamiltonianSystem, LatticeWindow, Trajectory};
use crate::linalg::{self, c, CMat, CVec, C64, ONE};
use crate::propagation;

/// Minimum ratio between the smallest dropped and the largest kept tail ratio.
/// Relative conditioning below which `Ŷ(t)` no longer resolves its span.
const COLLAPSE_TOL: f64 = 1e-10;

pub const RANK_GAP: f64 = 1e2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Worst of two verdicts: FAIL over INCONCLUSIVE over PASS.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SquareSummableBasis {
    pub lambda: f64,
    pub n: usize,
    /// Each normalized to `‖θ(t1)‖ = 1`.
    pub solutions: Vec<Trajectory>,
    /// Tail W-norm over total W-norm (squared) of each solution.
    pub tail_ratios: Vec<f64>,
    /// `(t, Σ_{s ≥ t} u*(s+1)W(s)u(s+1))` at quarter points, per solution.
    pub tail_profiles: Vec<Vec<(usize, f64)>>,
    /// Last time used by the tail test; below the requested horizon when the
    /// complementary solutions had to be clipped.
    pub effective_horizon: usize,
}

impl SquareSummableBasis {
    pub fn d(&self) -> usize {
        self.solutions.len()
    }
}

#[derive(Clone, Debug)]
pub struct DeficiencyEstimate {
    pub d: usize,
    pub basis: SquareSummableBasis,
    pub recessive: RecessiveResult,
    /// All `2n` generalized tail ratios, ascending.
    pub spectrum: Vec<f64>,
    /// First dropped over last kept ratio (`∞` when `d = 2n`).
    pub gap: f64,
}

/// Recessive solution with `U(a + 1) = I` on `[a, horizon]`: the S-sum
/// construction when it reaches the horizon, otherwise the backward two-point
/// solution from a point past the horizon.
pub fn recessive_on(sys: &HamiltonianSystem, lambda: f64, horizon: usize) -> Result<RecessiveResult> {
    let a = sys.window().start;
    let t1 = a + 1;
    let last = sys.window().end + 1;
    if horizon > last {
        return Err(Error::OutOfDomain { t: horizon, start: a, end: last });
    }
    if let Ok(r) = conjoined::construct_recessive(sys, lambda, t1, horizon, 1e-8) {
        if r.diagnostics.clipped_at.is_none() && r.basis.end() >= horizon {
            return Ok(r);
        }
    }
    let pad = ((horizon - a) / 4).max(64);
    let s = (horizon + pad).min(last);
    let mut r = conjoined::recessive_by_shooting(sys, lambda, t1, s)?;
    r.basis = r.basis.slice(a, horizon)?;
    Ok(r)
}

/// `Y(t1) = (0; I)` propagated over `[a, until]`, stopped early if the norm
/// would pass the overflow guard or the columns collapse onto the fastest
/// growing mode.
fn complement(sys: &HamiltonianSystem, lambda: C64, until: usize) -> Result<ConjoinedBasis> {
    let n = sys.n();
    let a = sys.window().start;
    let mut y = linalg::zeros(2 * n, n);
    y.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
    let mut values = vec![propagation::step_backward(sys, a, lambda, &y)?, y];
    for t in a + 1..until {
        let next = propagation::step_forward(sys, t, lambda, values.last().unwrap())?;
        if next.norm() > OVERFLOW_GUARD || equilibrated_min_singular(&next) < COLLAPSE_TOL {
            break;
        }
        values.push(next);
    }
    ConjoinedBasis::new(a, values)
}

fn equilibrated_min_singular(y: &CMat) -> f64 {
    let mut z = y.clone();
    for mut col in z.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.scale_mut(1.0 / norm);
        }
    }
    linalg::min_singular(&z)
}

struct TailSplit {
    ratios: Vec<f64>,
    /// Coefficient vectors, one column per ratio, unit length.
    directions: CMat,
}

/// Generalized eigen-split of the tail Gram against the full Gram over
/// `t ∈ [from, to)`, computed through a QR of the stacked `W^{1/2}U(t+1)`.
fn tail_split(sys: &HamiltonianSystem, y: &ConjoinedBasis, from: usize, to: usize) -> Result<TailSplit> {
    let n = y.n();
    let k = y.k();
    let steps = to - from;
    let tail_start = to - steps / 4;
    let tail_rows = (to - tail_start) * n;
    if tail_rows < k {
        return Err(Error::WindowTooShort(format!("tail of [{from}, {to}] too short for {k} directions")));
    }
    let mut s = linalg::zeros(steps * n, k);
    for t in from..to {
        let r = linalg::hermitian_sqrt(sys.w(t)) * y.u(t + 1)?;
        s.view_mut(((t - from) * n, 0), (n, k)).copy_from(&r);
    }
    let scales: Vec<f64> = (0..k).map(|j| s.column(j).norm()).collect();
    if scales.contains(&0.0) {
        return Err(Error::RankDeficient("a solution has zero W-norm on the window".into()));
    }
    for (j, &x) in scales.iter().enumerate() {
        s.column_mut(j).scale_mut(1.0 / x);
    }
    let qr = s.qr();
    let q = qr.q();
    let r = qr.r();
    let rinv = match linalg::inverse(&r) {
        Some(m) if linalg::relative_min_singular(&r) > 1e-14 => m,
        _ => return Err(Error::RankDeficient("W-Gram of the solution space is singular".into())),
    };
    let qt = q.rows((tail_start - from) * n, tail_rows).into_owned();
    let svd = qt.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let inv_scale = CMat::from_diagonal(&CVec::from_iterator(k, scales.iter().map(|&x| c(1.0 / x))));
    let mut directions = linalg::zeros(k, k);
    let mut ratios = Vec::with_capacity(k);
    for (col, &i) in order.iter().enumerate() {
        let v = vt.row(i).adjoint();
        let d = &inv_scale * &rinv * v;
        directions.set_column(col, &(&d / c(d.norm())));
        ratios.push(svd.singular_values[i].powi(2));
    }
    Ok(TailSplit { ratios, directions })
}

fn tail_profile(sys: &HamiltonianSystem, y: &Trajectory, from: usize, to: usize) -> Result<Vec<(usize, f64)>> {
    let mut acc = vec![0.0; to - from + 1];
    for t in (from..to).rev() {
        let u = y.u(t + 1)?;
        acc[t - from] = acc[t + 1 - from] + u.dotc(&(sys.w(t) * &u)).re;
    }
    let q = (to - from) / 4;
    Ok([from, from + q, from + 2 * q, from + 3 * q, to - 1].iter().map(|&t| (t, acc[t - from])).collect())
}

/// Counts the square-summable directions of the `2n`-dimensional solution
/// space at real `lambda` over `[a, horizon]`.
///
/// The space is spanned by the recessive solution and the solution with
/// `Y(t1) = (0; I)`. A direction counts when its W-norm over the last quarter
/// is at most `tol` times its W-norm over the whole window.
pub fn estimate_deficiency_index(
    sys: &HamiltonianSystem,
    lambda: f64,
    horizon: usize,
    tol: f64,
) -> Result<DeficiencyEstimate> {
    let n = sys.n();
    let a = sys.window().start;
    let t1 = a + 1;
    if horizon < t1 + 16 {
        return Err(Error::WindowTooShort(format!("horizon {horizon} must be at least {}", t1 + 16)));
    }
    let recessive = recessive_on(sys, lambda, horizon)?;
    let hat = complement(sys, c(lambda), horizon)?;
    let h = hat.end().min(recessive.basis.end());
    let rec = recessive.basis.slice(a, h)?;
    let joint = ConjoinedBasis::new(
        a,
        (a..=h)
            .map(|t| {
                let mut m = linalg::zeros(2 * n, 2 * n);
                m.columns_mut(0, n).copy_from(rec.y(t).unwrap());
                m.columns_mut(n, n).copy_from(hat.y(t).unwrap());
                m
            })
            .collect(),
    )?;
    let split = tail_split(sys, &joint, a, h)?;
    let d = split.ratios.iter().filter(|&&r| r <= tol).count();
    let gap = if d == 2 * n {
        f64::INFINITY
    } else {
        let kept = if d == 0 { tol } else { split.ratios[d - 1].max(f64::MIN_POSITIVE) };
        split.ratios[d] / kept
    };
    if gap < RANK_GAP {
        return Err(Error::AmbiguousCount { ratio: gap });
    }
    if d < n {
        return Err(Error::Precondition(format!(
            "only {d} square-summable directions for n = {n}; lambda is not below the lower bound or definiteness fails"
        )));
    }
    let mut solutions = Vec::with_capacity(d);
    let mut profiles = Vec::with_capacity(d);
    for i in 0..d {
        let y = joint.right_mul(&split.directions.columns(i, 1).into_owned()).column(0);
        let norm = y.y(t1)?.norm();
        let y = y.scale(c(1.0 / norm));
        profiles.push(tail_profile(sys, &y, a, h)?);
        solutions.push(y);
    }
    let basis = SquareSummableBasis {
        lambda,
        n,
        solutions,
        tail_ratios: split.ratios[..d].to_vec(),
        tail_profiles: profiles,
        effective_horizon: h,
    };
    Ok(DeficiencyEstimate { d, basis, recessive, spectrum: split.ratios, gap })
}

/// The normal form `(ỹ₁..ỹₙ, ŷ₁..ŷ_{d−n})`: `Ũ(t1) = I`, `Û(t1) = 0` and rows
/// `rows` of `V̂(t1)` equal to the identity.
#[derive(Clone, Debug)]
pub struct OrderedBasis {
    pub n: usize,
    pub t1: usize,
    pub recessive: ConjoinedBasis,
    pub hat: Vec<Trajectory>,
    /// Zero-based row indices `i₁ < … ` selected in `V̂(t1)`.
    pub rows: Vec<usize>,
}

impl OrderedBasis {
    pub fn d(&self) -> usize {
        self.n + self.hat.len()
    }

    /// `θⱼ = ỹ_{iⱼ}`, `θ_{d−n+j} = ŷⱼ`.
    pub fn thetas(&self) -> Vec<Trajectory> {
        let mut out: Vec<Trajectory> = self.rows.iter().map(|&i| self.recessive.column(i)).collect();
        out.extend(self.hat.iter().cloned());
        out
    }

    pub fn start(&self) -> usize {
        self.recessive.start()
    }

    pub fn end(&self) -> usize {
        self.recessive.end()
    }
}

/// Brings a square-summable basis into the normal form relative to the
/// recessive solution.
pub fn order_basis(basis: &SquareSummableBasis, recessive: &RecessiveResult, tol: f64) -> Result<OrderedBasis> {
    let n = basis.n;
    let d = basis.d();
    let t1 = recessive.t1;
    if d < n || d > 2 * n {
        return Err(Error::Precondition(format!("d = {d} outside [{n}, {}]", 2 * n)));
    }
    let k = d - n;
    let rec_full = &recessive.basis;
    if (rec_full.u(t1)? - linalg::identity(n)).norm() > 1e-10 {
        return Err(Error::Precondition("recessive solution must satisfy U(t1) = I".into()));
    }
    if k == 0 {
        return Ok(OrderedBasis { n, t1, recessive: rec_full.clone(), hat: Vec::new(), rows: Vec::new() });
    }
    let theta = ConjoinedBasis::from_columns(&basis.solutions)?;
    let from = theta.start().max(rec_full.start());
    let to = theta.end().min(rec_full.end());
    let theta = theta.slice(from, to)?;
    let rec = rec_full.slice(from, to)?;
    let shift = theta.u(t1)?;
    let all = ConjoinedBasis::new(
        from,
        theta.values().iter().zip(rec.values()).map(|(th, r)| th - r * &shift).collect(),
    )?;
    let vhat = all.v(t1)?;
    let svd = vhat.clone().svd(false, true);
    let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..).collect();
    sv.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let top = sv.first().map(|x| x.0).unwrap_or(0.0);
    if sv.get(k - 1).map(|x| x.0).unwrap_or(0.0) <= tol {
        return Err(Error::RankDeficient(format!("V̂(t1) has rank below d − n = {k}")));
    }
    if sv.get(k).map(|x| x.0 > tol * top.max(1.0)).unwrap_or(false) {
        return Err(Error::RankDeficient("basis span does not contain the recessive solution".into()));
    }
    let vt = svd.v_t.expect("requested");
    let pick = CMat::from_fn(d, k, |i, j| vt[(sv[j].1, i)].conj());
    let hat = all.right_mul(&pick);
    // Column elimination with row pivoting on V̂(t1).
    let mut m = hat.v(t1)?;
    let mut rows: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k {
        let (r, piv) = (0..n)
            .filter(|r| !rows.contains(r))
            .map(|r| (r, m[(r, j)].norm()))
            .fold((usize::MAX, -1.0), |best, x| if x.1 > best.1 { x } else { best });
        if piv <= tol {
            return Err(Error::RankDeficient(format!("no invertible {k}×{k} row selection in V̂(t1)")));
        }
        for l in j + 1..k {
            let f = m[(r, l)] / m[(r, j)];
            let colj = m.column(j).into_owned();
            m.column_mut(l).axpy(-f, &colj, ONE);
        }
        rows.push(r);
    }
    rows.sort_unstable();
    let v1 = hat.v(t1)?;
    let sub = CMat::from_fn(k, k, |i, j| v1[(rows[i], j)]);
    let g = linalg::inverse(&sub).ok_or_else(|| Error::RankDeficient("selected rows are singular".into()))?;
    let hat = hat.right_mul(&g);
    Ok(OrderedBasis { n, t1, recessive: rec, hat: hat.columns(), rows })
}

/// `((0, I_k), (−I_k, 0))`.
pub fn canonical_theta(k: usize) -> CMat {
    let mut m = linalg::zeros(2 * k, 2 * k);
    for i in 0..k {
        m[(i, k + i)] = ONE;
        m[(k + i, i)] = -ONE;
    }
    m
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockResiduals {
    /// `(ỹ, ỹ)` block, at the last evaluation time.
    pub recessive: f64,
    pub upper: f64,
    pub lower: f64,
    pub hat: f64,
}

impl BlockResiduals {
    pub fn max(&self) -> f64 {
        self.recessive.max(self.upper).max(self.lower).max(self.hat)
    }
}

#[derive(Clone, Debug)]
pub struct ThetaMatrix {
    pub theta: CMat,
    pub evaluation_t: usize,
    pub drift: f64,
    pub skew_defect: f64,
    pub blocks: BlockResiduals,
}

fn pairing(thetas: &[Trajectory], t: usize) -> Result<CMat> {
    let l = thetas.len();
    let mut m = linalg::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            m[(i, j)] = symplectic_form(&thetas[i], &thetas[j], t)?;
        }
    }
    Ok(m)
}

/// `Θ = ((θᵢ, θⱼ)(t))` over `t_list`, checked for constancy and invertibility.
pub fn theta_matrix(ordered: &OrderedBasis, t_list: &[usize], tol: f64) -> Result<ThetaMatrix> {
    let Some(&t0) = t_list.first() else {
        return Err(Error::Invalid("empty t_list".into()));
    };
    let k = ordered.hat.len();
    let thetas = ordered.thetas();
    if k == 0 {
        let zero = BlockResiduals { recessive: 0.0, upper: 0.0, lower: 0.0, hat: 0.0 };
        return Ok(ThetaMatrix { theta: linalg::zeros(0, 0), evaluation_t: t0, drift: 0.0, skew_defect: 0.0, blocks: zero });
    }
    let theta = pairing(&thetas, t0)?;
    let mut drift: f64 = 0.0;
    let mut last = theta.clone();
    for &t in &t_list[1..] {
        last = pairing(&thetas, t)?;
        drift = drift.max((&last - &theta).norm());
    }
    let scale = theta.norm().max(1.0);
    if drift > tol * scale {
        return Err(Error::NotConstant(drift));
    }
    let sigma = linalg::min_singular(&theta);
    if sigma <= tol * scale {
        return Err(Error::NotInvertible(sigma));
    }
    let diff = &theta - canonical_theta(k);
    let blocks = BlockResiduals {
        recessive: (last.view((0, 0), (k, k)).into_owned()).norm(),
        upper: diff.view((0, k), (k, k)).norm(),
        lower: diff.view((k, 0), (k, k)).norm(),
        hat: diff.view((k, k), (k, k)).norm(),
    };
    let skew_defect = (&theta + theta.adjoint()).norm();
    Ok(ThetaMatrix { theta, evaluation_t: t0, drift, skew_defect, blocks })
}

/// Boundary condition `M y(0) − N ((y, θⱼ)(∞))ⱼ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCondition {
    /// `d × 2n`.
    pub m: CMat,
    /// `d × (2d − 2n)`.
    pub n: CMat,
}

impl BoundaryCondition {
    pub fn d(&self) -> usize {
        self.m.nrows()
    }

    pub fn stacked(&self) -> CMat {
        let d = self.d();
        let mut out = linalg::zeros(d, self.m.ncols() + self.n.ncols());
        out.columns_mut(0, self.m.ncols()).copy_from(&self.m);
        out.columns_mut(self.m.ncols(), self.n.ncols()).copy_from(&self.n);
        out
    }

    /// `(GM, GN)`.
    pub fn left_mul(&self, g: &CMat) -> Self {
        Self { m: g * &self.m, n: g * &self.n }
    }

    /// Orthogonal projector onto the row space of `(M, N)`; equal for
    /// equivalent conditions of full rank.
    pub fn row_projector(&self) -> CMat {
        let basis = linalg::row_space(&self.stacked(), 1e-10);
        &basis * basis.adjoint()
    }

    /// Same condition up to an invertible left factor.
    pub fn equivalent(&self, other: &Self, tol: f64) -> bool {
        self.m.shape() == other.m.shape()
            && self.n.shape() == other.n.shape()
            && (self.row_projector() - other.row_projector()).norm() <= tol
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BcCheck {
    pub rank: usize,
    /// `‖MJM* − NΘᵀN*‖ / (‖M‖² + ‖N‖²‖Θ‖)`.
    pub defect: f64,
    pub holds: bool,
}

/// `rank(M, N) = d` and `MJM* − NΘᵀN* = 0`.
pub fn check_selfadjoint_bc(bc: &BoundaryCondition, theta: &CMat, d: usize, n: usize, tol: f64) -> Result<BcCheck> {
    if d < n || d > 2 * n {
        return Err(Error::ShapeMismatch(format!("d = {d} outside [{n}, {}]", 2 * n)));
    }
    let l = 2 * d - 2 * n;
    if bc.m.shape() != (d, 2 * n) || bc.n.shape() != (d, l) || theta.shape() != (l, l) {
        return Err(Error::ShapeMismatch(format!(
            "expected M {d}×{}, N {d}×{l}, Θ {l}×{l}; got M {:?}, N {:?}, Θ {:?}",
            2 * n,
            bc.m.shape(),
            bc.n.shape(),
            theta.shape()
        )));
    }
    let rank = linalg::rank(&bc.stacked(), tol);
    let lhs = &bc.m * linalg::symplectic_j(n) * bc.m.adjoint() - &bc.n * theta.transpose() * bc.n.adjoint();
    let m2 = linalg::spectral_norm(&bc.m).powi(2);
    let n2 = linalg::spectral_norm(&bc.n).powi(2) * linalg::spectral_norm(theta);
    let scale = (m2 + n2).max(f64::MIN_POSITIVE);
    let defect = linalg::spectral_norm(&lhs) / scale;
    Ok(BcCheck { rank, defect, holds: rank == d && defect <= tol })
}

pub type IntMat = Vec<Vec<i64>>;

fn int_zeros(r: usize, c: usize) -> IntMat {
    vec![vec![0; c]; r]
}

fn int_mul(a: &IntMat, b: &IntMat, inner: usize, c: usize) -> IntMat {
    let r = a.len();
    let mut out = int_zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[i][j] = (0..inner).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn int_transpose(a: &IntMat, cols: usize) -> IntMat {
    (0..cols).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

/// Rank by fraction-free elimination.
pub fn int_rank(a: &IntMat) -> usize {
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let rows = m.len();
    let cols = m.first().map(|r| r.len()).unwrap_or(0);
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m[r][col] != 0) else { continue };
        m.swap(rank, p);
        for r in rank + 1..rows {
            let (a0, b0) = (m[rank][col], m[r][col]);
            for k in col..cols {
                m[r][k] = m[r][k] * a0 - m[rank][k] * b0;
            }
            let g = m[r].iter().fold(0i128, |g, &x| gcd(g, x.abs()));
            if g > 1 {
                m[r].iter_mut().for_each(|x| *x /= g);
            }
        }
        rank += 1;
    }
    rank
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn canonical_theta_int(k: usize) -> IntMat {
    let mut m = int_zeros(2 * k, 2 * k);
    for i in 0..k {
        m[i][k + i] = 1;
        m[k + i][i] = -1;
    }
    m
}

/// `M = ((I_n, 0), (0, 0))`, `N = ((0, 0), (I_{d−n}, 0))` as integer matrices.
pub fn friedrichs_bc_int(d: usize, n: usize) -> Result<(IntMat, IntMat)> {
    if d < n || d > 2 * n {
        return Err(Error::Precondition(format!("d = {d} outside [{n}, {}]", 2 * n)));
    }
    let l = 2 * d - 2 * n;
    let mut m = int_zeros(d, 2 * n);
    let mut nn = int_zeros(d, l);
    for i in 0..n {
        m[i][i] = 1;
    }
    for j in 0..d - n {
        nn[n + j][j] = 1;
    }
    Ok((m, nn))
}

/// Largest entry of `MJM* − NΘᵀN*` and `rank(M, N)` for real integer data.
pub fn selfadjoint_defect_int(m: &IntMat, nn: &IntMat, theta: &IntMat, n: usize) -> (i64, usize) {
    let d = m.len();
    let l = theta.len();
    let mut j = int_zeros(2 * n, 2 * n);
    for i in 0..n {
        j[i][n + i] = -1;
        j[n + i][i] = 1;
    }
    let mjm = int_mul(&int_mul(m, &j, 2 * n, 2 * n), &int_transpose(m, 2 * n), 2 * n, d);
    let ntn = int_mul(&int_mul(nn, &int_transpose(theta, l), l, l), &int_transpose(nn, l), l, d);
    let mut worst = 0;
    for i in 0..d {
        for k in 0..d {
            worst = worst.max((mjm[i][k] - ntn[i][k]).abs());
        }
    }
    let stacked: IntMat = (0..d).map(|i| m[i].iter().chain(nn[i].iter()).copied().collect()).collect();
    (worst, int_rank(&stacked))
}

fn int_to_cmat(a: &IntMat, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |i, j| c(a[i][j] as f64))
}

/// The boundary condition `u(0) = 0`, `(y, θⱼ)(∞) = 0` for `j ≤ d − n`.
pub fn friedrichs_bc(d: usize, n: usize) -> Result<BoundaryCondition> {
    let (m, nn) = friedrichs_bc_int(d, n)?;
    Ok(BoundaryCondition { m: int_to_cmat(&m, d, 2 * n), n: int_to_cmat(&nn, d, 2 * d - 2 * n) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Limit {
    Zero,
    Nonzero,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct BoundaryFunctional {
    /// Mean over the last quarter.
    pub value: C64,
    /// `max |f(t) − value|` over the last quarter.
    pub drift: f64,
    pub curve: Vec<(usize, C64)>,
    pub limit: Limit,
    /// Last-quarter W-norms (squared) of `y` and `θ`.
    pub tail_norms: (f64, f64),
}

/// `(y, θ)(t)` along `[from, horizon]` and its limit read off a plateau.
pub fn boundary_functional(
    sys: &HamiltonianSystem,
    y: &Trajectory,
    theta: &Trajectory,
    horizon: usize,
    tol: f64,
) -> Result<BoundaryFunctional> {
    let from = y.start().max(theta.start());
    let to = horizon.min(y.end()).min(theta.end());
    if to <= from + 4 {
        return Err(Error::WindowTooShort(format!("common domain [{from}, {to}]")));
    }
    let curve: Vec<(usize, C64)> = (from..=to).map(|t| Ok((t, symplectic_form(y, theta, t)?))).collect::<Result<_>>()?;
    let q0 = to - (to - from) / 4;
    let tail = &curve[q0 - from..];
    let value = tail.iter().map(|p| p.1).sum::<C64>() / c(tail.len() as f64);
    let drift = tail.iter().map(|p| (p.1 - value).norm()).fold(0.0, f64::max);
    let limit = if drift >= 0.1 * tol.max(tol * value.norm()) {
        Limit::Inconclusive
    } else if value.norm() <= tol {
        Limit::Zero
    } else {
        Limit::Nonzero
    };
    let wn = |z: &Trajectory| -> Result<f64> {
        let mut s = 0.0;
        for t in q0..to.min(sys.window().end + 1) {
            let u = z.u(t)?;
            s += u.dotc(&(sys.w(t - 1) * &u)).re;
        }
        Ok(s)
    };
    Ok(BoundaryFunctional { value, drift, curve, limit, tail_norms: (wn(y)?, wn(theta)?) })
}

#[derive(Clone, Debug)]
pub struct Membership {
    pub u0: f64,
    /// Largest defect of `L₂(y) = 0` and `L₁(y) = W u′(·+1)`.
    pub maximal_residual: f64,
    pub functionals: Vec<BoundaryFunctional>,
    pub verdict: Verdict,
}

/// Checks `u(0) = 0` and `(y, θⱼ)(∞) = 0` for `j ≤ d − n`.
///
/// `y_prime` is the right side with `L₁(y)(t) = W(t)u′(t+1)`; without it the
/// test only requires `L₁(y)(t) ∈ Ran W(t)`.
pub fn membership_friedrichs(
    sys: &HamiltonianSystem,
    y: &Trajectory,
    y_prime: Option<&Trajectory>,
    ordered: &OrderedBasis,
    horizon: usize,
    tol: f64,
) -> Result<Membership> {
    let a = sys.window().start;
    let to = y.end().min(sys.window().end + 1);
    if y.start() != a {
        return Err(Error::NotMaximalDomain(format!("y must start at the window start {a}")));
    }
    let scale = y.max_norm().max(1.0);
    let mut residual: f64 = 0.0;
    for t in a..to {
        residual = residual.max(lattice::l2(sys, y, t)?.norm());
        let l1 = lattice::l1(sys, y, t)?;
        let r = match y_prime {
            Some(p) => (l1 - sys.w(t) * p.u(t + 1)?).norm(),
            None => linalg::range_residual(sys.w(t), &l1, 1e-12),
        };
        residual = residual.max(r);
    }
    let rscale = linalg::spectral_norm(sys.w(a)).max(1.0) * scale;
    if residual > 1e-8 * rscale {
        return Err(Error::NotMaximalDomain(format!("residual {residual:e}")));
    }
    let u0 = y.u(a)?.norm();
    let mut verdict = Verdict::from_bool(u0 <= tol * scale);
    let thetas = ordered.thetas();
    let mut functionals = Vec::new();
    for theta in thetas.iter().take(ordered.hat.len()) {
        let f = boundary_functional(sys, y, theta, horizon, tol)?;
        verdict = verdict.and(match f.limit {
            Limit::Zero => Verdict::Pass,
            Limit::Nonzero => Verdict::Fail,
            Limit::Inconclusive => Verdict::Inconclusive,
        });
        functionals.push(f);
    }
    Ok(Membership { u0, maximal_residual: residual, functionals, verdict })
}

/// A compactly supported element of the maximal relation: `z = y` on
/// `[a, t0]`, `z(t) = 0` for `t ≥ s0 + 1`, with right side `λz + g`.
#[derive(Clone, Debug)]
pub struct Patch {
    pub z: Trajectory,
    /// Forcing `g`; only the `u` block is used.
    pub forcing: Trajectory,
    /// `‖z(s0 + 1)‖` before it was set to zero.
    pub closing_residual: f64,
}

/// Steers the solution through `y(t0)` to zero at `s0 + 1` with forcing
/// `g(t+1) = Φ_u(t+1)α` built from the definiteness Gram on `[t0, s0]`,
/// and continues it by zero up to `until`.
pub fn compact_patch(
    sys: &HamiltonianSystem,
    lambda: f64,
    y: &Trajectory,
    patch_window: LatticeWindow,
    until: usize,
    tol: f64,
) -> Result<Patch> {
    let n = sys.n();
    let a = sys.window().start;
    let (t0, s0) = (patch_window.start, patch_window.end);
    if t0 < a || s0 + 1 > until || y.start() > a {
        return Err(Error::PatchInfeasible(format!("patch window [{t0}, {s0}] does not fit [{a}, {until}]")));
    }
    let report = lattice::definiteness_check(sys, patch_window, lambda, tol)?;
    if !report.holds {
        return Err(Error::PatchInfeasible(format!(
            "definiteness fails on [{t0}, {s0}] (min eigenvalue {:e})",
            report.min_eigenvalue
        )));
    }
    let lam = c(lambda);
    let phi = propagation::solve_ivp(
        sys,
        lam,
        t0,
        &linalg::identity(2 * n),
        propagation::Direction::Forward,
        Some(s0 + 1),
    )?;
    let y0 = y.y(t0)?.clone();
    let rhs = linalg::apply_j(&linalg::col(&y0));
    let ginv = linalg::inverse(&report.gram).ok_or_else(|| Error::PatchInfeasible("singular Gram".into()))?;
    let alpha = -(ginv * rhs);
    let mut zv: Vec<CVec> = (a..=t0).map(|t| y.y(t).unwrap().clone()).collect();
    let mut gv: Vec<CVec> = vec![CVec::zeros(2 * n); t0 - a + 1];
    for t in t0..=s0 {
        let g = phi.u(t + 1)? * &alpha;
        let prev = zv.last().unwrap();
        let (u, v) = (prev.rows(0, n).into_owned(), prev.rows(n, n).into_owned());
        let u1 = sys.a_tilde(t)? * (&u + sys.b(t) * &v);
        let v1 = (linalg::identity(n) - sys.a(t).adjoint()) * &v + sys.c_tilde(t, lam) * &u1 - sys.w(t) * g.column(0);
        let mut next = CVec::zeros(2 * n);
        next.rows_mut(0, n).copy_from(&u1);
        next.rows_mut(n, n).copy_from(&v1);
        zv.push(next);
        let mut gg = CVec::zeros(2 * n);
        gg.rows_mut(0, n).copy_from(&g.column(0));
        gv.push(gg);
    }
    let closing_residual = zv.last().unwrap().norm();
    *zv.last_mut().unwrap() = CVec::zeros(2 * n);
    zv.extend((s0 + 2..=until).map(|_| CVec::zeros(2 * n)));
    gv.extend((s0 + 2..=until).map(|_| CVec::zeros(2 * n)));
    Ok(Patch { z: Trajectory::new(a, zv)?, forcing: Trajectory::new(a, gv)?, closing_residual })
}

#[derive(Clone, Debug)]
pub struct PatchedColumn {
    pub patch: Patch,
    /// `y̌ = ỹ − z`.
    pub y_check: Trajectory,
    /// `λy̌ − g`.
    pub y_check_prime: Trajectory,
    pub membership: Membership,
    /// Membership of the unpatched `ỹ` (right side `λỹ`).
    pub unpatched: Membership,
}

#[derive(Clone, Debug)]
pub struct RecessiveCharacterization {
    pub columns: Vec<PatchedColumn>,
    pub verdict: Verdict,
}

/// Splits every recessive column as `ỹⱼ = zⱼ + y̌ⱼ` with `zⱼ` compactly
/// supported and checks that `y̌ⱼ` satisfies the Friedrichs conditions.
pub fn verify_recessive_characterization(
    sys: &HamiltonianSystem,
    lambda: f64,
    ordered: &OrderedBasis,
    patch_window: LatticeWindow,
    horizon: usize,
    tol: f64,
) -> Result<RecessiveCharacterization> {
    let until = horizon.min(ordered.end());
    let lam = c(lambda);
    let mut columns = Vec::with_capacity(ordered.n);
    let mut verdict = Verdict::Pass;
    for j in 0..ordered.n {
        let yt = ordered.recessive.column(j).slice(ordered.start(), until)?;
        let patch = compact_patch(sys, lambda, &yt, patch_window, until, tol)?;
        let y_check = yt.sub(&patch.z)?;
        let y_check_prime = y_check.scale(lam).sub(&patch.forcing)?;
        let membership = membership_friedrichs(sys, &y_check, Some(&y_check_prime), ordered, horizon, tol)?;
        let unpatched = membership_friedrichs(sys, &yt, Some(&yt.scale(lam)), ordered, horizon, tol)?;
        verdict = verdict.and(membership.verdict);
        columns.push(PatchedColumn { patch, y_check, y_check_prime, membership, unpatched });
    }
    Ok(RecessiveCharacterization { columns, verdict })
}

/// `B = I`, `C = 0`, `W(t) = ρᵗ I`: all solutions are square summable.
pub fn limit_circle_family(n: usize, window: LatticeWindow, rho: f64) -> Result<HamiltonianSystem> {
    let len = window.len();
    let id = linalg::identity(n);
    let z = linalg::zeros(n, n);
    HamiltonianSystem::new(
        n,
        window,
        vec![z.clone(); len],
        vec![id.clone(); len],
        vec![z; len],
        window.iter().map(|t| &id * c(rho.powi(t as i32))).collect(),
    )
}
