//! Prepared bases, the `S` series, and recessive solutions.

use crate::error::{Error, Result};
use crate::lattice::{symplectic_form, ConjoinedBasis, HamiltonianSystem};
use crate::linalg::{self, CMat};
use crate::propagation::{self, Direction};

/// `U(t)` counts as invertible when `σ_min > 1e-10 σ_max`.
pub const U_REL_TOL: f64 = 1e-10;

/// Raw magnitudes above this stop the forward sweep of the S-sum construction.
pub const OVERFLOW_GUARD: f64 = 1e150;

pub fn checked_inverse(u: &CMat, t: usize) -> Result<CMat> {
    let sigma = linalg::relative_min_singular(u);
    if !(sigma > U_REL_TOL) {
        return Err(Error::SingularU { t, sigma });
    }
    linalg::inverse(u).ok_or(Error::SingularU { t, sigma })
}

/// `‖U*V − V*U‖ / max(1, ‖U‖‖V‖)` of one `2n × k` block.
pub fn prepared_defect(y: &CMat) -> f64 {
    let n = y.nrows() / 2;
    let u = y.rows(0, n).into_owned();
    let v = y.rows(n, n).into_owned();
    let uv = u.adjoint() * &v;
    let scale = (linalg::spectral_norm(&u) * linalg::spectral_norm(&v)).max(1.0);
    linalg::hermitian_defect(&uv) / scale
}

/// `U*V` Hermitian at the first stored time and, redundantly, at every other.
pub fn is_prepared(y: &ConjoinedBasis, tol: f64) -> bool {
    y.values().iter().all(|m| prepared_defect(m) <= tol)
}

/// `S(t) = Σ_{s=t1}^{t−1} U⁻¹(s+1) Ã(s) B(s) U⁻*(s)` on `[t1, t2]`.
#[derive(Clone, Debug)]
pub struct SAccumulator {
    pub t1: usize,
    pub values: Vec<CMat>,
    pub increments: Vec<CMat>,
    /// Every increment is PSD to within the tolerance.
    pub monotone: bool,
    pub hermitian_defect: f64,
    pub min_increment_eig: f64,
    /// Smallest relative singular value of `U` seen on `[t1, t2]`.
    pub min_u_sigma: f64,
}

impl SAccumulator {
    pub fn t2(&self) -> usize {
        self.t1 + self.values.len() - 1
    }

    pub fn value(&self, t: usize) -> &CMat {
        &self.values[t - self.t1]
    }
}

fn increment(sys: &HamiltonianSystem, s: usize, uinv: &CMat, uinv_next: &CMat) -> Result<CMat> {
    Ok(uinv_next * sys.a_tilde(s)? * sys.b(s) * uinv.adjoint())
}

fn u_inverses(y: &ConjoinedBasis, from: usize, to: usize) -> Result<(Vec<CMat>, f64)> {
    let mut out = Vec::with_capacity(to - from + 1);
    let mut min_sigma = f64::INFINITY;
    for t in from..=to {
        let u = y.u(t)?;
        min_sigma = min_sigma.min(linalg::relative_min_singular(&u));
        out.push(checked_inverse(&u, t)?);
    }
    Ok((out, min_sigma))
}

fn accumulate(increments: &[CMat], n: usize) -> Vec<CMat> {
    let mut acc = linalg::CompensatedSum::new(n, n);
    let mut values = Vec::with_capacity(increments.len() + 1);
    values.push(acc.value().clone());
    for d in increments {
        acc.add(d);
        values.push(acc.value().clone());
    }
    values
}

pub fn s_sum(sys: &HamiltonianSystem, y: &ConjoinedBasis, t1: usize, t2: usize, tol: f64) -> Result<SAccumulator> {
    if t2 < t1 {
        return Err(Error::Invalid(format!("s_sum needs t1 <= t2, got {t1} > {t2}")));
    }
    sys.check_steps(t1, t2)?;
    let n = y.n();
    let (inv, min_u_sigma) = u_inverses(y, t1, t2)?;
    let mut increments = Vec::with_capacity(t2 - t1);
    let mut hermitian_defect: f64 = 0.0;
    let mut min_increment_eig = f64::INFINITY;
    let mut monotone = true;
    for s in t1..t2 {
        let d = increment(sys, s, &inv[s - t1], &inv[s + 1 - t1])?;
        let scale = linalg::spectral_norm(&d);
        hermitian_defect = hermitian_defect.max(linalg::hermitian_defect(&d));
        let e = linalg::min_eigenvalue(&d);
        min_increment_eig = min_increment_eig.min(e);
        if e < -tol * scale.max(f64::MIN_POSITIVE) && scale > 0.0 {
            monotone = false;
        }
        increments.push(d);
    }
    let values = accumulate(&increments, n);
    Ok(SAccumulator { t1, values, increments, monotone, hermitian_defect, min_increment_eig, min_u_sigma })
}

fn last_quarter_start(t1: usize, horizon: usize) -> usize {
    horizon - (horizon - t1) / 4
}

/// Norm of the series tail over the last quarter of `[t1, horizon]`.
pub fn dominance_tail(sys: &HamiltonianSystem, y: &ConjoinedBasis, t1: usize, horizon: usize) -> Result<f64> {
    let acc = s_sum(sys, y, t1, horizon, f64::INFINITY)?;
    let from = last_quarter_start(t1, horizon);
    Ok(linalg::spectral_norm(&(acc.value(horizon) - acc.value(from))))
}

/// Cauchy test of the `S` series on the last quarter of `[t1, horizon]`.
pub fn classify_dominant(
    sys: &HamiltonianSystem,
    y: &ConjoinedBasis,
    t1: usize,
    horizon: usize,
    tail_tol: f64,
) -> Result<bool> {
    Ok(dominance_tail(sys, y, t1, horizon)? <= tail_tol)
}

/// Extrapolated `lim S(t)` from partial sums `partial[t − ta]` on `[ta, h]`,
/// sampled at `h/2 … h` relative to `ta`.
fn series_limit(partial: &[CMat], ta: usize, h: usize) -> linalg::Extrapolated {
    let span = h - ta;
    let nodes: Vec<usize> = (4..=8).map(|k| ta + k * span / 8).collect();
    let xs: Vec<f64> = nodes.iter().map(|&t| 1.0 / t.max(1) as f64).collect();
    let ys: Vec<CMat> = nodes.iter().map(|&t| partial[t - ta].clone()).collect();
    linalg::extrapolate_limit(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    SSum,
    BvpLimit,
    DominantTail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    /// Too few samples to judge.
    Unknown,
    NotApplicable,
}

#[derive(Clone, Debug)]
pub struct RecessiveDiagnostics {
    pub horizon: usize,
    /// Sweep stopped here because the raw basis grew past the overflow guard.
    pub clipped_at: Option<usize>,
    /// Eigenvalue range of `S₁(t) = I − (I + S(t))⁻¹` over the sweep.
    pub s1_eig_range: Option<(f64, f64)>,
    /// `max ‖S₁(t) − (I − (I + S(t))⁻¹)‖`.
    pub s1_identity_residual: Option<f64>,
    /// Eigenvalue range of the tail sums `S₂(t)`.
    pub s2_eig_range: Option<(f64, f64)>,
    /// Norm of the extrapolated part of the series beyond the horizon.
    pub tail_remainder: f64,
    pub tail_uncertainty: f64,
    /// `(s_k, max_t ‖Y(t, s_{k+1}) − Y(t, s_k)‖)` on the comparison window.
    pub convergence_curve: Vec<(usize, f64)>,
    pub convergence: Convergence,
    pub min_u_sigma: f64,
}

impl RecessiveDiagnostics {
    fn new(horizon: usize) -> Self {
        Self {
            horizon,
            clipped_at: None,
            s1_eig_range: None,
            s1_identity_residual: None,
            s2_eig_range: None,
            tail_remainder: 0.0,
            tail_uncertainty: 0.0,
            convergence_curve: Vec::new(),
            convergence: Convergence::NotApplicable,
            min_u_sigma: f64::NAN,
        }
    }

    /// `0 ⪯ S₁ ≺ I` along the sweep.
    pub fn s1_bounds_hold(&self, tol: f64) -> bool {
        self.s1_eig_range.is_some_and(|(lo, hi)| lo >= -tol && hi < 1.0)
    }

    /// `0 ≺ S₂ ≺ I` along the sweep.
    pub fn s2_bounds_hold(&self) -> bool {
        self.s2_eig_range.is_some_and(|(lo, hi)| lo > 0.0 && hi < 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct RecessiveResult {
    pub basis: ConjoinedBasis,
    pub construction: Construction,
    pub t1: usize,
    pub lambda: f64,
    pub diagnostics: RecessiveDiagnostics,
}

/// Recessive solution from a dominant one via the tail sums
/// `S(t) = Σ_{s=t}^{∞} U⁻¹(s+1)ÃBU⁻*(s)`, normalized so that `U₀(t1) = I`.
/// Returned on `[t1, horizon]`.
pub fn dominant_to_recessive(
    sys: &HamiltonianSystem,
    lambda: f64,
    y_dom: &ConjoinedBasis,
    t1: usize,
    horizon: usize,
    tail_tol: f64,
) -> Result<RecessiveResult> {
    if horizon < t1 + 16 {
        return Err(Error::WindowTooShort(format!("horizon {horizon} needs at least 16 steps past t1={t1}")));
    }
    let n = y_dom.n();
    let acc = s_sum(sys, y_dom, t1, horizon, 1e-10)?;
    let tail = linalg::spectral_norm(&(acc.value(horizon) - acc.value(last_quarter_start(t1, horizon))));
    if tail > tail_tol {
        return Err(Error::NotDominant { tail, tol: tail_tol });
    }
    let limit = series_limit(&acc.values, t1, horizon);
    let scale = linalg::spectral_norm(&limit.value).max(1.0);
    if limit.uncertainty > tail_tol * scale {
        return Err(Error::TailNotConverged { change: limit.uncertainty });
    }
    let remainder = &limit.value - acc.value(horizon);
    let mut diagnostics = RecessiveDiagnostics::new(horizon);
    diagnostics.tail_remainder = linalg::spectral_norm(&remainder);
    diagnostics.tail_uncertainty = limit.uncertainty;
    diagnostics.min_u_sigma = acc.min_u_sigma;
    let tails = backward_tails(&acc.increments, &remainder, n);
    let (inv, _) = u_inverses(y_dom, t1, horizon)?;
    let mut values = Vec::with_capacity(horizon - t1 + 1);
    for t in t1..=horizon {
        let i = t - t1;
        let s = &tails[i];
        let u0 = y_dom.u(t)? * s;
        let v0 = y_dom.v(t)? * s - inv[i].adjoint();
        values.push(stack(&u0, &v0));
    }
    let g = checked_inverse(&values[0].rows(0, n).into_owned(), t1)?;
    let values = values.into_iter().map(|m| m * &g).collect();
    Ok(RecessiveResult {
        basis: ConjoinedBasis::new(t1, values)?,
        construction: Construction::DominantTail,
        t1,
        lambda,
        diagnostics,
    })
}

/// `T(t) = R + Σ_{s=t}^{h−1} D(s)` accumulated from the far end, so small tails
/// keep their relative accuracy.
fn backward_tails(increments: &[CMat], remainder: &CMat, n: usize) -> Vec<CMat> {
    let mut acc = linalg::CompensatedSum::new(n, n);
    acc.add(remainder);
    let mut out = vec![acc.value().clone()];
    for d in increments.iter().rev() {
        acc.add(d);
        out.push(linalg::hermitian_part(acc.value()));
    }
    out.reverse();
    out
}

fn stack(u: &CMat, v: &CMat) -> CMat {
    let n = u.nrows();
    let mut m = linalg::zeros(2 * n, u.ncols());
    m.rows_mut(0, n).copy_from(u);
    m.rows_mut(n, n).copy_from(v);
    m
}

fn eig_range(ms: &[CMat]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in ms {
        let (vals, _) = linalg::hermitian_eigen(m);
        lo = lo.min(vals[0]);
        hi = hi.max(*vals.last().unwrap());
    }
    (lo, hi)
}

/// The constructive existence proof, run numerically.
///
/// Starts from `Y(a) = (0; I)` at the window start `a`, forms
/// `Y₁ = (U(I+S); V(I+S) + U⁻*)`, takes the tail sums `S₂` of `Y₁`, sets
/// `Y₂ = (U₁S₂; V₁S₂ − U₁⁻*)` and normalizes by `U₂(t1)`. Returned on
/// `[a, horizon]`, or up to the overflow clip point.
pub fn construct_recessive(
    sys: &HamiltonianSystem,
    lambda0: f64,
    t1: usize,
    horizon: usize,
    tail_tol: f64,
) -> Result<RecessiveResult> {
    let n = sys.n();
    let a = sys.window().start;
    let ta = a + 1;
    if t1 < ta {
        return Err(Error::Invalid(format!("t1={t1} must be at least window start + 1 = {ta}")));
    }
    if horizon > sys.window().end + 1 {
        return Err(Error::OutOfDomain { t: horizon, start: a, end: sys.window().end + 1 });
    }
    let lam = linalg::c(lambda0);
    let mut init = linalg::zeros(2 * n, n);
    init.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
    let mut raw = vec![init];
    let mut clipped_at = None;
    for t in a..horizon {
        let next = propagation::step_forward(sys, t, lam, raw.last().unwrap())?;
        if !(next.norm() <= OVERFLOW_GUARD) {
            clipped_at = Some(t);
            break;
        }
        raw.push(next);
    }
    let h = a + raw.len() - 1;
    if h < ta + 16 || t1 > h - 16 {
        return Err(Error::WindowTooShort(format!(
            "effective horizon {h} leaves fewer than 16 steps past t1={t1}"
        )));
    }
    let y = ConjoinedBasis::new(a, raw)?;
    let acc = s_sum(sys, &y, ta, h, 1e-10)?;
    let (uinv, min_u_sigma) = u_inverses(&y, ta, h)?;

    let mut y1 = Vec::with_capacity(h - ta + 1);
    let mut u1inv = Vec::with_capacity(h - ta + 1);
    let mut s1_formula = Vec::with_capacity(h - ta + 1);
    for t in ta..=h {
        let i = t - ta;
        let ips = linalg::identity(n) + acc.value(t);
        let u1 = y.u(t)? * &ips;
        let v1 = y.v(t)? * &ips + uinv[i].adjoint();
        u1inv.push(checked_inverse(&u1, t)?);
        y1.push(stack(&u1, &v1));
        let ips_inv = linalg::inverse(&ips).ok_or(Error::SingularU { t, sigma: 0.0 })?;
        s1_formula.push(linalg::identity(n) - ips_inv);
    }
    let mut inc1 = Vec::with_capacity(h - ta);
    for s in ta..h {
        inc1.push(increment(sys, s, &u1inv[s - ta], &u1inv[s + 1 - ta])?);
    }
    let s1 = accumulate(&inc1, n);
    let s1_identity_residual =
        s1.iter().zip(&s1_formula).map(|(x, y)| linalg::spectral_norm(&(x - y))).fold(0.0, f64::max);

    let limit = series_limit(&s1, ta, h);
    let scale = linalg::spectral_norm(&limit.value).max(1.0);
    if limit.uncertainty > tail_tol * scale {
        return Err(Error::TailNotConverged { change: limit.uncertainty });
    }
    let remainder = &limit.value - &s1[h - ta];
    let s2 = backward_tails(&inc1, &remainder, n);

    let mut y2 = Vec::with_capacity(h - ta + 1);
    for t in ta..=h {
        let i = t - ta;
        let u1 = y1[i].rows(0, n).into_owned();
        let v1 = y1[i].rows(n, n).into_owned();
        y2.push(stack(&(u1 * &s2[i]), &(v1 * &s2[i] - u1inv[i].adjoint())));
    }
    let g = checked_inverse(&y2[t1 - ta].rows(0, n).into_owned(), t1)?;
    let mut values: Vec<CMat> = y2.into_iter().map(|m| m * &g).collect();
    let first = propagation::step_backward(sys, a, lam, &values[0])?;
    values.insert(0, first);

    let mut diagnostics = RecessiveDiagnostics::new(horizon);
    diagnostics.clipped_at = clipped_at;
    diagnostics.s1_eig_range = Some(eig_range(&s1));
    diagnostics.s1_identity_residual = Some(s1_identity_residual);
    diagnostics.s2_eig_range = Some(eig_range(&s2));
    diagnostics.tail_remainder = linalg::spectral_norm(&remainder);
    diagnostics.tail_uncertainty = limit.uncertainty;
    diagnostics.min_u_sigma = min_u_sigma;
    Ok(RecessiveResult {
        basis: ConjoinedBasis::new(a, values)?,
        construction: Construction::SSum,
        t1,
        lambda: lambda0,
        diagnostics,
    })
}

/// Limit of the two-point solutions `Y(·, s)` with `U(t1, s) = I`,
/// `U(s, s) = 0` as `s` runs through `s_list`.
///
/// The limit is extrapolated entrywise in `1/(s − t1)` from the last (up to
/// five) samples and returned on `[window start, s_list[0]]`. With a single
/// `s` the raw solution is returned on `[window start, s]` and the
/// convergence flag is [`Convergence::Unknown`].
pub fn recessive_via_bvp_limit(
    sys: &HamiltonianSystem,
    lambda0: f64,
    t1: usize,
    s_list: &[usize],
    tol: f64,
) -> Result<RecessiveResult> {
    let Some(&s_first) = s_list.first() else {
        return Err(Error::Invalid("empty s_list".into()));
    };
    if s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("s_list must be strictly increasing".into()));
    }
    let lam = linalg::c(lambda0);
    let lo = sys.window().start;
    let s_last = *s_list.last().unwrap();
    let mut diagnostics = RecessiveDiagnostics::new(s_last);
    if s_list.len() == 1 {
        let basis = propagation::solve_two_point_bvp_from(sys, lam, t1, s_first, lo, 1e-12)?;
        diagnostics.convergence = Convergence::Unknown;
        return Ok(RecessiveResult { basis, construction: Construction::BvpLimit, t1, lambda: lambda0, diagnostics });
    }
    let mut samples: Vec<Vec<CMat>> = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let y = propagation::solve_two_point_bvp_from(sys, lam, t1, s, lo, 1e-12)?;
        samples.push(y.slice(lo, s_first)?.values().to_vec());
    }
    let cmp = t1 - lo..=s_first - lo;
    let mut curve = Vec::with_capacity(s_list.len() - 1);
    for k in 0..s_list.len() - 1 {
        let d = cmp.clone().map(|i| (&samples[k + 1][i] - &samples[k][i]).norm()).fold(0.0, f64::max);
        curve.push((s_list[k], d));
    }
    let noise = 1e3 * f64::EPSILON * samples.last().unwrap().iter().map(|m| m.norm()).fold(1.0, f64::max);
    if curve.windows(2).any(|w| w[1].1 > w[0].1 && w[1].1 > noise) {
        return Err(Error::NonConvergent(format!("difference curve is not decreasing: {curve:?}")));
    }
    let used = s_list.len().min(5);
    let first_used = s_list.len() - used;
    let xs: Vec<f64> = s_list[first_used..].iter().map(|&s| 1.0 / (s - t1) as f64).collect();
    let mut values = Vec::with_capacity(s_first - lo + 1);
    let mut uncertainty: f64 = 0.0;
    let mut remainder: f64 = 0.0;
    for i in 0..=s_first - lo {
        let ys: Vec<CMat> = samples[first_used..].iter().map(|v| v[i].clone()).collect();
        let e = linalg::extrapolate_limit(&xs, &ys);
        uncertainty = uncertainty.max(e.uncertainty);
        remainder = remainder.max((&e.value - ys.last().unwrap()).norm());
        values.push(e.value);
    }
    let scale = values.iter().map(|m| m.norm()).fold(1.0, f64::max);
    if uncertainty > tol * scale {
        return Err(Error::NonConvergent(format!("extrapolated limit uncertain to {uncertainty:e}")));
    }
    diagnostics.convergence_curve = curve;
    diagnostics.convergence = Convergence::Converged;
    diagnostics.tail_remainder = remainder;
    diagnostics.tail_uncertainty = uncertainty;
    Ok(RecessiveResult {
        basis: ConjoinedBasis::new(lo, values)?,
        construction: Construction::BvpLimit,
        t1,
        lambda: lambda0,
        diagnostics,
    })
}

/// The two-point solution `Y(·, s)` itself on `[window start, s]`: the
/// recessive solution to within the decay of the dominant mode, usable at
/// horizons where the S-sum sweep would overflow.
pub fn recessive_by_shooting(sys: &HamiltonianSystem, lambda0: f64, t1: usize, s: usize) -> Result<RecessiveResult> {
    let basis = propagation::solve_two_point_bvp(sys, linalg::c(lambda0), t1, s, 1e-12)?;
    let mut diagnostics = RecessiveDiagnostics::new(s);
    diagnostics.convergence = Convergence::Unknown;
    Ok(RecessiveResult { basis, construction: Construction::BvpLimit, t1, lambda: lambda0, diagnostics })
}

#[derive(Clone, Debug)]
pub struct DecayCurve {
    pub points: Vec<(usize, f64)>,
    /// The constant `Y_rec* J Y_other`.
    pub wronskian: CMat,
    pub wronskian_drift: f64,
    pub final_value: f64,
    pub eventually_decreasing: bool,
}

impl DecayCurve {
    pub fn passes(&self, tol: f64) -> bool {
        self.final_value <= tol && self.eventually_decreasing
    }
}

/// `t ↦ ‖U_other⁻¹(t) U_rec(t)‖` on the common domain up to `horizon`.
pub fn verify_recessive(
    y_rec: &ConjoinedBasis,
    y_other: &ConjoinedBasis,
    horizon: usize,
    tol: f64,
) -> Result<DecayCurve> {
    let from = y_rec.start().max(y_other.start());
    let to = horizon.min(y_rec.end()).min(y_other.end());
    if to <= from {
        return Err(Error::WindowTooShort(format!("common domain [{from}, {to}] is empty")));
    }
    let wr = |t: usize| -> Result<CMat> { Ok(y_rec.y(t)?.adjoint() * linalg::apply_j(y_other.y(t)?)) };
    let w0 = wr(from)?;
    let mut drift: f64 = 0.0;
    for t in from..=to {
        drift = drift.max((wr(t)? - &w0).norm());
    }
    let scale = w0.norm().max(1.0);
    if drift > tol * scale {
        return Err(Error::NotConstant(drift));
    }
    let sigma = linalg::min_singular(&w0);
    if sigma <= tol * scale {
        return Err(Error::NotInvertible(sigma));
    }
    let mut points = Vec::with_capacity(to - from + 1);
    for t in from..=to {
        let uo = y_other.u(t)?;
        if linalg::relative_min_singular(&uo) <= U_REL_TOL {
            continue;
        }
        let inv = linalg::inverse(&uo).expect("checked above");
        points.push((t, linalg::spectral_norm(&(inv * y_rec.u(t)?))));
    }
    let final_value = points.last().map(|p| p.1).unwrap_or(f64::INFINITY);
    let half = points.len() / 2;
    let eventually_decreasing = points.len() >= 2 && points[half..].windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    Ok(DecayCurve { points, wronskian: w0, wronskian_drift: drift, final_value, eventually_decreasing })
}

/// `Y = (U₀(P + S₀Q); V₀(P + S₀Q) + U₀⁻*Q)` relative to a prepared `Y₀`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub p: CMat,
    pub q: CMat,
    /// `max_t ‖Q(t) − Q(t1)‖` with `Q(t) = U₀*V − V₀*U`.
    pub q_drift: f64,
    /// Largest relative reconstruction error of `Y` over the window.
    pub residual: f64,
    /// `P*Q` Hermitian to within the tolerance.
    pub pq_hermitian: bool,
}

pub fn decompose(
    sys: &HamiltonianSystem,
    y0: &ConjoinedBasis,
    y: &ConjoinedBasis,
    t1: usize,
    t2: usize,
    tol: f64,
) -> Result<Decomposition> {
    let acc = s_sum(sys, y0, t1, t2, f64::INFINITY)?;
    let u0inv = checked_inverse(&y0.u(t1)?, t1)?;
    let p = &u0inv * y.u(t1)?;
    let q_at = |t: usize| -> Result<CMat> { Ok(y0.u(t)?.adjoint() * y.v(t)? - y0.v(t)?.adjoint() * y.u(t)?) };
    let q = q_at(t1)?;
    let mut q_drift: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for t in t1..=t2 {
        q_drift = q_drift.max(linalg::spectral_norm(&(q_at(t)? - &q)));
        let u0 = y0.u(t)?;
        let k = &p + acc.value(t) * &q;
        let u = &u0 * &k;
        let v = y0.v(t)? * &k + checked_inverse(&u0, t)?.adjoint() * &q;
        let target = y.y(t)?;
        let err = (stack(&u, &v) - target).norm() / target.norm().max(1.0);
        residual = residual.max(err);
    }
    let pq = p.adjoint() * &q;
    let pq_hermitian = linalg::hermitian_defect(&pq) <= tol * linalg::spectral_norm(&pq).max(1.0);
    Ok(Decomposition { p, q, q_drift, residual, pq_hermitian })
}

/// `(y_i, y_j)(t)` for all column pairs at `t`.
pub fn pairing_matrix(y: &ConjoinedBasis, t: usize) -> Result<CMat> {
    let cols = y.columns();
    let k = cols.len();
    let mut m = linalg::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = symplectic_form(&cols[j], &cols[i], t)?;
        }
    }
    Ok(m)
}

/// Solve from `(0; I)` at the window start; the basis used by the existence
/// proof.
pub fn principal_at_start(sys: &HamiltonianSystem, lambda: f64, until: usize) -> Result<ConjoinedBasis> {
    let n = sys.n();
    let mut init = linalg::zeros(2 * n, n);
    init.view_mut((n, 0), (n, n)).copy_from(&linalg::identity(n));
    propagation::solve_ivp(sys, linalg::c(lambda), sys.window().start, &init, Direction::Forward, Some(until))
}
