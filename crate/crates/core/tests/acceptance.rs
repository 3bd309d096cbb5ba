//! One PASS/FAIL line per acceptance criterion. Exits nonzero on any FAIL.

mod common;

use std::time::Instant;

use common::{cmat, hermitian, psd, random_system, roots, win, Shape};
use dhs_core::conjoined::{
    construct_recessive, decompose, is_prepared, principal_at_start, recessive_via_bvp_limit, verify_recessive,
};
use dhs_core::disconjugacy::{assemble_form, is_disconjugate, lower_bound_estimate, quadratic_form_value, weighted_norm_sq};
use dhs_core::extension::{
    canonical_theta, canonical_theta_int, check_selfadjoint_bc, estimate_deficiency_index, friedrichs_bc,
    friedrichs_bc_int, limit_circle_family, order_basis, selfadjoint_defect_int, theta_matrix,
    verify_recessive_characterization, BoundaryCondition, Verdict,
};
use dhs_core::lattice::lagrange_identity_check;
use dhs_core::linalg::{self, c, CMat, CVec, C64};
use dhs_core::propagation::{accumulated_symplectic_residual, solve_ivp, Direction};
use dhs_core::{HamiltonianSystem, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { pass: false, detail: detail.into() }
}

macro_rules! tryo {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return fail(format!("{}: {e}", stringify!($e))),
        }
    };
}

fn criterion_1() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let steps = 10_000;
    let (mut step_max, mut acc_sum, mut acc_fund): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..100 {
        let n = 1 + k % 3;
        let lambda = rng.gen_range(-2.0..2.0);
        let sys = random_system(&mut rng, n, win(0, steps - 1), Shape::default(), k % 2 == 0);
        let drift = tryo!(accumulated_symplectic_residual(&sys, lambda, 0, steps, true));
        step_max = step_max.max(drift.per_step_max);
        acc_sum = acc_sum.max(drift.per_step_sum);
        acc_fund = acc_fund.max(drift.fundamental_relative);
    }
    let secs = clock.elapsed().as_secs_f64();
    let pass = step_max <= 1e-12 && acc_sum <= 1e-8 && acc_fund <= 1e-8 && secs < 10.0;
    outcome(
        pass,
        format!(
            "per-step max {step_max:.2e} (≤1e-12), accumulated sum {acc_sum:.2e} and fundamental {acc_fund:.2e} over 1e4 steps (≤1e-8), {secs:.2}s (<10s)"
        ),
    )
}

fn random_trajectory(rng: &mut ChaCha8Rng, n: usize, start: usize, end: usize) -> Trajectory {
    let values = (start..=end)
        .map(|_| CVec::from_fn(2 * n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        .collect();
    Trajectory::new(start, values).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = 1 + k % 3;
        let sys = random_system(&mut rng, n, win(0, 60), Shape::default(), false);
        let len = rng.gen_range(2..=50);
        let s = rng.gen_range(0..=60 - len);
        let e = s + len - 1;
        let y1 = random_trajectory(&mut rng, n, s, e + 1);
        let y2 = random_trajectory(&mut rng, n, s, e + 1);
        worst = worst.max(tryo!(lagrange_identity_check(&sys, &y1, &y2, s, e)));
    }
    outcome(worst <= 1e-10, format!("max residual {worst:.2e} over 1000 pairs (≤1e-10)"))
}

/// Closed-form recessive columns normalized at `t1 = 1`.
fn closed_recessive(lambda: f64, t: usize) -> (f64, f64) {
    if lambda == 0.0 {
        (1.0, 0.0)
    } else {
        let (r, _) = roots();
        let u = r.powi(t as i32 - 1);
        (u, u * (r - 1.0))
    }
}

fn criterion_3() -> Outcome {
    let clock = Instant::now();
    let sys = HamiltonianSystem::free(win(0, 260));
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for lambda in [0.0, -1.0] {
        let s_sum = tryo!(construct_recessive(&sys, lambda, 1, 200, 1e-8)).basis;
        let bvp = tryo!(recessive_via_bvp_limit(&sys, lambda, 1, &[200, 210, 220, 230, 240], 1e-7)).basis;
        let mut pair = [0.0f64; 3];
        for t in 1..=40 {
            let (u, v) = closed_recessive(lambda, t);
            let exact = CMat::from_column_slice(2, 1, &[c(u), c(v)]);
            let a = tryo!(s_sum.y(t));
            let b = tryo!(bvp.y(t));
            pair[0] = pair[0].max((a - &exact).norm());
            pair[1] = pair[1].max((b - &exact).norm());
            pair[2] = pair[2].max((a - b).norm());
        }
        notes.push(format!("λ={lambda}: S-sum/closed {:.1e}, limit/closed {:.1e}, S-sum/limit {:.1e}", pair[0], pair[1], pair[2]));
        worst = pair.iter().fold(worst, |m, &x| m.max(x));
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(worst <= 1e-7 && secs < 5.0, format!("{} (≤1e-7), {secs:.2}s (<5s)", notes.join("; ")))
}

fn criterion_4() -> Outcome {
    let sys = HamiltonianSystem::free(win(0, 260));
    let (rm, rp) = roots();
    let mut worst: f64 = 0.0;
    for lambda in [0.0, -1.0] {
        let rec = tryo!(construct_recessive(&sys, lambda, 1, 200, 1e-8)).basis;
        let other = tryo!(principal_at_start(&sys, lambda, 200));
        let curve = tryo!(verify_recessive(&rec, &other, 40, 1e-8));
        let at = |t: usize| curve.points.iter().find(|p| p.0 == t).map(|p| p.1);
        let Some(base) = at(10) else { return fail("no curve point at t=10") };
        for t in 10..=40 {
            let Some(val) = at(t) else { return fail(format!("no curve point at t={t}")) };
            let (measured, model) = if lambda == 0.0 {
                (val, 1.0 / t as f64)
            } else {
                (val / base, (rm / rp).powi(t as i32 - 10))
            };
            worst = worst.max((measured / model - 1.0).abs());
        }
    }
    outcome(worst <= 0.05, format!("max relative deviation {worst:.2e} on t∈[10,40] (≤5%)"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut fails, mut witnesses) = (0, 0, 0);
    let mut worst_witness = f64::NEG_INFINITY;
    for k in 0..50 {
        let n = 1 + k % 2;
        let len = rng.gen_range(3..=10);
        let shape = Shape { b_shift: 0.2, full_rank_b: k % 4 != 3, ..Shape::default() };
        let sys = random_system(&mut rng, n, win(0, len + 2), shape, k % 3 == 0);
        let lambda0 = rng.gen_range(-1.0..6.0);
        let v = tryo!(is_disconjugate(&sys, lambda0, win(0, len), 1e-10));
        if v.disconjugate == v.scan.disconjugate {
            agree += 1;
        }
        if !v.disconjugate {
            fails += 1;
            if let Some(y) = &v.witness {
                let value = tryo!(quadratic_form_value(&sys, lambda0, y, 1e-8));
                let norm = y.max_norm();
                worst_witness = worst_witness.max(value / (norm * norm));
                if value <= 1e-12 * norm * norm && norm > 0.0 {
                    witnesses += 1;
                }
            }
        }
    }
    outcome(
        agree == 50 && witnesses == fails && fails > 0 && fails < 50,
        format!(
            "verdicts agree {agree}/50, {fails} FAIL verdicts with {witnesses} witnesses F≤0 (largest F/‖y‖² {worst_witness:.2e})"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shape = Shape { a: 0.1, b: 0.3, b_shift: 0.2, c: 0.3, c_psd: true, w: 0.3, w_shift: 0.1, full_rank_b: true };
    let (mut residual, mut drift): (f64, f64) = (0.0, 0.0);
    let mut agree = 0;
    let (t1, t2) = (1, 11);
    for k in 0..100 {
        let n = 1 + k % 3;
        let lambda = rng.gen_range(-0.5..0.0);
        let sys = random_system(&mut rng, n, win(0, 20), shape, k % 2 == 0);
        let y0 = tryo!(principal_at_start(&sys, lambda, t2 + 1));
        let u = cmat(&mut rng, n, n, 1.0);
        let v = if k % 2 == 0 { hermitian(&mut rng, n, 1.0) * &u } else { cmat(&mut rng, n, n, 1.0) };
        let mut init = linalg::zeros(2 * n, n);
        init.rows_mut(0, n).copy_from(&u);
        init.rows_mut(n, n).copy_from(&v);
        let y = tryo!(solve_ivp(&sys, c(lambda), t1, &init, Direction::Forward, Some(t2 + 1)));
        let dec = tryo!(decompose(&sys, &y0, &y, t1, t2, 1e-9));
        residual = residual.max(dec.residual);
        drift = drift.max(dec.q_drift);
        if dec.pq_hermitian == is_prepared(&y, 1e-9) && dec.pq_hermitian == (k % 2 == 0) {
            agree += 1;
        }
    }
    outcome(
        residual <= 1e-9 && drift <= 1e-10 && agree == 100,
        format!("residual {residual:.2e} (≤1e-9), Q drift {drift:.2e} (≤1e-10), prepared verdicts agree {agree}/100"),
    )
}

fn criterion_7() -> Outcome {
    let horizon = 1001;
    let t_list: Vec<usize> = (1..=horizon).step_by(50).chain([horizon]).collect();
    let mut notes = Vec::new();
    let mut pass = true;
    for n in [1, 2] {
        let sys = tryo!(limit_circle_family(n, win(0, 1300), 0.5));
        let est = tryo!(estimate_deficiency_index(&sys, -1.0, horizon, 1e-8));
        let ord = tryo!(order_basis(&est.basis, &est.recessive, 1e-8));
        let th = tryo!(theta_matrix(&ord, &t_list, 1e-9));
        let dev = (&th.theta - canonical_theta(n)).norm();
        let ok = est.d == 2 * n && th.blocks.max() <= 1e-8 && dev <= 1e-8 && th.drift <= 1e-9;
        pass &= ok;
        notes.push(format!("LC n={n}: d={}, blocks {:.1e}, drift {:.1e}", est.d, th.blocks.max(), th.drift));
    }
    let sys = HamiltonianSystem::free(win(0, 1300));
    let est = tryo!(estimate_deficiency_index(&sys, -1.0, horizon, 1e-8));
    let ord = tryo!(order_basis(&est.basis, &est.recessive, 1e-8));
    let th = tryo!(theta_matrix(&ord, &[1, 100, 200], 1e-9));
    pass &= est.d == 1 && th.theta.shape() == (0, 0);
    notes.push(format!("free-weight: d={}, Θ {:?}", est.d, th.theta.shape()));
    outcome(pass, format!("{} (blocks ≤1e-8, drift ≤1e-9 over 1e3 steps)", notes.join("; ")))
}

fn random_g(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    loop {
        let g = cmat(rng, d, d, 1.0);
        if linalg::relative_min_singular(&g) > 1e-3 {
            return g;
        }
    }
}

fn criterion_8() -> Outcome {
    let mut exact = 0;
    let mut total = 0;
    for n in 1..=3 {
        for d in n..=2 * n {
            total += 1;
            let (m, nn) = tryo!(friedrichs_bc_int(d, n));
            if selfadjoint_defect_int(&m, &nn, &canonical_theta_int(d - n), n) == (0, d) {
                exact += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rejected = 0;
    let mut invariant = 0;
    for k in 0..100 {
        let n = 1 + k % 2;
        let d = 2 * n;
        let theta = canonical_theta(d - n);
        let bad = BoundaryCondition { m: cmat(&mut rng, d, 2 * n, 1.0), n: cmat(&mut rng, d, 2 * (d - n), 1.0) };
        if !tryo!(check_selfadjoint_bc(&bad, &theta, d, n, 1e-10)).holds {
            rejected += 1;
        }
        let g = random_g(&mut rng, d);
        let good = tryo!(friedrichs_bc(d, n));
        let keeps_good = tryo!(check_selfadjoint_bc(&good.left_mul(&g), &theta, d, n, 1e-10)).holds;
        let keeps_bad = !tryo!(check_selfadjoint_bc(&bad.left_mul(&g), &theta, d, n, 1e-10)).holds;
        if keeps_good && keeps_bad {
            invariant += 1;
        }
    }
    outcome(
        exact == total && rejected == 100 && invariant == 100,
        format!("exact integer pass {exact}/{total}, random rejected {rejected}/100, G-invariant {invariant}/100"),
    )
}

fn criterion_9() -> Outcome {
    let horizon = 1000;
    let mut notes = Vec::new();
    let mut pass = true;
    let systems = [
        ("free-weight", HamiltonianSystem::free(win(0, 1300))),
        ("LC n=1", tryo!(limit_circle_family(1, win(0, 1300), 0.5))),
        ("LC n=2", tryo!(limit_circle_family(2, win(0, 1300), 0.5))),
    ];
    for (name, sys) in systems {
        let est = tryo!(estimate_deficiency_index(&sys, -1.0, horizon, 1e-8));
        let ord = tryo!(order_basis(&est.basis, &est.recessive, 1e-8));
        let rc = tryo!(verify_recessive_characterization(&sys, -1.0, &ord, win(0, 4), horizon, 1e-8));
        let worst = rc
            .columns
            .iter()
            .flat_map(|col| col.membership.functionals.iter().map(|f| f.value.norm()))
            .fold(0.0, f64::max);
        let unpatched_fail = rc.columns.iter().all(|col| {
            col.unpatched.verdict == Verdict::Fail && col.unpatched.u0 > 1e-8
        });
        let ok = rc.verdict == Verdict::Pass && worst <= 1e-8 && unpatched_fail;
        pass &= ok;
        notes.push(format!("{name}: {} columns {}, functionals {worst:.1e}, unpatched fail {unpatched_fail}", rc.columns.len(), rc.verdict));
    }
    outcome(pass, format!("{} (≤1e-8 at horizon 1e3)", notes.join("; ")))
}

fn criterion_10() -> Outcome {
    let sys = HamiltonianSystem::free(win(0, 220));
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut positive = true;
    let mut gammas = Vec::new();
    for len in [2, 5, 10, 25, 50, 100, 150, 200] {
        let lb = tryo!(lower_bound_estimate(&sys, -1.0, win(0, len)));
        positive &= lb.gamma > 0.0;
        monotone &= lb.gamma <= prev * (1.0 + 1e-12);
        prev = lb.gamma;
        gammas.push(format!("{len}:{:.4}", lb.gamma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let form = tryo!(assemble_form(&sys, -1.0, win(0, 49)));
    let mut affinity: f64 = 0.0;
    for _ in 0..20 {
        let x = CVec::from_fn(form.dim(), |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let y = form.trajectory(&x);
        let (l0, l) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let f0 = tryo!(quadratic_form_value(&sys, l0, &y, 1e-8));
        let f = tryo!(quadratic_form_value(&sys, l, &y, 1e-8));
        let w = tryo!(weighted_norm_sq(&sys, &y));
        let scale = f0.abs().max(f.abs()).max(w).max(1.0);
        affinity = affinity.max((f - f0 - (l0 - l) * w).abs() / scale);
    }
    outcome(
        positive && monotone && affinity <= 1e-12,
        format!("γ by window length [{}], positive {positive}, non-increasing {monotone}, affinity defect {affinity:.1e} (≤1e-12)", gammas.join(" ")),
    )
}

fn criterion_11() -> Outcome {
    let mut cases: Vec<(String, HamiltonianSystem, f64, Option<usize>)> = vec![
        ("free-weight".into(), HamiltonianSystem::free(win(0, 300)), -1.0, Some(1)),
    ];
    for n in 1..=3 {
        cases.push((format!("LC n={n}"), tryo!(limit_circle_family(n, win(0, 300), 0.5)), -1.0, Some(2 * n)));
    }
    let wnd = win(0, 300);
    let mixed_w = wnd
        .iter()
        .map(|t| CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(0.5f64.powi(t as i32))])))
        .collect();
    let mixed = tryo!(HamiltonianSystem::new(
        2,
        wnd,
        vec![linalg::zeros(2, 2); wnd.len()],
        vec![linalg::identity(2); wnd.len()],
        vec![linalg::zeros(2, 2); wnd.len()],
        mixed_w,
    ));
    cases.push(("mixed".into(), mixed, -1.0, Some(3)));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..6 {
        let n = 1 + k % 3;
        let a = cmat(&mut rng, n, n, 0.1 / n as f64);
        let b = psd(&mut rng, n, n, 0.5, 0.3);
        let cc = psd(&mut rng, n, n, 0.3, 0.0);
        let w = psd(&mut rng, n, n, 0.5, 0.3);
        let sys = tryo!(HamiltonianSystem::constant(n, win(0, 300), a, b, cc, w));
        cases.push((format!("random n={n}"), sys, -3.0, None));
    }
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, sys, lambda, expect) in cases {
        let n = sys.n();
        let est = match estimate_deficiency_index(&sys, lambda, 200, 1e-8) {
            Ok(est) => est,
            Err(e) => return fail(format!("{name}: {e}")),
        };
        let ok = (n..=2 * n).contains(&est.d) && expect.is_none_or(|e| e == est.d);
        pass &= ok;
        notes.push(format!("{name}:{}", est.d));
    }
    outcome(pass, format!("d per system [{}], all in [n,2n], free-weight d=1", notes.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("symplecticity", criterion_1),
        ("Lagrange identity", criterion_2),
        ("recessive oracle agreement", criterion_3),
        ("recessive decay", criterion_4),
        ("disconjugacy vs positivity", criterion_5),
        ("conjoined reconstruction", criterion_6),
        ("Theta canonical form", criterion_7),
        ("self-adjoint BC criterion", criterion_8),
        ("Friedrichs membership", criterion_9),
        ("lower bound", criterion_10),
        ("deficiency bracket", criterion_11),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {name}: {} [{:.2}s] {}",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            clock.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
