//! Random systems shared by the integration tests.
#![allow(dead_code)]

use dhs_core::linalg::{self, c, CMat, C64};
use dhs_core::{HamiltonianSystem, LatticeWindow};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn cmat(rng: &mut ChaCha8Rng, r: usize, k: usize, scale: f64) -> CMat {
    CMat::from_fn(r, k, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

pub fn hermitian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    linalg::hermitian_part(&cmat(rng, n, n, scale))
}

/// `X X*` with `X` of `rank` columns, plus `shift · I`.
pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, scale: f64, shift: f64) -> CMat {
    let x = cmat(rng, n, rank, scale);
    linalg::hermitian_part(&(&x * x.adjoint())) + linalg::identity(n) * c(shift)
}

/// Coefficient magnitudes of a random system.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub a: f64,
    pub b: f64,
    pub b_shift: f64,
    pub c: f64,
    pub c_psd: bool,
    pub w: f64,
    pub w_shift: f64,
    pub full_rank_b: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Self { a: 0.3, b: 0.7, b_shift: 0.0, c: 0.5, c_psd: false, w: 0.7, w_shift: 0.1, full_rank_b: true }
    }
}

pub fn random_system(rng: &mut ChaCha8Rng, n: usize, window: LatticeWindow, shape: Shape, constant: bool) -> HamiltonianSystem {
    let gen = |rng: &mut ChaCha8Rng| {
        let a = cmat(rng, n, n, shape.a / n as f64);
        let rank = if shape.full_rank_b { n } else { rng.gen_range(1..=n) };
        let b = psd(rng, n, rank, shape.b, shape.b_shift);
        let cc = if shape.c_psd { psd(rng, n, n, shape.c, 0.0) } else { hermitian(rng, n, shape.c) };
        let w = psd(rng, n, n, shape.w, shape.w_shift);
        (a, b, cc, w)
    };
    if constant {
        let (a, b, cc, w) = gen(rng);
        HamiltonianSystem::constant(n, window, a, b, cc, w).unwrap()
    } else {
        let mut av = Vec::new();
        let mut bv = Vec::new();
        let mut cv = Vec::new();
        let mut wv = Vec::new();
        for _ in window.iter() {
            let (a, b, cc, w) = gen(rng);
            av.push(a);
            bv.push(b);
            cv.push(cc);
            wv.push(w);
        }
        HamiltonianSystem::new(n, window, av, bv, cv, wv).unwrap()
    }
}

pub fn win(a: usize, b: usize) -> LatticeWindow {
    LatticeWindow::new(a, b).unwrap()
}

/// `r₋ = (3 − √5)/2` and `r₊ = 1/r₋` for the free system at `λ = −1`.
pub fn roots() -> (f64, f64) {
    let r = (3.0 - 5f64.sqrt()) / 2.0;
    (r, 1.0 / r)
}
