//! Seeded random generators for states, unitaries, channels and convex weights.
//!
//! Every random draw in the crate goes through [`SeededRng`] so that reports
//! are reproducible from a single `u64` seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::linalg::{c, cr, CMat, DensityMatrix};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / cr(std::f64::consts::SQRT_2)
    })
}

/// `B B* / tr(B B*)` for a Ginibre `B`; full rank almost surely.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let b = ginibre(n, n, rng);
    let m = &b * b.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_trusted(m / cr(tr))
}

/// Random Hermitian matrix `(G + G*) / 2`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = ginibre(n, n, rng);
    (&g + g.adjoint()) * cr(0.5)
}

/// Columns with orthonormal columns from the QR factor of a Ginibre matrix,
/// with the phase of `R`'s diagonal absorbed so the draw is Haar distributed.
fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let qr = ginibre(rows, cols, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / cr(d.norm())
        } else {
            cr(1.0)
        };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-random `n x n` unitary.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    haar_isometry(n, n, rng)
}

/// Kraus operators of a random trace-preserving channel with `k` operators,
/// cut from a random isometry `C^n -> C^{nk}`.
pub fn random_kraus<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<CMat> {
    let w = haar_isometry(n * k, n, rng);
    (0..k).map(|i| w.rows(i * n, n).into_owned()).collect()
}

/// Uniform sample from the probability simplex of dimension `k`.
pub fn dirichlet_uniform<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}
