//! Named operators and channels used by examples, tests and scenarios.

use crate::channel::{ChannelError, QuantumChannel};
use crate::linalg::{c, cr, diag, CMat, C64};

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
}

pub fn pauli_z() -> CMat {
    diag(&[1.0, -1.0])
}

fn two_qubit_permutation(f: impl Fn(usize, usize) -> (usize, usize)) -> CMat {
    let mut m = CMat::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let (a, b) = f(i, j);
            m[(2 * a + b, 2 * i + j)] = cr(1.0);
        }
    }
    m
}

/// `C1 |i, j> = |i, i xor j>` (first qubit controls).
pub fn cnot_c1() -> CMat {
    two_qubit_permutation(|i, j| (i, i ^ j))
}

/// `C2 |i, j> = |i xor j, j>` (second qubit controls).
pub fn cnot_c2() -> CMat {
    two_qubit_permutation(|i, j| (i ^ j, j))
}

/// The two-qubit CNOT channel `rho -> (C1 rho C1 + C2 rho C2) / 2`.
pub fn cnot_channel() -> QuantumChannel {
    QuantumChannel::mixed_unitary(vec![0.5, 0.5], vec![cnot_c1(), cnot_c2()])
        .expect("CNOT gates are unitary")
}

/// Qubit amplitude damping towards `|0>` with decay probability `gamma`.
pub fn amplitude_damping(gamma: f64) -> Result<QuantumChannel, ChannelError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ChannelError::WeightsInvalid(format!(
            "damping probability {gamma} outside [0, 1]"
        )));
    }
    let k0 = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr((1.0 - gamma).sqrt())]);
    let k1 = CMat::from_row_slice(2, 2, &[cr(0.0), cr(gamma.sqrt()), cr(0.0), cr(0.0)]);
    QuantumChannel::new(vec![k0, k1], true)
}

/// `rho -> (1 - p) rho + p X rho X`
pub fn bit_flip(p: f64) -> Result<QuantumChannel, ChannelError> {
    QuantumChannel::mixed_unitary(vec![1.0 - p, p], vec![CMat::identity(2, 2), pauli_x()])
}

/// Entry pattern of the two CNOT limit states:
///
/// ```text
/// s1 = [a c c c; c* b d d*; c* d* b d; c* d d* b]
/// s2 = [a c c c; c* b d* d; c* d b d*; c* d* d b]
/// ```
///
/// with `a, b, c, d` read off `s1`. Returns the largest entrywise deviation
/// of the pair from the pattern.
pub fn cnot_limit_pattern_residual(s1: &CMat, s2: &CMat) -> f64 {
    let a = s1[(0, 0)];
    let b = s1[(1, 1)];
    let cc = s1[(0, 1)];
    let d = s1[(1, 2)];
    let template = |d: C64| {
        let dc = d.conj();
        let ccc = cc.conj();
        CMat::from_row_slice(
            4,
            4,
            &[
                a, cc, cc, cc, //
                ccc, b, d, dc, //
                ccc, dc, b, d, //
                ccc, d, dc, b,
            ],
        )
    };
    let dev = |m: &CMat, t: &CMat| {
        m.iter()
            .zip(t.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    };
    dev(s1, &template(d)).max(dev(s2, &template(d.conj())))
}
