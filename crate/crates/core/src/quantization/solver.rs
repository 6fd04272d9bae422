use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use super::{random_function, shift_positive, QuantError, Result, StateFunction, TransferSpec};
use crate::gns::{m_f_array, weighted_transpose_sum};
use crate::linalg::{c, cr, frobenius, frobenius_distance, CMat, ComplexMatrix, LinalgError, C64};
use crate::measures::DiscreteMeasure;

/// Entrywise tolerance for diagonal support of the atoms.
pub const DIAGONAL_TOL: f64 = 1e-12;

/// A diagonal mass counts as zero below this fraction of the total diagonal mass.
pub const ZERO_MASS_RTOL: f64 = 1e-14;

/// Depth of the random observables tried by the universal check.
pub const UNIVERSAL_DEPTH: u32 = 3;

fn check_inputs(spec: &TransferSpec, f: &StateFunction, mu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != spec.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: spec.dim(),
            found: mu.dim(),
        }
        .into());
    }
    f.check_dim(spec.dim())
}

/// Per-branch arrays `A^i = sum_m lambda_m f(F_i(omega_m)) omega_m^T`, without the weight `p_i`.
pub fn branch_arrays(
    spec: &TransferSpec,
    f: &StateFunction,
    mu: &DiscreteMeasure,
) -> Result<Vec<CMat>> {
    check_inputs(spec, f, mu)?;
    let n = spec.dim();
    Ok(spec
        .branches()
        .iter()
        .map(|b| {
            weighted_transpose_sum(
                n,
                mu.atoms()
                    .iter()
                    .map(|a| (a.weight * f.eval(&b.apply_matrix(&a.state)), &a.state)),
            )
        })
        .collect())
}

/// `M_{Lf} = sum_i p_i A^i`
pub fn m_lf_array(spec: &TransferSpec, f: &StateFunction, mu: &DiscreteMeasure) -> Result<CMat> {
    let arrays = branch_arrays(spec, f, mu)?;
    let n = spec.dim();
    Ok(spec
        .weights()
        .iter()
        .zip(&arrays)
        .fold(CMat::zeros(n, n), |acc, (p, a)| acc + a * cr(*p)))
}

fn moduli_from(
    spec: &TransferSpec,
    m_f: &CMat,
    arrays: &[CMat],
    lenient: bool,
) -> Result<Vec<Vec<f64>>> {
    let n = spec.dim();
    let total: f64 = (0..n).map(|j| m_f[(j, j)].re.abs()).sum();
    let zero = ZERO_MASS_RTOL * total;
    let mut out = vec![vec![0.0; n]; spec.len()];
    for j in 0..n {
        let den = m_f[(j, j)].re;
        for (i, p) in spec.weights().iter().enumerate() {
            let num = p * arrays[i][(j, j)].re;
            if den <= zero {
                if lenient && num.abs() <= zero.max(f64::MIN_POSITIVE) {
                    out[i][j] = p.sqrt();
                    continue;
                }
                return Err(QuantError::ZeroDenominator {
                    index: j + 1,
                    value: den,
                });
            }
            if num < -zero {
                return Err(QuantError::NegativeNumerator {
                    branch: i + 1,
                    index: j + 1,
                    value: num,
                });
            }
            out[i][j] = (num.max(0.0) / den).sqrt();
        }
    }
    Ok(out)
}

/// `|v_j^i| = sqrt(p_i [A^i]_jj / [M_f]_jj)` for every branch `i` and index `j`.
pub fn diagonal_moduli(
    spec: &TransferSpec,
    f: &StateFunction,
    mu: &DiscreteMeasure,
) -> Result<Vec<Vec<f64>>> {
    let arrays = branch_arrays(spec, f, mu)?;
    let m_f = m_f_array(f, mu)?;
    moduli_from(spec, &m_f, &arrays, false)
}

fn diagonal_kraus(moduli: &[Vec<f64>], phases: &[Vec<f64>]) -> Vec<CMat> {
    moduli
        .iter()
        .zip(phases)
        .map(|(m, t)| {
            let n = m.len();
            let mut v = CMat::zeros(n, n);
            for j in 0..n {
                v[(j, j)] = C64::from_polar(m[j], t[j]);
            }
            v
        })
        .collect()
}

/// Diagonal Kraus operators solving the quantization equation for a
/// diagonal-supported measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalSolution {
    pub kraus: Vec<ComplexMatrix>,
    pub moduli: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Solves `M_{Lf} = sum_i V_i M_f V_i*` with diagonal `V_i`. Phases default to zero.
pub fn solve_diagonal_kraus(
    spec: &TransferSpec,
    f: &StateFunction,
    mu: &DiscreteMeasure,
    phases: Option<&[Vec<f64>]>,
) -> Result<DiagonalSolution> {
    check_inputs(spec, f, mu)?;
    if let Some(atom) = mu.first_non_diagonal(DIAGONAL_TOL) {
        return Err(QuantError::NotDiagonalSupported { atom });
    }
    let n = spec.dim();
    let phases = match phases {
        None => vec![vec![0.0; n]; spec.len()],
        Some(p) => {
            if p.len() != spec.len() || p.iter().any(|row| row.len() != n) {
                return Err(QuantError::Shape(format!(
                    "phases must be {} rows of {} angles",
                    spec.len(),
                    n
                )));
            }
            if p.iter().flatten().any(|t| !t.is_finite()) {
                return Err(QuantError::Shape("phases must be finite".into()));
            }
            p.to_vec()
        }
    };
    let moduli = diagonal_moduli(spec, f, mu)?;
    let kraus = diagonal_kraus(&moduli, &phases);
    let residual = verify_diagram(spec, f, mu, &kraus)?;
    Ok(DiagonalSolution {
        kraus: kraus
            .into_iter()
            .map(ComplexMatrix::new)
            .collect::<std::result::Result<_, _>>()?,
        moduli,
        phases,
        residual,
    })
}

/// Both sides `(M_{Lf}, sum_i V_i M_f V_i*)` of the quantization equation.
pub fn diagram_sides(
    spec: &TransferSpec,
    f: &StateFunction,
    mu: &DiscreteMeasure,
    kraus: &[CMat],
) -> Result<(CMat, CMat)> {
    let n = spec.dim();
    if kraus.is_empty() {
        return Err(QuantError::Shape("no Kraus operators".into()));
    }
    if let Some(v) = kraus.iter().find(|v| v.nrows() != n || v.ncols() != n) {
        return Err(QuantError::Shape(format!(
            "Kraus operator is {}x{}, expected {n}x{n}",
            v.nrows(),
            v.ncols()
        )));
    }
    let lhs = m_lf_array(spec, f, mu)?;
    let m_f = m_f_array(f, mu)?;
    let rhs = kraus
        .iter()
        .fold(CMat::zeros(n, n), |acc, v| acc + v * &m_f * v.adjoint());
    Ok((lhs, rhs))
}

/// `|M_{Lf} - sum_i V_i M_f V_i*|_F`
pub fn verify_diagram(
    spec: &TransferSpec,
    f: &StateFunction,
    mu: &DiscreteMeasure,
    kraus: &[CMat],
) -> Result<f64> {
    let (lhs, rhs) = diagram_sides(spec, f, mu, kraus)?;
    Ok(frobenius_distance(&lhs, &rhs))
}

/// One off-diagonal equation `p_i [A^i]_rs = v_r v_s* [M_f]_rs`, with 1-based labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseConstraint {
    pub branch: usize,
    pub r: usize,
    pub s: usize,
    pub lhs: [f64; 2],
    pub reference: [f64; 2],
    /// `|lhs| / |reference|`, absent when the reference vanishes.
    pub required_modulus: Option<f64>,
    pub available_modulus: f64,
    /// `theta_r - theta_s` demanded by the equation.
    pub required_phase: Option<f64>,
    pub residual: f64,
    pub vacuous: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    /// Phases `theta_j^i`, zero on the root of every connected component.
    pub phases: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub constraints: Vec<PhaseConstraint>,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Checks the off-diagonal quantization equations against given moduli and
/// assigns phases along a spanning forest of the index pairs. Residuals are
/// absolute and compared with `tol * max(1, |M_f|_F)`.
pub fn offdiagonal_consistency(
    spec: &TransferSpec,
    f: &StateFunction,
    mu: &DiscreteMeasure,
    moduli: &[Vec<f64>],
    tol: f64,
) -> Result<ConsistencyReport> {
    let n = spec.dim();
    if moduli.len() != spec.len() || moduli.iter().any(|m| m.len() != n) {
        return Err(QuantError::Shape(format!(
            "moduli must be {} rows of {} values",
            spec.len(),
            n
        )));
    }
    let arrays = branch_arrays(spec, f, mu)?;
    let m_f = m_f_array(f, mu)?;
    let bound = tol * frobenius(&m_f).max(1.0);

    let mut constraints = Vec::new();
    let mut phases = vec![vec![0.0; n]; spec.len()];
    for (i, p) in spec.weights().iter().enumerate() {
        let lhs_of = |r: usize, s: usize| arrays[i][(r, s)] * cr(*p);
        let mut adjacency = vec![Vec::new(); n];
        for r in 0..n {
            for s in r + 1..n {
                let (l, b) = (lhs_of(r, s), m_f[(r, s)]);
                if b.norm() > bound && moduli[i][r] * moduli[i][s] > 0.0 {
                    let arg = (l / b).arg();
                    adjacency[r].push((s, arg));
                    adjacency[s].push((r, -arg));
                }
            }
        }
        let theta = &mut phases[i];
        let mut seen = vec![false; n];
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut queue = VecDeque::from([root]);
            while let Some(r) = queue.pop_front() {
                for &(s, arg) in &adjacency[r] {
                    if !seen[s] {
                        seen[s] = true;
                        // theta_r - theta_s = arg
                        theta[s] = theta[r] - arg;
                        queue.push_back(s);
                    }
                }
            }
        }
        for r in 0..n {
            for s in r + 1..n {
                let (l, b) = (lhs_of(r, s), m_f[(r, s)]);
                let available = moduli[i][r] * moduli[i][s];
                let vacuous = l.norm() <= bound && b.norm() <= bound;
                let predicted = C64::from_polar(available, theta[r] - theta[s]) * b;
                let residual = (l - predicted).norm();
                let reference_live = b.norm() > bound;
                constraints.push(PhaseConstraint {
                    branch: i + 1,
                    r: r + 1,
                    s: s + 1,
                    lhs: pair(l),
                    reference: pair(b),
                    required_modulus: reference_live.then(|| l.norm() / b.norm()),
                    available_modulus: available,
                    required_phase: reference_live.then(|| (l / b).arg()),
                    residual,
                    vacuous,
                    satisfied: vacuous || residual <= bound,
                });
            }
        }
    }
    let max_residual = constraints
        .iter()
        .filter(|c| !c.vacuous)
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    let report = ConsistencyReport {
        consistent: constraints.iter().all(|c| c.satisfied),
        phases,
        max_residual,
        constraints,
    };
    if report.consistent {
        Ok(report)
    } else {
        Err(QuantError::Inconsistent(Box::new(report)))
    }
}

/// Random observable of depth at most [`UNIVERSAL_DEPTH`], shifted to be at
/// least `0.1` on every atom of `mu` and every branch image of an atom.
pub fn random_positive_function<R: Rng + ?Sized>(
    spec: &TransferSpec,
    mu: &DiscreteMeasure,
    rng: &mut R,
) -> StateFunction {
    let images: Vec<CMat> = spec
        .branches()
        .iter()
        .flat_map(|b| mu.atoms().iter().map(move |a| b.apply_matrix(&a.state)))
        .collect();
    let points: Vec<&CMat> = mu
        .atoms()
        .iter()
        .map(|a| a.state.matrix())
        .chain(images.iter())
        .collect();
    shift_positive(
        random_function(spec.dim(), UNIVERSAL_DEPTH, rng),
        &points,
        0.1,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalVerdict {
    /// One Kraus family solves the equation for every sampled observable.
    pub pass: bool,
    /// Every atom of positive weight is fixed by the normalized induced channel.
    pub fixed_point_pass: bool,
    pub agree: bool,
    pub samples: usize,
    /// Largest diagram residual relative to `max(1, |M_{Lf}|_F)`.
    pub max_relative_residual: f64,
    pub max_fixed_point_defect: f64,
    pub witness: Option<StateFunction>,
    pub witness_residual: Option<f64>,
    pub reference_kraus: Vec<ComplexMatrix>,
}

/// Tests whether the Kraus family solving the equation for `f = 1` also
/// solves it for `samples` random positive observables, and compares the
/// verdict with the test `|Phi(omega_m) - omega_m|_F <= tol` on the atoms.
pub fn check_universal_quantization<R: Rng + ?Sized>(
    spec: &TransferSpec,
    mu: &DiscreteMeasure,
    samples: usize,
    tol: f64,
    rng: &mut R,
) -> Result<UniversalVerdict> {
    if let Some(branch) = spec
        .branches()
        .iter()
        .position(|b| b.single_unitary().is_none())
    {
        return Err(QuantError::NotMixedUnitary { branch });
    }
    let one = StateFunction::constant(1.0);
    check_inputs(spec, &one, mu)?;

    let arrays = branch_arrays(spec, &one, mu)?;
    let m_one = m_f_array(&one, mu)?;
    let moduli = moduli_from(spec, &m_one, &arrays, true)?;
    let phases = match offdiagonal_consistency(spec, &one, mu, &moduli, tol) {
        Ok(report) => report.phases,
        Err(QuantError::Inconsistent(report)) => report.phases,
        Err(e) => return Err(e),
    };
    let kraus = diagonal_kraus(&moduli, &phases);

    let mut max_relative_residual = 0.0_f64;
    let mut witness = None;
    for _ in 0..samples {
        let f = random_positive_function(spec, mu, rng);
        let (lhs, rhs) = diagram_sides(spec, &f, mu, &kraus)?;
        let rel = frobenius_distance(&lhs, &rhs) / frobenius(&lhs).max(1.0);
        max_relative_residual = max_relative_residual.max(rel);
        if rel > tol && witness.is_none() {
            witness = Some((f, rel));
        }
    }

    let total: f64 = spec.weights().iter().sum();
    let max_fixed_point_defect = mu
        .atoms()
        .iter()
        .filter(|a| a.weight > 0.0)
        .map(|a| {
            let image = spec.induced_apply(&a.state) / c(total, 0.0);
            frobenius_distance(&image, &a.state)
        })
        .fold(0.0, f64::max);
    let pass = witness.is_none();
    let fixed_point_pass = max_fixed_point_defect <= tol;
    let (witness, witness_residual) = witness.map_or((None, None), |(f, r)| (Some(f), Some(r)));
    Ok(UniversalVerdict {
        pass,
        fixed_point_pass,
        agree: pass == fixed_point_pass,
        samples,
        max_relative_residual,
        max_fixed_point_defect,
        witness,
        witness_residual,
        reference_kraus: kraus
            .into_iter()
            .map(ComplexMatrix::new)
            .collect::<std::result::Result<_, _>>()?,
    })
}
