//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`. [`ComplexMatrix`] and
//! [`DensityMatrix`] are validated newtypes over that storage; both deref to
//! the underlying `DMatrix` so the usual arithmetic is available directly.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative Hermiticity tolerance, scaled by the Frobenius norm of the input.
pub const HERMITIAN_RTOL: f64 = 1e-9;
/// Eigenvalues in `[-DENSITY_TOL, 0)` are clipped to zero when a density is built.
pub const DENSITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("empty matrix")]
    Empty,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: |H - H*|_F = {defect:e} exceeds {tol:e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(DensityDiagnostics),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_distance(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `(A + A*) / 2`
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * cr(0.5)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = cr(*v);
    }
    m
}

/// Matrix unit `E_rs` (zero-based indices).
pub fn matrix_unit(n: usize, r: usize, s: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(r, s)] = cr(1.0);
    m
}

/// `|v><v|`
pub fn projector(v: &CVec) -> CMat {
    v * v.adjoint()
}

fn check_square(m: &CMat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(LinalgError::Empty);
    }
    Ok(m.nrows())
}

fn check_same_dim(a: &CMat, b: &CMat) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(())
}

fn hermitian_defect(m: &CMat) -> f64 {
    frobenius_distance(m, &m.adjoint())
}

// ---------------------------------------------------------------------------
// ComplexMatrix
// ---------------------------------------------------------------------------

/// Square matrix with finite complex entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(CMat);

impl ComplexMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        check_square(&m)?;
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMat::zeros(n, n))
    }

    /// Builds from row-major `[re, im]` pairs.
    pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(LinalgError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        Self::new(CMat::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1])))
    }

    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.0.nrows())
            .map(|i| {
                (0..self.0.ncols())
                    .map(|j| [self.0[(i, j)].re, self.0[(i, j)].im])
                    .collect()
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

impl Deref for ComplexMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

impl From<ComplexMatrix> for CMat {
    fn from(m: ComplexMatrix) -> CMat {
        m.0
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{}", self.0)
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(deserializer)?;
        ComplexMatrix::from_pairs(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serialize a raw matrix in the nested `[re, im]` format.
pub fn matrix_to_json(m: &CMat) -> serde_json::Value {
    serde_json::to_value(ComplexMatrix(m.clone()).to_pairs()).expect("plain numbers serialize")
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Real eigenvalues, descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMat,
}

impl HermitianEigen {
    /// `V diag(f(λ)) V*`
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let fl = cr(f(l));
            for i in 0..n {
                scaled[(i, j)] *= fl;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        self.map_values(|l| l)
    }
}

fn lexicographic_desc(a: &[C64], b: &[C64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im));
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Eigendecomposition of a Hermitian matrix with deterministic ordering.
///
/// Eigenvalues come back descending. Each eigenvector is rotated so its first
/// non-negligible component is real and positive; eigenvectors of numerically
/// equal eigenvalues are ordered by their first differing component.
pub fn hermitian_eig(h: &CMat) -> Result<HermitianEigen> {
    let n = check_square(h)?;
    let tol = HERMITIAN_RTOL * frobenius(h);
    let defect = hermitian_defect(h);
    if defect > tol {
        return Err(LinalgError::NotHermitian { defect, tol });
    }
    let eig = hermitian_part(h).symmetric_eigen();

    let mut pairs: Vec<(f64, Vec<C64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<C64> = eig.eigenvectors.column(j).iter().copied().collect();
            if let Some(lead) = v.iter().copied().find(|z| z.norm() > 1e-10) {
                let phase = lead.conj() / lead.norm();
                v.iter_mut().for_each(|z| *z *= phase);
            }
            (eig.eigenvalues[j], v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    // group numerically equal eigenvalues, then order each group by vector
    let scale = pairs.iter().map(|p| p.0.abs()).fold(1.0, f64::max);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[end - 1].0 - pairs[end].0).abs() <= 1e-12 * scale {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| lexicographic_desc(&a.1, &b.1));
        start = end;
    }

    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = CMat::from_fn(n, n, |i, j| pairs[j].1[i]);
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues only, unsorted. Input is assumed Hermitian.
fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    hermitian_part(h)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect()
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityCheck {
    Square,
    Finite,
    Hermitian,
    Positive,
    Trace,
}

/// Outcome of [`is_density`], with the measured quantities behind each check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityDiagnostics {
    pub hermitian_defect: f64,
    pub min_eigenvalue: f64,
    pub trace_re: f64,
    pub trace_im: f64,
    pub failed: Vec<DensityCheck>,
}

impl DensityDiagnostics {
    pub fn is_density(&self) -> bool {
        self.failed.is_empty()
    }
}

impl fmt::Display for DensityDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "failed {:?} (hermitian defect {:e}, min eigenvalue {:e}, trace {}{:+}i)",
            self.failed, self.hermitian_defect, self.min_eigenvalue, self.trace_re, self.trace_im
        )
    }
}

/// Checks Hermiticity, positivity (min eigenvalue >= -tol) and unit trace.
pub fn is_density(a: &CMat, tol: f64) -> DensityDiagnostics {
    let mut diag = DensityDiagnostics {
        hermitian_defect: f64::NAN,
        min_eigenvalue: f64::NAN,
        trace_re: f64::NAN,
        trace_im: f64::NAN,
        failed: Vec::new(),
    };
    if check_square(a).is_err() {
        diag.failed.push(DensityCheck::Square);
        return diag;
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        diag.failed.push(DensityCheck::Finite);
        return diag;
    }
    let tr = trace(a);
    diag.trace_re = tr.re;
    diag.trace_im = tr.im;
    diag.hermitian_defect = hermitian_defect(a);
    if diag.hermitian_defect > tol.max(HERMITIAN_RTOL * frobenius(a)) {
        diag.failed.push(DensityCheck::Hermitian);
    }
    diag.min_eigenvalue = hermitian_eigenvalues(a)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if diag.min_eigenvalue < -tol {
        diag.failed.push(DensityCheck::Positive);
    }
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        diag.failed.push(DensityCheck::Trace);
    }
    diag
}

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    /// Validates `m` with tolerance [`DENSITY_TOL`]. The stored matrix is the
    /// Hermitian part of `m`; eigenvalues in `[-DENSITY_TOL, 0)` are clipped.
    pub fn new(m: CMat) -> Result<Self> {
        let diag = is_density(&m, DENSITY_TOL);
        if !diag.is_density() {
            return Err(LinalgError::NotDensity(diag));
        }
        let h = hermitian_part(&m);
        if diag.min_eigenvalue < 0.0 {
            let eig = hermitian_eig(&h)?;
            let clipped = eig.map_values(|l| l.max(0.0));
            let tr = trace(&clipped).re;
            return Ok(Self(clipped / cr(tr)));
        }
        Ok(Self(h))
    }

    /// Wraps a matrix that is a density by construction (e.g. the image of a
    /// density under a trace-preserving CP map). Only the Hermitian part is kept.
    pub(crate) fn from_trusted(m: CMat) -> Self {
        Self(hermitian_part(&m))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self(CMat::identity(n, n) / cr(n as f64))
    }

    /// Diagonal density with the given populations.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        Self::new(diag(populations))
    }

    /// `|psi><psi| / <psi|psi>`
    pub fn pure(psi: &CVec) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let v = psi / cr(norm);
        Ok(Self::from_trusted(projector(&v)))
    }

    /// Basis state `|k><k|`.
    pub fn basis(n: usize, k: usize) -> Self {
        Self(matrix_unit(n, k, k))
    }

    /// Convex combination `sum_i w_i rho_i`. Weights must be nonnegative and sum to one.
    pub fn mix(weights: &[f64], states: &[DensityMatrix]) -> Result<Self> {
        let first = states.first().ok_or(LinalgError::Empty)?;
        let mut acc = CMat::zeros(first.dim(), first.dim());
        for (w, s) in weights.iter().zip(states) {
            check_same_dim(&acc, s)?;
            acc += s.matrix() * cr(*w);
        }
        Self::new(acc)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    /// State functional `omega(A) = tr(A rho)`.
    pub fn expect(&self, a: &CMat) -> C64 {
        (a * &self.0).trace()
    }

    /// `omega(E_rs) = rho_sr` (zero-based indices).
    pub fn unit_expectation(&self, r: usize, s: usize) -> C64 {
        self.0[(s, r)]
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)].norm() <= tol))
    }
}

impl Deref for DensityMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityMatrix{}", self.0)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ComplexMatrix(self.0.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = ComplexMatrix::deserialize(deserializer)?;
        DensityMatrix::new(m.into_inner()).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Distances and commutators
// ---------------------------------------------------------------------------

/// `1/2 tr|A - B|` for Hermitian `A`, `B` of equal shape.
pub fn trace_norm_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b))
        .into_iter()
        .map(f64::abs)
        .sum::<f64>()
}

/// Trace distance `1/2 tr|rho - sigma|`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho, sigma)?;
    Ok(trace_norm_distance(rho, sigma).min(1.0))
}

/// Decides `1/2 tr|A - B| <= tol` and skips the eigensolver when the
/// Frobenius bounds `|X|_F <= |X|_1 <= sqrt(n)|X|_F` already settle it.
pub fn trace_distance_within(a: &CMat, b: &CMat, tol: f64) -> bool {
    let f = frobenius_distance(a, b);
    if 0.5 * f > tol {
        return false;
    }
    if 0.5 * (a.nrows() as f64).sqrt() * f <= tol {
        return true;
    }
    trace_norm_distance(a, b) <= tol
}

/// `|A B - B A|_F`
pub fn commutator_frobenius(a: &CMat, b: &CMat) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(frobenius(&(a * b - b * a)))
}
