//! Completely positive maps in Kraus form.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{
    cr, frobenius_distance, hermitian_eig, trace, CMat, CVec, ComplexMatrix, DensityMatrix,
    LinalgError, C64,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("a channel needs at least one Kraus operator")]
    Empty,

    #[error("Kraus operator {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("channel is not trace preserving: |sum V*V - I|_F = {defect:e}")]
    NotTracePreserving { defect: f64 },

    #[error("operator {index} is not unitary: |U*U - I|_F = {defect:e}")]
    NotUnitary { index: usize, defect: f64 },

    #[error("invalid weights: {0}")]
    WeightsInvalid(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// Tolerance on `|sum V*V - I|_F` and `|sum VV* - I|_F`.
pub fn flag_tol(n: usize) -> f64 {
    1e-9 * n as f64
}

/// Tolerance on `|U*U - I|_F`.
pub fn unitary_tol(n: usize) -> f64 {
    1e-9 * (n as f64).sqrt()
}

pub const WEIGHT_TOL: f64 = 1e-12;

/// Weights and unitaries of a mixed-unitary channel `sum p_i U_i . U_i*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedUnitary {
    pub weights: Vec<f64>,
    pub unitaries: Vec<CMat>,
}

/// A CP map `rho -> sum_i V_i rho V_i*`, with flags computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    dim: usize,
    kraus: Vec<CMat>,
    trace_preserving: bool,
    unital: bool,
    cp: bool,
    mixed: Option<MixedUnitary>,
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    frobenius_distance(&(u.adjoint() * u), &CMat::identity(u.nrows(), u.ncols()))
}

pub fn validate_weights(weights: &[f64], tol: f64) -> Result<()> {
    if weights.is_empty() {
        return Err(ChannelError::WeightsInvalid("no weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(ChannelError::WeightsInvalid(format!(
            "weight {w} is negative or not finite"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(ChannelError::WeightsInvalid(format!(
            "weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl QuantumChannel {
    /// Builds a channel from Kraus operators. With `require_tp`, a map that is
    /// not trace preserving is rejected.
    pub fn new(kraus: Vec<CMat>, require_tp: bool) -> Result<Self> {
        let first = kraus.first().ok_or(ChannelError::Empty)?;
        let dim = ComplexMatrix::new(first.clone())?.dim();
        for (index, v) in kraus.iter().enumerate() {
            if v.nrows() != dim || v.ncols() != dim {
                return Err(ChannelError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: v.nrows().max(v.ncols()),
                });
            }
            ComplexMatrix::new(v.clone())?;
        }
        let tol = flag_tol(dim);
        let id = CMat::identity(dim, dim);
        let vv = kraus
            .iter()
            .fold(CMat::zeros(dim, dim), |acc, v| acc + v.adjoint() * v);
        let tp_defect = frobenius_distance(&vv, &id);
        if require_tp && tp_defect > tol {
            return Err(ChannelError::NotTracePreserving { defect: tp_defect });
        }
        let vv_star = kraus
            .iter()
            .fold(CMat::zeros(dim, dim), |acc, v| acc + v * v.adjoint());
        let mut channel = Self {
            dim,
            kraus,
            trace_preserving: tp_defect <= tol,
            unital: frobenius_distance(&vv_star, &id) <= tol,
            cp: true,
            mixed: None,
        };
        channel.cp = channel.choi().is_cp;
        Ok(channel)
    }

    /// `rho -> sum_i p_i U_i rho U_i*`, stored with Kraus operators `sqrt(p_i) U_i`.
    pub fn mixed_unitary(weights: Vec<f64>, unitaries: Vec<CMat>) -> Result<Self> {
        if weights.len() != unitaries.len() {
            return Err(ChannelError::WeightsInvalid(format!(
                "{} weights for {} unitaries",
                weights.len(),
                unitaries.len()
            )));
        }
        validate_weights(&weights, WEIGHT_TOL)?;
        let first = unitaries.first().ok_or(ChannelError::Empty)?;
        let n = first.nrows();
        for (index, u) in unitaries.iter().enumerate() {
            if u.nrows() != n || u.ncols() != n {
                return Err(ChannelError::DimensionMismatch {
                    index,
                    expected: n,
                    found: u.nrows().max(u.ncols()),
                });
            }
            let defect = unitarity_defect(u);
            if defect > unitary_tol(n) {
                return Err(ChannelError::NotUnitary { index, defect });
            }
        }
        let kraus = weights
            .iter()
            .zip(&unitaries)
            .map(|(p, u)| u * cr(p.sqrt()))
            .collect();
        let mut channel = Self::new(kraus, true)?;
        channel.mixed = Some(MixedUnitary { weights, unitaries });
        Ok(channel)
    }

    /// Unitary conjugation `rho -> U rho U*`.
    pub fn unitary(u: CMat) -> Result<Self> {
        Self::mixed_unitary(vec![1.0], vec![u])
    }

    pub fn identity(n: usize) -> Self {
        Self::unitary(CMat::identity(n, n)).expect("identity is unitary")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn is_unital(&self) -> bool {
        self.unital
    }

    pub fn is_cp(&self) -> bool {
        self.cp
    }

    pub fn mixed_unitary_parts(&self) -> Option<&MixedUnitary> {
        self.mixed.as_ref()
    }

    /// The unitary when the channel is a single unitary conjugation.
    pub fn single_unitary(&self) -> Option<&CMat> {
        match &self.mixed {
            Some(m) if m.unitaries.len() == 1 => Some(&m.unitaries[0]),
            _ => {
                if self.kraus.len() == 1
                    && unitarity_defect(&self.kraus[0]) <= unitary_tol(self.dim)
                {
                    Some(&self.kraus[0])
                } else {
                    None
                }
            }
        }
    }

    /// The linear action on an arbitrary matrix.
    pub fn apply_matrix(&self, x: &CMat) -> CMat {
        self.kraus
            .iter()
            .fold(CMat::zeros(self.dim, self.dim), |acc, v| {
                acc + v * x * v.adjoint()
            })
    }

    /// `sum_i V_i rho V_i*`. The channel must be trace preserving for the
    /// image to be a density.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            }
            .into());
        }
        if !self.trace_preserving {
            let defect = (trace(&self.apply_matrix(rho)) - cr(1.0)).norm();
            return Err(ChannelError::NotTracePreserving { defect });
        }
        Ok(DensityMatrix::from_trusted(self.apply_matrix(rho)))
    }

    /// `Phi^k(rho)`
    pub fn apply_power(&self, rho: &DensityMatrix, k: usize) -> Result<DensityMatrix> {
        let mut state = rho.clone();
        for _ in 0..k {
            state = self.apply(&state)?;
        }
        Ok(state)
    }

    /// Sequential composition: `self` first, then `next`.
    pub fn then(&self, next: &QuantumChannel) -> Result<QuantumChannel> {
        if next.dim != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: next.dim,
            }
            .into());
        }
        let kraus = next
            .kraus
            .iter()
            .flat_map(|b| self.kraus.iter().map(move |a| b * a))
            .collect();
        Self::new(kraus, false)
    }

    pub fn choi(&self) -> ChoiMatrix {
        choi_of_map(self.dim, |x| self.apply_matrix(x), flag_tol(self.dim))
    }

    pub fn superoperator(&self) -> Superoperator {
        let n2 = self.dim * self.dim;
        let matrix = self.kraus.iter().fold(CMat::zeros(n2, n2), |acc, v| {
            acc + v.map(|z| z.conj()).kronecker(v)
        });
        Superoperator {
            dim: self.dim,
            matrix,
        }
    }
}

/// Choi matrix `C = sum_ij E_ij (x) Phi(E_ij)` and its positivity verdict.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    pub matrix: CMat,
    pub min_eigenvalue: f64,
    pub is_cp: bool,
}

/// Choi matrix of an arbitrary linear map on `n x n` matrices, given by its
/// action. The map is CP iff `C` is positive semidefinite (up to `tol`).
pub fn choi_of_map(n: usize, map: impl Fn(&CMat) -> CMat, tol: f64) -> ChoiMatrix {
    let mut matrix = CMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let image = map(&crate::linalg::matrix_unit(n, i, j));
            matrix.view_mut((i * n, j * n), (n, n)).copy_from(&image);
        }
    }
    let min_eigenvalue = match hermitian_eig(&matrix) {
        Ok(e) => *e.values.last().expect("nonempty"),
        // a map that is not Hermiticity preserving cannot be CP
        Err(_) => f64::NEG_INFINITY,
    };
    ChoiMatrix {
        is_cp: min_eigenvalue >= -tol,
        matrix,
        min_eigenvalue,
    }
}

/// Column-major vectorization: `vec(X)[i + n j] = X[i, j]`.
pub fn vectorize(x: &CMat) -> CVec {
    CVec::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// Matrix of a linear map on `n x n` matrices acting on column-major vectorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub dim: usize,
    pub matrix: CMat,
}

impl Superoperator {
    pub fn identity(n: usize) -> Self {
        Self {
            dim: n,
            matrix: CMat::identity(n * n, n * n),
        }
    }

    pub fn apply_matrix(&self, x: &CMat) -> CMat {
        unvectorize(&(&self.matrix * vectorize(x)), self.dim)
    }

    /// Image of a density. The caller is responsible for the map preserving densities.
    pub fn apply(&self, rho: &DensityMatrix) -> crate::linalg::Result<DensityMatrix> {
        DensityMatrix::new(self.apply_matrix(rho))
    }

    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            matrix: &self.matrix * &other.matrix,
        }
    }

    /// `S^(2^k)` by repeated squaring.
    pub fn power_of_two(&self, k: u32) -> Superoperator {
        let mut m = self.matrix.clone();
        for _ in 0..k {
            m = &m * &m;
        }
        Superoperator {
            dim: self.dim,
            matrix: m,
        }
    }

    /// Complex eigenvalues from the Schur form; `None` if the QR iteration fails.
    pub fn eigenvalues(&self) -> Option<Vec<C64>> {
        self.matrix
            .clone()
            .try_schur(f64::EPSILON, 0)
            .and_then(|s| s.eigenvalues())
            .map(|v| v.iter().copied().collect())
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MixedDoc {
    weights: Vec<f64>,
    unitaries: Vec<ComplexMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ChannelDoc {
    Mixed {
        mixed_unitary: MixedDoc,
    },
    Kraus {
        dim: usize,
        kraus: Vec<ComplexMatrix>,
        #[serde(default = "default_true")]
        require_tp: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ChannelDoc {
    fn build(self) -> Result<QuantumChannel> {
        match self {
            ChannelDoc::Mixed { mixed_unitary } => QuantumChannel::mixed_unitary(
                mixed_unitary.weights,
                mixed_unitary
                    .unitaries
                    .into_iter()
                    .map(ComplexMatrix::into_inner)
                    .collect(),
            ),
            ChannelDoc::Kraus {
                dim,
                kraus,
                require_tp,
            } => {
                let kraus: Vec<CMat> = kraus.into_iter().map(ComplexMatrix::into_inner).collect();
                if let Some((index, v)) = kraus.iter().enumerate().find(|(_, v)| v.nrows() != dim) {
                    return Err(ChannelError::DimensionMismatch {
                        index,
                        expected: dim,
                        found: v.nrows(),
                    });
                }
                QuantumChannel::new(kraus, require_tp)
            }
        }
    }
}

impl Serialize for QuantumChannel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let to_cm = |m: &CMat| ComplexMatrix::new(m.clone()).expect("validated at construction");
        let doc = match &self.mixed {
            Some(m) => ChannelDoc::Mixed {
                mixed_unitary: MixedDoc {
                    weights: m.weights.clone(),
                    unitaries: m.unitaries.iter().map(to_cm).collect(),
                },
            },
            None => ChannelDoc::Kraus {
                dim: self.dim,
                kraus: self.kraus.iter().map(to_cm).collect(),
                require_tp: self.trace_preserving,
            },
        };
        doc.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuantumChannel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        ChannelDoc::deserialize(deserializer)?
            .build()
            .map_err(serde::de::Error::custom)
    }
}
