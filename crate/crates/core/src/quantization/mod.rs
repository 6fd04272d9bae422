//! Transfer operators on observables and their quantization by diagonal Kraus
//! maps `Lambda(X) = sum_i V_i X V_i*` satisfying `M_{Lf} = sum_i V_i M_f V_i*`.

mod function;
mod solver;
mod transfer;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::gns::GnsError;
use crate::linalg::LinalgError;
use crate::measures::MeasureError;

pub use function::{random_function, shift_positive, StateFunction};
pub use solver::{
    branch_arrays, check_universal_quantization, diagonal_moduli, diagram_sides, m_lf_array,
    offdiagonal_consistency, random_positive_function, solve_diagonal_kraus, verify_diagram,
    ConsistencyReport, DiagonalSolution, PhaseConstraint, UniversalVerdict, DIAGONAL_TOL,
    UNIVERSAL_DEPTH, ZERO_MASS_RTOL,
};
pub use transfer::{transfer_apply, TransferSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("parse error at {0}")]
    Parse(String),

    #[error("matrix-unit index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid transfer weights: {0}")]
    WeightsInvalid(String),

    #[error("{branches} branches exceed the Kraus-rank bound n^2 = {} for n = {dim}", dim * dim)]
    TooManyBranches { branches: usize, dim: usize },

    #[error("branch {index} has dimension {found}, expected {expected}")]
    BranchDimension {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("branch {index} is not trace preserving")]
    BranchNotTracePreserving { index: usize },

    #[error("atom {atom} is not diagonal")]
    NotDiagonalSupported { atom: usize },

    #[error("diagonal mass {value:e} of f.mu at index {index} is not strictly positive")]
    ZeroDenominator { index: usize, value: f64 },

    #[error("diagonal mass {value:e} of branch {branch} at index {index} is negative")]
    NegativeNumerator {
        branch: usize,
        index: usize,
        value: f64,
    },

    #[error("off-diagonal equations are inconsistent (max residual {:e})", .0.max_residual)]
    Inconsistent(Box<ConsistencyReport>),

    #[error("branch {branch} is not a unitary conjugation")]
    NotMixedUnitary { branch: usize },

    #[error("invalid Kraus or phase data: {0}")]
    Shape(String),

    #[error(transparent)]
    Channel(#[from] ChannelError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Measure(#[from] MeasureError),

    #[error(transparent)]
    Gns(#[from] GnsError),
}

pub type Result<T> = std::result::Result<T, QuantError>;
