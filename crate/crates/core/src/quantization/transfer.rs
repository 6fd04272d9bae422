use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{QuantError, StateFunction};
use crate::channel::{validate_weights, QuantumChannel, WEIGHT_TOL};
use crate::linalg::{cr, CMat, DensityMatrix, LinalgError};

/// Weighted branch maps `(p_i, F_i)` defining the transfer operator
/// `(L f)(omega) = sum_i p_i f(F_i(omega))` and the channel `Phi = sum_i p_i F_i`.
///
/// Branches are trace-preserving channels of one dimension `n`; at most `n^2`
/// branches are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    dim: usize,
    weights: Vec<f64>,
    branches: Vec<QuantumChannel>,
}

impl TransferSpec {
    pub fn new(weights: Vec<f64>, branches: Vec<QuantumChannel>) -> Result<Self, QuantError> {
        if weights.len() != branches.len() {
            return Err(QuantError::WeightsInvalid(format!(
                "{} weights for {} branches",
                weights.len(),
                branches.len()
            )));
        }
        let dim = branches
            .first()
            .ok_or_else(|| QuantError::WeightsInvalid("no branches".into()))?
            .dim();
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(QuantError::WeightsInvalid(format!(
                "weight {w} is negative or not finite"
            )));
        }
        if branches.len() > dim * dim {
            return Err(QuantError::TooManyBranches {
                branches: branches.len(),
                dim,
            });
        }
        for (index, b) in branches.iter().enumerate() {
            if b.dim() != dim {
                return Err(QuantError::BranchDimension {
                    index,
                    expected: dim,
                    found: b.dim(),
                });
            }
            if !b.is_trace_preserving() {
                return Err(QuantError::BranchNotTracePreserving { index });
            }
        }
        Ok(Self {
            dim,
            weights,
            branches,
        })
    }

    /// Branches given as unitary conjugations `F_i = U_i . U_i*`.
    pub fn mixed_unitary(weights: Vec<f64>, unitaries: Vec<CMat>) -> Result<Self, QuantError> {
        let branches = unitaries
            .into_iter()
            .map(QuantumChannel::unitary)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(weights, branches)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn branches(&self) -> &[QuantumChannel] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Weights sum to one.
    pub fn is_stochastic(&self) -> bool {
        validate_weights(&self.weights, WEIGHT_TOL).is_ok()
    }

    pub fn require_stochastic(&self) -> Result<(), QuantError> {
        validate_weights(&self.weights, WEIGHT_TOL)
            .map_err(|e| QuantError::WeightsInvalid(e.to_string()))
    }

    pub fn check_state(&self, state: &DensityMatrix) -> Result<(), QuantError> {
        if state.dim() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: state.dim(),
            }
            .into());
        }
        Ok(())
    }

    /// `F_i(omega)`
    pub fn branch_image(
        &self,
        i: usize,
        state: &DensityMatrix,
    ) -> Result<DensityMatrix, QuantError> {
        self.check_state(state)?;
        Ok(self.branches[i].apply(state)?)
    }

    /// `Phi(X) = sum_i p_i F_i(X)` on an arbitrary matrix.
    pub fn induced_apply(&self, x: &CMat) -> CMat {
        self.weights
            .iter()
            .zip(&self.branches)
            .fold(CMat::zeros(self.dim, self.dim), |acc, (p, b)| {
                acc + b.apply_matrix(x) * cr(*p)
            })
    }

    /// `Phi = sum_i p_i F_i` in Kraus form.
    pub fn induced_channel(&self) -> Result<QuantumChannel, QuantError> {
        let unitaries: Option<Vec<CMat>> = self
            .branches
            .iter()
            .map(|b| b.single_unitary().cloned())
            .collect();
        if let (Some(u), true) = (unitaries, self.is_stochastic()) {
            return Ok(QuantumChannel::mixed_unitary(self.weights.clone(), u)?);
        }
        let kraus = self
            .weights
            .iter()
            .zip(&self.branches)
            .flat_map(|(p, b)| b.kraus().iter().map(move |v| v * cr(p.sqrt())))
            .collect();
        Ok(QuantumChannel::new(kraus, false)?)
    }
}

/// `(L f)(omega) = sum_i p_i f(F_i(omega))`
pub fn transfer_apply(
    spec: &TransferSpec,
    f: &StateFunction,
    state: &DensityMatrix,
) -> Result<f64, QuantError> {
    spec.check_state(state)?;
    f.check_dim(spec.dim())?;
    let mut total = 0.0;
    for (i, p) in spec.weights().iter().enumerate() {
        total += p * f.eval(spec.branch_image(i, state)?.matrix());
    }
    Ok(total)
}

#[derive(Serialize, Deserialize)]
struct TransferDoc {
    weights: Vec<f64>,
    branches: Vec<QuantumChannel>,
}

impl Serialize for TransferSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TransferDoc {
            weights: self.weights.clone(),
            branches: self.branches.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransferSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = TransferDoc::deserialize(deserializer)?;
        TransferSpec::new(doc.weights, doc.branches).map_err(serde::de::Error::custom)
    }
}
