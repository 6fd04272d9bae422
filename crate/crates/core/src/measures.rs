//! Finitely supported probability measures on the state space.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{cr, trace_distance_within, CMat, DensityMatrix};
use crate::quantization::TransferSpec;

/// Atoms closer than this in trace distance are merged by the pushforward.
pub const MERGE_TOL: f64 = 1e-12;

/// Tolerance on `|sum of weights - 1|`.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("a measure needs at least one atom")]
    Empty,

    #[error("atom {index} has weight {weight}, weights must be finite and nonnegative")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("weights sum to {total}, expected 1")]
    NotNormalized { total: f64 },

    #[error("atom {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("transfer weights sum to {total}, the pushforward needs a stochastic family")]
    WeightsInvalid { total: f64 },
}

pub type Result<T> = std::result::Result<T, MeasureError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub state: DensityMatrix,
}

/// `mu = sum_m lambda_m delta_{omega_m}`
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let first = atoms.first().ok_or(MeasureError::Empty)?;
        let n = first.state.dim();
        let mut total = 0.0;
        for (index, a) in atoms.iter().enumerate() {
            if !a.weight.is_finite() || a.weight < 0.0 {
                return Err(MeasureError::NegativeWeight {
                    index,
                    weight: a.weight,
                });
            }
            if a.state.dim() != n {
                return Err(MeasureError::DimensionMismatch {
                    index,
                    expected: n,
                    found: a.state.dim(),
                });
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::NotNormalized { total });
        }
        Ok(Self { atoms })
    }

    pub fn from_pairs(pairs: Vec<(f64, DensityMatrix)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(weight, state)| Atom { weight, state })
                .collect(),
        )
    }

    pub fn dirac(state: DensityMatrix) -> Self {
        Self {
            atoms: vec![Atom { weight: 1.0, state }],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].state.dim()
    }

    /// `sum_m lambda_m omega_m`
    pub fn barycenter(&self) -> DensityMatrix {
        let n = self.dim();
        let m = self.atoms.iter().fold(CMat::zeros(n, n), |acc, a| {
            acc + a.state.matrix() * cr(a.weight)
        });
        DensityMatrix::from_trusted(m)
    }

    /// Every atom is diagonal up to `tol` entrywise.
    pub fn is_diagonal_supported(&self, tol: f64) -> bool {
        self.atoms.iter().all(|a| a.state.is_diagonal(tol))
    }

    /// First atom with an off-diagonal entry above `tol`.
    pub fn first_non_diagonal(&self, tol: f64) -> Option<usize> {
        self.atoms.iter().position(|a| !a.state.is_diagonal(tol))
    }

    /// `t mu + (1 - t) nu`, with atoms concatenated and not merged.
    pub fn mix(t: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        let scaled = |m: &DiscreteMeasure, s: f64| -> Vec<Atom> {
            m.atoms
                .iter()
                .map(|a| Atom {
                    weight: s * a.weight,
                    state: a.state.clone(),
                })
                .collect()
        };
        let mut atoms = scaled(mu, t);
        atoms.extend(scaled(nu, 1.0 - t));
        Self::new(atoms)
    }

    /// Largest mass discrepancy over trace-distance balls of radius `radius`
    /// centred at atoms of either measure. Zero for equal measures written
    /// with split or reordered atoms.
    pub fn discrepancy(&self, other: &DiscreteMeasure, radius: f64) -> f64 {
        let ball_mass = |m: &DiscreteMeasure, centre: &CMat| -> f64 {
            m.atoms
                .iter()
                .filter(|a| trace_distance_within(a.state.matrix(), centre, radius))
                .map(|a| a.weight)
                .sum()
        };
        self.atoms
            .iter()
            .chain(other.atoms.iter())
            .map(|a| (ball_mass(self, &a.state) - ball_mass(other, &a.state)).abs())
            .fold(0.0, f64::max)
    }
}

/// Pushforward `P_M mu = sum_i sum_m p_i lambda_m delta_{F_i(omega_m)}`.
///
/// Atoms are emitted in branch-major order; images within [`MERGE_TOL`] in trace
/// distance of an earlier image are merged into it, and zero-mass atoms dropped.
pub fn markov_pushforward(spec: &TransferSpec, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    if !spec.is_stochastic() {
        return Err(MeasureError::WeightsInvalid {
            total: spec.weights().iter().sum(),
        });
    }
    if mu.dim() != spec.dim() {
        return Err(MeasureError::DimensionMismatch {
            index: 0,
            expected: spec.dim(),
            found: mu.dim(),
        });
    }
    let mut out: Vec<Atom> = Vec::new();
    for (p, branch) in spec.weights().iter().zip(spec.branches()) {
        for atom in &mu.atoms {
            let weight = p * atom.weight;
            if weight == 0.0 {
                continue;
            }
            let image = DensityMatrix::from_trusted(branch.apply_matrix(&atom.state));
            match out
                .iter_mut()
                .find(|a| trace_distance_within(a.state.matrix(), &image, MERGE_TOL))
            {
                Some(existing) => existing.weight += weight,
                None => out.push(Atom {
                    weight,
                    state: image,
                }),
            }
        }
    }
    DiscreteMeasure::new(out)
}

#[derive(Serialize, Deserialize)]
struct MeasureDoc {
    atoms: Vec<Atom>,
}

impl Serialize for DiscreteMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureDoc {
            atoms: self.atoms.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = MeasureDoc::deserialize(deserializer)?;
        DiscreteMeasure::new(doc.atoms).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::pauli_x;
    use crate::channel::QuantumChannel;
    use crate::linalg::frobenius_distance;

    fn bit_flip_spec() -> TransferSpec {
        TransferSpec::mixed_unitary(vec![0.5, 0.5], vec![CMat::identity(2, 2), pauli_x()]).unwrap()
    }

    #[test]
    fn pushforward_of_a_basis_state_splits() {
        let mu = DiscreteMeasure::dirac(DensityMatrix::basis(2, 0));
        let pushed = markov_pushforward(&bit_flip_spec(), &mu).unwrap();
        assert_eq!(pushed.len(), 2);
        assert_eq!(pushed.atoms()[0].weight, 0.5);
        assert_eq!(pushed.atoms()[0].state, DensityMatrix::basis(2, 0));
        assert_eq!(pushed.atoms()[1].state, DensityMatrix::basis(2, 1));
        let bary = pushed.barycenter();
        assert!(frobenius_distance(&bary, &DensityMatrix::maximally_mixed(2)) < 1e-15);
    }

    #[test]
    fn fixed_atoms_merge() {
        let mu = DiscreteMeasure::dirac(DensityMatrix::maximally_mixed(2));
        let pushed = markov_pushforward(&bit_flip_spec(), &mu).unwrap();
        assert_eq!(pushed.len(), 1);
        assert!((pushed.atoms()[0].weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn substochastic_weights_rejected() {
        let t = TransferSpec::new(vec![0.3], vec![QuantumChannel::identity(2)]).unwrap();
        let mu = DiscreteMeasure::dirac(DensityMatrix::basis(2, 0));
        assert!(matches!(
            markov_pushforward(&t, &mu),
            Err(MeasureError::WeightsInvalid { .. })
        ));
    }

    #[test]
    fn validation() {
        assert_eq!(DiscreteMeasure::new(vec![]), Err(MeasureError::Empty));
        let s = DensityMatrix::basis(2, 0);
        assert!(matches!(
            DiscreteMeasure::from_pairs(vec![(0.5, s.clone())]),
            Err(MeasureError::NotNormalized { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::from_pairs(vec![(1.5, s.clone()), (-0.5, s.clone())]),
            Err(MeasureError::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteMeasure::from_pairs(vec![(0.5, s), (0.5, DensityMatrix::basis(3, 0))]),
            Err(MeasureError::DimensionMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn discrepancy_ignores_splitting() {
        let a = DensityMatrix::basis(2, 0);
        let b = DensityMatrix::basis(2, 1);
        let mu = DiscreteMeasure::from_pairs(vec![(0.5, a.clone()), (0.5, b.clone())]).unwrap();
        let nu = DiscreteMeasure::from_pairs(vec![(0.5, b.clone()), (0.25, a.clone()), (0.25, a)])
            .unwrap();
        assert!(mu.discrepancy(&nu, 1e-12) < 1e-15);
        let rho = DiscreteMeasure::dirac(b);
        assert!((mu.discrepancy(&rho, 1e-12) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let mu = DiscreteMeasure::from_pairs(vec![
            (0.25, DensityMatrix::basis(2, 0)),
            (0.75, DensityMatrix::maximally_mixed(2)),
        ])
        .unwrap();
        let s = serde_json::to_string(&mu).unwrap();
        assert!(s.starts_with(r#"{"atoms":[{"weight":0.25,"state":"#));
        let back: DiscreteMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mu);
    }
}
