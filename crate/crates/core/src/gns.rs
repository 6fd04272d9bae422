//! GNS data of a faithful state and the embedding `kappa_mu` of classical
//! observables into the commutant `I (x) M_n`.
//!
//! Tensor indices are ordered `a * n + b` for `|a> (x) |b>`, and the state is
//! represented by `pi(A) = A (x) I`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    cr, frobenius_distance, hermitian_eig, matrix_unit, CMat, CVec, ComplexMatrix, DensityMatrix,
    HermitianEigen, LinalgError,
};
use crate::measures::DiscreteMeasure;
use crate::quantization::StateFunction;

pub const FAITHFULNESS_FLOOR: f64 = 1e-8;

/// Allowed Frobenius distance between a supplied state and the barycenter.
pub const BARYCENTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnsError {
    #[error("state is not faithful: minimum eigenvalue {min_eigenvalue:e} below floor {floor:e}")]
    NotFaithful { min_eigenvalue: f64, floor: f64 },

    #[error("state differs from the barycenter of the measure by {distance:e}")]
    BarycenterMismatch { distance: f64 },

    #[error("index pair ({i}, {j}) out of range for dimension {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },

    #[error("function references index {index} but states have dimension {dim}")]
    FunctionIndex { index: usize, dim: usize },

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, GnsError>;

/// `(H, pi, Omega)` for `pi(A) = A (x) I` on `C^n (x) C^n` and
/// `Omega = sum_i sqrt(r_i) |r_i> (x) conj|r_i>`.
#[derive(Debug, Clone)]
pub struct GnsTriplet {
    dim: usize,
    rho: DensityMatrix,
    eig: HermitianEigen,
    cyclic: CVec,
}

impl GnsTriplet {
    pub fn new(rho: &DensityMatrix, floor: f64) -> Result<Self> {
        let eig = hermitian_eig(rho)?;
        let n = rho.dim();
        let min = eig.values[n - 1];
        if min < floor {
            return Err(GnsError::NotFaithful {
                min_eigenvalue: min,
                floor,
            });
        }
        let mut cyclic = CVec::zeros(n * n);
        for (i, r) in eig.values.iter().enumerate() {
            let u = eig.vectors.column(i);
            for a in 0..n {
                for b in 0..n {
                    cyclic[a * n + b] += u[a] * u[b].conj() * cr(r.sqrt());
                }
            }
        }
        Ok(Self {
            dim: n,
            rho: rho.clone(),
            eig,
            cyclic,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eig
    }

    /// The cyclic vector `|sqrt(rho)>`.
    pub fn cyclic_vector(&self) -> &CVec {
        &self.cyclic
    }

    /// `pi(A) = A (x) I`
    pub fn represent(&self, a: &CMat) -> CMat {
        a.kronecker(&CMat::identity(self.dim, self.dim))
    }

    /// `v_k = pi(E_ij) Omega` for `k = pair_index(i, j)`, as columns.
    pub fn basis_vectors(&self) -> CMat {
        let n = self.dim;
        let mut out = CMat::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let v = self.represent(&matrix_unit(n, i, j)) * &self.cyclic;
                out.set_column(i * n + j, &v);
            }
        }
        out
    }

    /// Gram array `<v_k | K v_l>`.
    pub fn gram(&self, k: &CMat) -> CMat {
        let v = self.basis_vectors();
        v.adjoint() * k * v
    }
}

/// Label `n(i - 1) + j` of the pair `(i, j)`, all 1-based.
pub fn pair_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i == 0 || j == 0 || i > n || j > n {
        return Err(GnsError::IndexOutOfRange { i, j, n });
    }
    Ok(n * (i - 1) + j)
}

fn check_function(f: &StateFunction, n: usize) -> Result<()> {
    f.check_dim(n).map_err(|_| GnsError::FunctionIndex {
        index: f.max_index(),
        dim: n,
    })
}

/// `M_f = sum_m lambda_m f(omega_m) omega_m^T`, so that
/// `[M_f]_rs = sum_m lambda_m f(omega_m) omega_m(E_rs)`.
pub fn m_f_array(f: &StateFunction, mu: &DiscreteMeasure) -> Result<CMat> {
    let n = mu.dim();
    check_function(f, n)?;
    Ok(weighted_transpose_sum(
        n,
        mu.atoms()
            .iter()
            .map(|a| (a.weight * f.eval(&a.state), &a.state)),
    ))
}

pub(crate) fn weighted_transpose_sum<'a>(
    n: usize,
    terms: impl Iterator<Item = (f64, &'a DensityMatrix)>,
) -> CMat {
    terms.fold(CMat::zeros(n, n), |acc, (w, s)| acc + s.transpose() * cr(w))
}

/// The array of `kappa_mu(f)`: one `n x n` block and the full `I (x) block`.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaArray {
    pub dim: usize,
    pub block: CMat,
    pub full: CMat,
}

impl KappaArray {
    pub fn from_block(block: CMat) -> Self {
        let n = block.nrows();
        let full = CMat::identity(n, n).kronecker(&block);
        Self {
            dim: n,
            block,
            full,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct KappaDoc {
    block: ComplexMatrix,
    dim: usize,
}

impl Serialize for KappaArray {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KappaDoc {
            block: ComplexMatrix::new(self.block.clone()).map_err(serde::ser::Error::custom)?,
            dim: self.dim,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for KappaArray {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = KappaDoc::deserialize(d)?;
        if doc.block.dim() != doc.dim {
            return Err(serde::de::Error::custom(format!(
                "block has dimension {}, expected {}",
                doc.block.dim(),
                doc.dim
            )));
        }
        Ok(Self::from_block(doc.block.into_inner()))
    }
}

fn resolve_state(mu: &DiscreteMeasure, rho: Option<&DensityMatrix>) -> Result<DensityMatrix> {
    let bary = mu.barycenter();
    match rho {
        None => Ok(bary),
        Some(r) => {
            if r.dim() != bary.dim() {
                return Err(LinalgError::DimensionMismatch {
                    expected: bary.dim(),
                    found: r.dim(),
                }
                .into());
            }
            let distance = frobenius_distance(r, &bary);
            if distance > BARYCENTER_TOL {
                return Err(GnsError::BarycenterMismatch { distance });
            }
            Ok(r.clone())
        }
    }
}

/// `kappa_mu(f)` relative to `rho`, which defaults to the barycenter of `mu`.
pub fn kappa_matrix(
    f: &StateFunction,
    mu: &DiscreteMeasure,
    rho: Option<&DensityMatrix>,
) -> Result<KappaArray> {
    let rho = resolve_state(mu, rho)?;
    GnsTriplet::new(&rho, FAITHFULNESS_FLOOR)?;
    Ok(KappaArray::from_block(m_f_array(f, mu)?))
}

/// Operator `O` with `<v_k | (I (x) O) v_l> = [I (x) M_f]_kl`.
///
/// In the eigenbasis of `rho` this is `O_ss' = [M_f]_ss' / sqrt(r_s r_s')`;
/// in the computational basis `O = B M_f B` with `B = conj(sqrt(rho))^-1`.
pub fn m_f_operator(
    f: &StateFunction,
    mu: &DiscreteMeasure,
    rho: Option<&DensityMatrix>,
) -> Result<CMat> {
    let rho = resolve_state(mu, rho)?;
    let gns = GnsTriplet::new(&rho, FAITHFULNESS_FLOOR)?;
    let m = m_f_array(f, mu)?;
    let inv_sqrt = gns.eig.map_values(|r| 1.0 / r.sqrt());
    let b = inv_sqrt.map(|z| z.conj());
    Ok(&b * m * &b)
}
