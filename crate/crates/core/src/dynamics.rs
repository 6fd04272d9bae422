//! Asymptotics of iterated channels: orbits, omega-limit cycles, Cesaro
//! fixed points and the projection onto the attractor.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{vectorize, ChannelError, QuantumChannel, Superoperator};
use crate::linalg::{
    commutator_frobenius, cr, frobenius, trace_distance_within, trace_norm_distance, CMat,
    DensityMatrix, LinalgError, C64,
};
use crate::random::dirichlet_uniform;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("spectral failure: {0}")]
    SpectralFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Channel(#[from] ChannelError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// `[Phi(rho0), Phi^2(rho0), ..., Phi^steps(rho0)]`
pub fn orbit(
    channel: &QuantumChannel,
    rho0: &DensityMatrix,
    steps: usize,
) -> Result<Vec<DensityMatrix>> {
    if steps == 0 {
        return Err(DynamicsError::InvalidParameter(
            "orbit length must be >= 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(steps);
    let mut state = channel.apply(rho0)?;
    for _ in 1..steps {
        let next = channel.apply(&state)?;
        out.push(state);
        state = next;
    }
    out.push(state);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleParams {
    /// Trace-distance tolerance for `Phi^(t+p)(rho0) ~ Phi^t(rho0)`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_period: usize,
    /// Consecutive iterations a period must hold before it is accepted.
    pub window: usize,
}

impl Default for CycleParams {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            max_period: 64,
            window: 16,
        }
    }
}

/// A detected periodic omega-limit set.
///
/// `cycle[j]` is the tail iterate `Phi^t(rho0)` with `t = j (mod period)`, so
/// `Phi` maps `cycle[j]` to `cycle[(j + 1) % period]`.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaLimitSet {
    pub period: usize,
    pub cycle: Vec<DensityMatrix>,
    pub burn_in: usize,
    pub residual: f64,
}

pub fn detect_limit_cycle(
    channel: &QuantumChannel,
    rho0: &DensityMatrix,
    params: &CycleParams,
) -> Result<OmegaLimitSet> {
    if params.tol.is_nan() || params.tol <= 0.0 || params.max_period == 0 || params.window == 0 {
        return Err(DynamicsError::InvalidParameter(format!(
            "need tol > 0, max_period >= 1, window >= 1 (got {params:?})"
        )));
    }
    let tol = params.tol;
    let pmax = params.max_period;
    // history[k] = rho_{t - k}
    let mut history: VecDeque<DensityMatrix> = VecDeque::with_capacity(pmax + 1);
    history.push_front(rho0.clone());
    let mut streak = vec![0usize; pmax + 1];

    for t in 1..=params.max_iter {
        let next = channel.apply(&history[0])?;
        history.push_front(next);
        if history.len() > pmax + 1 {
            history.pop_back();
        }
        for p in 1..=pmax.min(t) {
            if trace_distance_within(&history[0], &history[p], tol) {
                streak[p] += 1;
            } else {
                streak[p] = 0;
            }
        }
        let Some(p) = (1..=pmax).find(|&p| streak[p] >= params.window) else {
            continue;
        };
        // a divisor of p may already close the tail cycle
        let period = (1..=p)
            .filter(|q| p % q == 0)
            .find(|&q| {
                (0..p).all(|k| {
                    k + q >= history.len()
                        || trace_distance_within(&history[k], &history[k + q], tol)
                })
            })
            .unwrap_or(p);

        let mut cycle: Vec<Option<DensityMatrix>> = vec![None; period];
        for k in 0..period {
            cycle[(t - k) % period] = Some(history[k].clone());
        }
        let cycle: Vec<DensityMatrix> = cycle.into_iter().map(|s| s.expect("filled")).collect();
        let mut residual: f64 = 0.0;
        for state in &cycle {
            let image = channel.apply_power(state, period)?;
            residual = residual.max(trace_norm_distance(&image, state));
        }
        return Ok(OmegaLimitSet {
            period,
            cycle,
            burn_in: t,
            residual,
        });
    }
    Err(DynamicsError::NoConvergence {
        iterations: params.max_iter,
        detail: format!("no period <= {pmax} stabilized for {} steps", params.window),
    })
}

/// Unique fixed point in the closed convex hull of the omega-limit set of
/// `eta`, as the limit of the window averages
/// `B_k = (1/k) sum_{k <= m < 2k} Phi^m(eta)` for `k = 1, 2, 4, ...`.
///
/// `B_k` is the Cesaro mean of the orbit of `Phi^k(eta)` and has the same limit
/// as `(1/k) sum_{m<k} Phi^m(eta)`, without the `O(1/k)` transient term. With
/// `A_k` the plain mean and `S` the superoperator, `B_k = S^k A_k` and
/// `A_2k = (A_k + B_k) / 2`. Iteration stops once two successive window
/// averages are within `tol` in trace distance and the average is fixed by
/// `Phi` within `10 tol`. `max_terms` bounds the orbit length `2k`.
pub fn cesaro_fixed_point(
    channel: &QuantumChannel,
    eta: &DensityMatrix,
    tol: f64,
    max_terms: u64,
) -> Result<DensityMatrix> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(DynamicsError::InvalidParameter(
            "tol must be positive".into(),
        ));
    }
    if eta.dim() != channel.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: channel.dim(),
            found: eta.dim(),
        }
        .into());
    }
    let n = channel.dim();
    let s = channel.superoperator().matrix;
    let v = vectorize(eta);
    let unvec = |x: &nalgebra::DVector<C64>| CMat::from_column_slice(n, n, x.as_slice());

    let mut power = s.clone(); // S^k
    let mut mean = v.clone(); // A_k eta
    let mut previous: Option<CMat> = None;
    let mut k: u64 = 1;
    while k.saturating_mul(2) <= max_terms {
        let window = &power * &mean;
        let current = unvec(&window);
        if let Some(prev) = &previous {
            if trace_norm_distance(&current, prev) <= tol {
                let image = channel.apply_matrix(&current);
                if trace_norm_distance(&image, &current) <= 10.0 * tol {
                    return Ok(DensityMatrix::new(current)?);
                }
            }
        }
        previous = Some(current);
        mean = (mean + window) * cr(0.5);
        power = &power * &power;
        k *= 2;
    }
    Err(DynamicsError::NoConvergence {
        iterations: k as usize,
        detail: format!("Cesaro averages did not settle within {tol:e}"),
    })
}

const CLUSTER_TOL: f64 = 1e-6;
const NULL_TOL: f64 = 1e-7;

/// Spectral projection of the channel's superoperator onto its peripheral
/// eigenvalues `|lambda| >= 1 - tol`.
///
/// Peripheral eigenvalues of a trace-preserving CP map are semisimple, so the
/// projection is `sum R (L* R)^-1 L*` over clusters of equal eigenvalues, with
/// `R`, `L` bases of the right and left eigenspaces. A cluster whose
/// eigenspace is smaller than its multiplicity is reported as defective.
pub fn attractor_projection(channel: &QuantumChannel, tol: f64) -> Result<Superoperator> {
    if !channel.is_trace_preserving() {
        return Err(DynamicsError::InvalidParameter(
            "attractor projection needs a trace-preserving channel".into(),
        ));
    }
    let sup = channel.superoperator();
    let s = &sup.matrix;
    let size = s.nrows();
    let eigenvalues = sup
        .eigenvalues()
        .ok_or_else(|| DynamicsError::SpectralFailure("Schur iteration failed".into()))?;
    let mut peripheral: Vec<C64> = eigenvalues
        .into_iter()
        .filter(|l| l.norm() >= 1.0 - tol)
        .collect();
    if peripheral.is_empty() {
        return Err(DynamicsError::SpectralFailure(
            "no eigenvalue on the unit circle".into(),
        ));
    }
    peripheral.sort_by(|a, b| a.arg().total_cmp(&b.arg()));

    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for l in peripheral {
        match clusters
            .iter_mut()
            .find(|cl| cl.iter().any(|m| (m - l).norm() <= CLUSTER_TOL))
        {
            Some(cl) => cl.push(l),
            None => clusters.push(vec![l]),
        }
    }

    let scale = frobenius(s).max(1.0);
    let mut projection = CMat::zeros(size, size);
    for cluster in clusters {
        let center = cluster.iter().sum::<C64>() / cr(cluster.len() as f64);
        let shifted = s - CMat::identity(size, size) * center;
        let svd = shifted.svd(true, true);
        let u = svd.u.as_ref().expect("requested");
        let v_t = svd.v_t.as_ref().expect("requested");
        let null: Vec<usize> = (0..size)
            .filter(|&i| svd.singular_values[i] <= NULL_TOL * scale)
            .collect();
        if null.len() != cluster.len() {
            return Err(DynamicsError::SpectralFailure(format!(
                "eigenvalue {center} has multiplicity {} but a {}-dimensional eigenspace",
                cluster.len(),
                null.len()
            )));
        }
        let right = CMat::from_fn(size, null.len(), |i, j| v_t[(null[j], i)].conj());
        let left = CMat::from_fn(size, null.len(), |i, j| u[(i, null[j])]);
        let gram = left.adjoint() * &right;
        let inverse = gram.try_inverse().ok_or_else(|| {
            DynamicsError::SpectralFailure(format!(
                "left and right eigenspaces of {center} are not in duality"
            ))
        })?;
        projection += right * inverse * left.adjoint();
    }
    Ok(Superoperator {
        dim: channel.dim(),
        matrix: projection,
    })
}

/// Points of `states` followed by random convex combinations of them. Each
/// combination uses at most `dim^2 + 1` support points.
pub fn hull_points<R: Rng + ?Sized>(
    states: &[DensityMatrix],
    samples: usize,
    rng: &mut R,
) -> Vec<DensityMatrix> {
    let mut points = states.to_vec();
    let Some(first) = states.first() else {
        return points;
    };
    let cap = (first.dim() * first.dim() + 1).min(states.len());
    for _ in 0..samples {
        let support = rng.random_range(1..=cap);
        let chosen = sample(rng, states.len(), support);
        let weights = dirichlet_uniform(support, rng);
        let mut acc = CMat::zeros(first.dim(), first.dim());
        for (w, idx) in weights.iter().zip(chosen.iter()) {
            acc += states[idx].matrix() * cr(*w);
        }
        points.push(DensityMatrix::from_trusted(acc));
    }
    points
}

#[derive(Debug, Clone, Serialize)]
pub struct IsometryReport {
    pub max_distortion: f64,
    pub sample_count: usize,
    pub pairs_checked: usize,
    pub within_tol: bool,
}

/// Largest `|d(Phi x, Phi y) - d(x, y)|` over all pairs drawn from `states`
/// and `hull_samples` random points of their convex hull.
pub fn verify_isometry<R: Rng + ?Sized>(
    channel: &QuantumChannel,
    states: &[DensityMatrix],
    hull_samples: usize,
    tol: f64,
    rng: &mut R,
) -> Result<IsometryReport> {
    if states.is_empty() {
        return Err(DynamicsError::InvalidParameter("empty state set".into()));
    }
    let points = hull_points(states, hull_samples, rng);
    let images = points
        .iter()
        .map(|p| channel.apply(p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut max_distortion: f64 = 0.0;
    let mut pairs = 0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let before = trace_norm_distance(&points[i], &points[j]);
            let after = trace_norm_distance(&images[i], &images[j]);
            max_distortion = max_distortion.max((after - before).abs());
            pairs += 1;
        }
    }
    Ok(IsometryReport {
        max_distortion,
        sample_count: points.len(),
        pairs_checked: pairs,
        within_tol: max_distortion <= tol,
    })
}

/// Largest `|[x, y]|_F` over pairs from `states` and random points of their hull.
pub fn verify_commuting_hull<R: Rng + ?Sized>(
    states: &[DensityMatrix],
    hull_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if states.is_empty() {
        return Err(DynamicsError::InvalidParameter("empty state set".into()));
    }
    let points = hull_points(states, hull_samples, rng);
    let mut max: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            max = max.max(commutator_frobenius(&points[i], &points[j])?);
        }
    }
    Ok(max)
}
