//! Declarative experiments: a JSON document names a computation, its input
//! documents and its parameters, and running it yields a JSON report.
//!
//! ```json
//! {
//!   "kind": "limit",
//!   "inputs": { "channel": { "catalog": "cnot" }, "state": { "random": 4 } },
//!   "params": { "seed": 7, "tol": 1e-9 }
//! }
//! ```
//!
//! An input is either an inline document or a string path, resolved against
//! the directory of the scenario file.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog;
use crate::channel::{ChannelError, QuantumChannel};
use crate::dynamics::{
    attractor_projection, cesaro_fixed_point, detect_limit_cycle, orbit, verify_commuting_hull,
    verify_isometry, CycleParams, DynamicsError, OmegaLimitSet,
};
use crate::gns::{kappa_matrix, m_f_array, GnsError};
use crate::linalg::{
    frobenius_distance, matrix_to_json, trace_norm_distance, CMat, ComplexMatrix, DensityMatrix,
    LinalgError,
};
use crate::measures::{markov_pushforward, DiscreteMeasure, MeasureError};
use crate::quantization::{
    check_universal_quantization, diagonal_moduli, diagram_sides, offdiagonal_consistency,
    solve_diagonal_kraus, verify_diagram, QuantError, StateFunction, TransferSpec,
};
use crate::random::random_density;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const DEFAULT_TOL: f64 = 1e-9;
const DEFAULT_STEPS: usize = 100;
const DEFAULT_HULL_SAMPLES: usize = 50;
const DEFAULT_FUNCTION_SAMPLES: usize = 64;
const DEFAULT_CESARO_TERMS: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("{message}")]
    Numerical {
        message: String,
        detail: Option<Value>,
    },

    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Validation { .. } => 1,
            Self::Numerical { .. } => 2,
            Self::Io { .. } => 3,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, extra) = match self {
            Self::Parse { field, .. } => ("parse", json!({ "field": field })),
            Self::Validation { field, .. } => ("validation", json!({ "field": field })),
            Self::Numerical { detail, .. } => ("numerical", json!({ "detail": detail })),
            Self::Io { path, .. } => ("io", json!({ "path": path })),
        };
        let mut obj = json!({ "kind": kind, "message": self.to_string() });
        if let (Some(o), Value::Object(e)) = (obj.as_object_mut(), extra) {
            o.extend(e);
        }
        json!({ "error": obj })
    }

    fn validation(field: &str, message: impl ToString) -> Self {
        Self::Validation {
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

type Result<T> = std::result::Result<T, ScenarioError>;

fn from_dynamics(context: &str, e: DynamicsError) -> ScenarioError {
    match e {
        DynamicsError::NoConvergence { .. } | DynamicsError::SpectralFailure(_) => {
            ScenarioError::Numerical {
                message: format!("{context}: {e}"),
                detail: None,
            }
        }
        other => ScenarioError::validation(context, other),
    }
}

fn from_quant(context: &str, e: QuantError) -> ScenarioError {
    match e {
        QuantError::Inconsistent(report) => ScenarioError::Numerical {
            message: format!("{context}: {}", QuantError::Inconsistent(report.clone())),
            detail: serde_json::to_value(&*report).ok(),
        },
        other => ScenarioError::validation(context, other),
    }
}

fn from_other(context: &str, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::validation(context, e)
}

impl From<MeasureError> for ScenarioError {
    fn from(e: MeasureError) -> Self {
        from_other("inputs.measure", e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Evolve,
    Limit,
    Fixpoint,
    Quantize,
    Verify,
    Universal,
    Markov,
}

impl ScenarioKind {
    fn required_inputs(self) -> &'static [&'static str] {
        match self {
            Self::Evolve | Self::Limit | Self::Fixpoint => &["channel", "state"],
            Self::Quantize | Self::Verify => &["transfer", "measure", "function"],
            Self::Universal | Self::Markov => &["transfer", "measure"],
        }
    }

    /// Orbit kinds, which can emit a CSV trace.
    pub fn has_trace(self) -> bool {
        matches!(self, Self::Evolve | Self::Limit)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Value>,
}

impl Inputs {
    fn get(&self, name: &str) -> Option<&Value> {
        match name {
            "channel" => self.channel.as_ref(),
            "state" => self.state.as_ref(),
            "transfer" => self.transfer.as_ref(),
            "measure" => self.measure.as_ref(),
            "function" => self.function.as_ref(),
            "kraus" => self.kraus.as_ref(),
            "phases" => self.phases.as_ref(),
            _ => None,
        }
    }
}

/// Tunables. Unset fields take per-kind defaults; command-line flags are
/// overlaid with [`Params::overlay`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Params {
    pub fn overlay(&mut self, flags: &Params) {
        macro_rules! take {
            ($($f:ident),*) => { $( if flags.$f.is_some() { self.$f = flags.$f; } )* };
        }
        take!(tol, max_iter, max_period, window, steps, samples, seed);
    }

    fn tol(&self) -> Result<f64> {
        let tol = self.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(ScenarioError::validation("params.tol", "must be positive"));
        }
        Ok(tol)
    }

    fn cycle_params(&self) -> Result<CycleParams> {
        let d = CycleParams::default();
        Ok(CycleParams {
            tol: self.tol()?,
            max_iter: self.max_iter.map_or(d.max_iter, |m| m as usize),
            max_period: self.max_period.unwrap_or(d.max_period),
            window: self.window.unwrap_or(d.window),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub params: Params,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn typed<T: DeserializeOwned>(value: Value, field: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let field = if inner == "." || inner.is_empty() {
            field.to_string()
        } else {
            format!("{field}.{inner}")
        };
        ScenarioError::Validation {
            field,
            message: e.into_inner().to_string(),
        }
    })
}

fn read_json(path: &Path, field: &str) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        field: field.to_string(),
        message: format!("{}: {e}", path.display()),
    })
}

impl Scenario {
    pub fn new(kind: ScenarioKind, inputs: Inputs, params: Params, base_dir: PathBuf) -> Self {
        Self {
            kind,
            inputs,
            params,
            base_dir,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let value = read_json(path, "scenario")?;
        let mut s: Scenario = typed(value, "scenario")?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn from_json(value: Value, base_dir: PathBuf) -> Result<Self> {
        let mut s: Scenario = typed(value, "scenario")?;
        s.base_dir = base_dir;
        Ok(s)
    }

    /// The input document with file references resolved.
    fn document(&self, name: &str) -> Result<Option<Value>> {
        let field = format!("inputs.{name}");
        match self.inputs.get(name) {
            None => Ok(None),
            Some(Value::String(path)) => read_json(&self.base_dir.join(path), &field).map(Some),
            Some(v) => Ok(Some(v.clone())),
        }
    }
}

struct Context<'a> {
    scenario: &'a Scenario,
    digests: Map<String, Value>,
    rng: ChaCha8Rng,
}

fn digest(value: &Value) -> String {
    let bytes = serde_json::to_vec(value).expect("JSON values serialize");
    format!("sha256:{}", hex::encode(Sha256::digest(&bytes)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogChannel {
    catalog: String,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    dim: Option<usize>,
}

impl CatalogChannel {
    fn build(self) -> std::result::Result<QuantumChannel, String> {
        let need =
            |v: Option<f64>, name: &str| v.ok_or_else(|| format!("missing parameter {name}"));
        let ch: std::result::Result<QuantumChannel, ChannelError> = match self.catalog.as_str() {
            "cnot" => Ok(catalog::cnot_channel()),
            "amplitude_damping" => catalog::amplitude_damping(need(self.gamma, "gamma")?),
            "bit_flip" => catalog::bit_flip(need(self.p, "p")?),
            "identity" => Ok(QuantumChannel::identity(self.dim.unwrap_or(2))),
            other => return Err(format!("unknown catalog channel {other:?}")),
        };
        ch.map_err(|e| e.to_string())
    }
}

impl<'a> Context<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        Self {
            scenario,
            digests: Map::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.params.seed.unwrap_or(0)),
        }
    }

    fn document(&mut self, name: &str) -> Result<Value> {
        let doc = self
            .scenario
            .document(name)?
            .ok_or_else(|| ScenarioError::validation(&format!("inputs.{name}"), "missing"))?;
        self.digests
            .insert(name.to_string(), Value::String(digest(&doc)));
        Ok(doc)
    }

    fn optional_document(&mut self, name: &str) -> Result<Option<Value>> {
        if self.scenario.inputs.get(name).is_none() {
            return Ok(None);
        }
        self.document(name).map(Some)
    }

    fn channel(&mut self) -> Result<QuantumChannel> {
        let doc = self.document("channel")?;
        if doc.get("catalog").is_some() {
            let spec: CatalogChannel = typed(doc, "inputs.channel")?;
            return spec
                .build()
                .map_err(|m| ScenarioError::validation("inputs.channel", m));
        }
        typed(doc, "inputs.channel")
    }

    fn state(&mut self, dim: usize) -> Result<DensityMatrix> {
        let doc = self.document("state")?;
        let field = "inputs.state";
        let state = match &doc {
            Value::Object(o) if o.contains_key("random") => {
                let n: usize = typed(o["random"].clone(), "inputs.state.random")?;
                random_density(n, &mut self.rng)
            }
            Value::Object(o) if o.contains_key("maximally_mixed") => {
                let n: usize = typed(o["maximally_mixed"].clone(), "inputs.state.maximally_mixed")?;
                DensityMatrix::maximally_mixed(n)
            }
            Value::Object(o) if o.contains_key("basis") => {
                let (n, k): (usize, usize) = typed(o["basis"].clone(), "inputs.state.basis")?;
                if k >= n {
                    return Err(ScenarioError::validation(
                        "inputs.state.basis",
                        "index out of range",
                    ));
                }
                DensityMatrix::basis(n, k)
            }
            _ => typed(doc, field)?,
        };
        if state.dim() != dim {
            return Err(ScenarioError::validation(
                field,
                LinalgError::DimensionMismatch {
                    expected: dim,
                    found: state.dim(),
                },
            ));
        }
        Ok(state)
    }

    fn transfer(&mut self) -> Result<TransferSpec> {
        let doc = self.document("transfer")?;
        typed(doc, "inputs.transfer")
    }

    fn measure(&mut self) -> Result<DiscreteMeasure> {
        let doc = self.document("measure")?;
        typed(doc, "inputs.measure")
    }

    fn function(&mut self) -> Result<StateFunction> {
        let doc = self.document("function")?;
        StateFunction::from_json(&doc).map_err(|e| from_other("inputs.function", e))
    }
}

/// Result of a scenario run: the report and, for orbit kinds, a CSV trace.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub trace: Option<String>,
}

/// Report without its timestamp, for reproducibility comparisons.
pub fn strip_timestamp(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(o) = r.as_object_mut() {
        o.remove("timestamp");
    }
    r
}

fn states_json(states: &[DensityMatrix]) -> Value {
    Value::Array(states.iter().map(|s| matrix_to_json(s)).collect())
}

fn limit_json(l: &OmegaLimitSet) -> Value {
    json!({
        "period": l.period,
        "burn_in": l.burn_in,
        "residual": l.residual,
        "cycle": states_json(&l.cycle),
    })
}

/// CSV with columns `step, trace_distance_to_previous, trace_distance_to_cycle`.
/// Step `t` is `Phi^t(rho0)`; its cycle reference is `cycle[t mod period]`.
pub fn emit_trace(
    rho0: &DensityMatrix,
    orbit: &[DensityMatrix],
    limit: Option<&OmegaLimitSet>,
) -> std::result::Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "step",
        "trace_distance_to_previous",
        "trace_distance_to_cycle",
    ])?;
    let mut previous = rho0;
    for (i, state) in orbit.iter().enumerate() {
        let t = i + 1;
        let to_cycle = limit
            .map(|l| trace_norm_distance(state, &l.cycle[t % l.period]).to_string())
            .unwrap_or_default();
        w.write_record([
            t.to_string(),
            trace_norm_distance(state, previous).to_string(),
            to_cycle,
        ])?;
        previous = state;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV of numbers is UTF-8"))
}

fn trace_csv(
    rho0: &DensityMatrix,
    orbit: &[DensityMatrix],
    limit: Option<&OmegaLimitSet>,
) -> Result<String> {
    emit_trace(rho0, orbit, limit).map_err(|e| ScenarioError::Io {
        path: "trace".into(),
        message: e.to_string(),
    })
}

fn run_evolve(cx: &mut Context) -> Result<(Value, Option<String>)> {
    let ch = cx.channel()?;
    let rho0 = cx.state(ch.dim())?;
    let params = &cx.scenario.params;
    let steps = params.steps.unwrap_or(DEFAULT_STEPS);
    let states = orbit(&ch, &rho0, steps).map_err(|e| from_dynamics("evolve", e))?;
    let limit = detect_limit_cycle(&ch, &rho0, &params.cycle_params()?).ok();
    let mut previous = &rho0;
    let mut steps_out = Vec::with_capacity(states.len());
    for s in &states {
        steps_out.push(trace_norm_distance(s, previous));
        previous = s;
    }
    let trace = trace_csv(&rho0, &states, limit.as_ref())?;
    let result = json!({
        "steps": steps,
        "final_state": matrix_to_json(states.last().expect("steps >= 1")),
        "trace_distance_to_previous": steps_out,
        "limit": limit.as_ref().map(limit_json),
    });
    Ok((result, Some(trace)))
}

fn run_limit(cx: &mut Context) -> Result<(Value, Option<String>)> {
    let ch = cx.channel()?;
    let rho0 = cx.state(ch.dim())?;
    let params = cx.scenario.params.clone();
    let cycle_params = params.cycle_params()?;
    let limit =
        detect_limit_cycle(&ch, &rho0, &cycle_params).map_err(|e| from_dynamics("limit", e))?;
    let hull = params.samples.unwrap_or(DEFAULT_HULL_SAMPLES);
    let commuting = verify_commuting_hull(&limit.cycle, hull, &mut cx.rng)
        .map_err(|e| from_dynamics("limit", e))?;
    let isometry = verify_isometry(
        &ch,
        &limit.cycle,
        hull,
        cycle_params.tol * 10.0,
        &mut cx.rng,
    )
    .map_err(|e| from_dynamics("limit", e))?;
    let steps = params.steps.unwrap_or(limit.burn_in.max(1));
    let states = orbit(&ch, &rho0, steps).map_err(|e| from_dynamics("limit", e))?;
    let trace = trace_csv(&rho0, &states, Some(&limit))?;
    let mut result = limit_json(&limit);
    let o = result.as_object_mut().expect("object");
    o.insert("commuting_hull_max".into(), json!(commuting));
    o.insert(
        "isometry".into(),
        serde_json::to_value(&isometry).expect("plain fields"),
    );
    Ok((result, Some(trace)))
}

fn run_fixpoint(cx: &mut Context) -> Result<Value> {
    let ch = cx.channel()?;
    let eta = cx.state(ch.dim())?;
    let params = &cx.scenario.params;
    let tol = params.tol()?;
    let terms = params.max_iter.unwrap_or(DEFAULT_CESARO_TERMS);
    let fixed =
        cesaro_fixed_point(&ch, &eta, tol, terms).map_err(|e| from_dynamics("fixpoint", e))?;
    let image = ch.apply_matrix(&fixed);
    let mut result = json!({
        "fixed_point": matrix_to_json(&fixed),
        "fixed_point_defect": trace_norm_distance(&image, &fixed),
    });
    if ch.is_trace_preserving() {
        let tau = attractor_projection(&ch, tol).map_err(|e| from_dynamics("fixpoint", e))?;
        let o = result.as_object_mut().expect("object");
        o.insert(
            "attractor_component".into(),
            matrix_to_json(&tau.apply_matrix(&eta)),
        );
        let t = &tau.matrix;
        o.insert(
            "projection_idempotency".into(),
            json!(frobenius_distance(&(t * t), t)),
        );
    }
    Ok(result)
}

fn kraus_list(doc: Value) -> Result<Vec<CMat>> {
    let list: Vec<ComplexMatrix> = typed(doc, "inputs.kraus")?;
    Ok(list.into_iter().map(ComplexMatrix::into_inner).collect())
}

fn run_quantize(cx: &mut Context) -> Result<Value> {
    let t = cx.transfer()?;
    let mu = cx.measure()?;
    let f = cx.function()?;
    let phases: Option<Vec<Vec<f64>>> = cx
        .optional_document("phases")?
        .map(|d| typed(d, "inputs.phases"))
        .transpose()?;
    let q = |e| from_quant("quantize", e);
    let sol = solve_diagonal_kraus(&t, &f, &mu, phases.as_deref()).map_err(q)?;
    let kraus: Vec<CMat> = sol.kraus.iter().map(|k| k.matrix().clone()).collect();
    let (lhs, rhs) = diagram_sides(&t, &f, &mu, &kraus).map_err(q)?;
    let diag = |m: &CMat| (0..m.nrows()).map(|j| m[(j, j)].re).collect::<Vec<_>>();
    let mut result = serde_json::to_value(&sol).expect("plain fields");
    let o = result.as_object_mut().expect("object");
    o.insert(
        "moduli_flat".into(),
        json!(sol.moduli.iter().flatten().collect::<Vec<_>>()),
    );
    o.insert(
        "diagram".into(),
        json!({ "lhs_diagonal": diag(&lhs), "rhs_diagonal": diag(&rhs) }),
    );
    match kappa_matrix(&f, &mu, None) {
        Ok(k) => o.insert("kappa".into(), serde_json::to_value(&k).expect("finite")),
        Err(GnsError::NotFaithful { .. }) => o.insert(
            "kappa".into(),
            json!({
                "block": matrix_to_json(&m_f_array(&f, &mu).map_err(|e| from_other("quantize", e))?),
                "dim": t.dim(),
                "faithful": false,
            }),
        ),
        Err(e) => return Err(from_other("quantize", e)),
    };
    Ok(result)
}

fn run_verify(cx: &mut Context) -> Result<Value> {
    let t = cx.transfer()?;
    let mu = cx.measure()?;
    let f = cx.function()?;
    let kraus = cx.optional_document("kraus")?.map(kraus_list).transpose()?;
    let tol = cx.scenario.params.tol()?;
    let q = |e| from_quant("verify", e);
    let mut result = Map::new();
    if let Some(k) = &kraus {
        result.insert(
            "residual".into(),
            json!(verify_diagram(&t, &f, &mu, k).map_err(q)?),
        );
    }
    let moduli = diagonal_moduli(&t, &f, &mu).map_err(q)?;
    let report = offdiagonal_consistency(&t, &f, &mu, &moduli, tol).map_err(q)?;
    result.insert("moduli".into(), json!(moduli));
    result.insert(
        "consistency".into(),
        serde_json::to_value(&report).expect("finite"),
    );
    Ok(Value::Object(result))
}

fn run_universal(cx: &mut Context) -> Result<Value> {
    let t = cx.transfer()?;
    let mu = cx.measure()?;
    let params = cx.scenario.params.clone();
    let samples = params.samples.unwrap_or(DEFAULT_FUNCTION_SAMPLES);
    let verdict = check_universal_quantization(&t, &mu, samples, params.tol()?, &mut cx.rng)
        .map_err(|e| from_quant("universal", e))?;
    Ok(serde_json::to_value(&verdict).expect("finite"))
}

fn run_markov(cx: &mut Context) -> Result<Value> {
    let t = cx.transfer()?;
    let mut mu = cx.measure()?;
    if mu.dim() != t.dim() {
        return Err(ScenarioError::validation(
            "inputs.measure",
            format!(
                "dimension {} does not match the transfer dimension {}",
                mu.dim(),
                t.dim()
            ),
        ));
    }
    let steps = cx.scenario.params.steps.unwrap_or(1).max(1);
    let mut residual: f64 = 0.0;
    let mut atom_counts = Vec::with_capacity(steps);
    for _ in 0..steps {
        let image_of_bary = t.induced_apply(&mu.barycenter());
        mu = markov_pushforward(&t, &mu)?;
        residual = residual.max(frobenius_distance(&mu.barycenter(), &image_of_bary));
        atom_counts.push(mu.len());
    }
    Ok(json!({
        "steps": steps,
        "measure": serde_json::to_value(&mu).expect("finite"),
        "barycenter": matrix_to_json(&mu.barycenter()),
        "intertwining_residual": residual,
        "atom_counts": atom_counts,
        "total_weight": mu.atoms().iter().map(|a| a.weight).sum::<f64>(),
    }))
}

/// Runs a scenario. The report is deterministic given the seed apart from
/// its `timestamp` field.
pub fn run_scenario(scenario: &Scenario) -> Result<Outcome> {
    for name in scenario.kind.required_inputs() {
        if scenario.inputs.get(name).is_none() {
            return Err(ScenarioError::validation(
                &format!("inputs.{name}"),
                "missing",
            ));
        }
    }
    let mut cx = Context::new(scenario);
    let (result, trace) = match scenario.kind {
        ScenarioKind::Evolve => run_evolve(&mut cx)?,
        ScenarioKind::Limit => run_limit(&mut cx)?,
        ScenarioKind::Fixpoint => (run_fixpoint(&mut cx)?, None),
        ScenarioKind::Quantize => (run_quantize(&mut cx)?, None),
        ScenarioKind::Verify => (run_verify(&mut cx)?, None),
        ScenarioKind::Universal => (run_universal(&mut cx)?, None),
        ScenarioKind::Markov => (run_markov(&mut cx)?, None),
    };
    debug_assert_eq!(trace.is_some(), scenario.kind.has_trace());
    let report = json!({
        "kind": scenario.kind,
        "version": VERSION,
        "seed": scenario.params.seed.unwrap_or(0),
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "inputs": Value::Object(cx.digests),
        "params": serde_json::to_value(&scenario.params).expect("plain fields"),
        "result": result,
    });
    Ok(Outcome { report, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(v: Value) -> Scenario {
        Scenario::from_json(v, PathBuf::from(".")).unwrap()
    }

    #[test]
    fn identity_trace_is_flat() {
        let s = scenario(json!({
            "kind": "evolve",
            "inputs": { "channel": { "catalog": "identity", "dim": 2 }, "state": { "random": 2 } },
            "params": { "steps": 5 }
        }));
        let out = run_scenario(&s).unwrap();
        let csv = out.trace.unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,trace_distance_to_previous,trace_distance_to_cycle"
        );
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[1].parse::<f64>().unwrap(), 0.0);
            assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn damping_trace_decreases() {
        let s = scenario(json!({
            "kind": "limit",
            "inputs": {
                "channel": { "catalog": "amplitude_damping", "gamma": 0.3 },
                "state": { "basis": [2, 1] }
            },
            "params": { "steps": 30 }
        }));
        let out = run_scenario(&s).unwrap();
        let dist: Vec<f64> = out
            .trace
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(dist.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn cnot_trace_oscillates_and_settles() {
        let s = scenario(json!({
            "kind": "limit",
            "inputs": { "channel": { "catalog": "cnot" }, "state": { "random": 4 } },
            "params": { "seed": 3, "steps": 60 }
        }));
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.report["result"]["period"], 2);
        let rows: Vec<Vec<f64>> = out
            .trace
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect())
            .collect();
        assert!(rows.last().unwrap()[1] < 1e-9);
        assert!(rows.last().unwrap()[0] > 1e-3);
    }

    #[test]
    fn missing_inputs_and_bad_fields_are_validation_errors() {
        let s = scenario(json!({ "kind": "quantize", "inputs": {} }));
        let e = run_scenario(&s).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(
            matches!(e, ScenarioError::Validation { ref field, .. } if field == "inputs.transfer")
        );

        let bad = Scenario::from_json(json!({ "kind": "nope" }), PathBuf::new()).unwrap_err();
        assert_eq!(bad.exit_code(), 1);

        let s = scenario(json!({
            "kind": "markov",
            "inputs": {
                "transfer": { "weights": [1.0], "branches": [{ "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0]]]] }] },
                "measure": { "atoms": [] }
            }
        }));
        let e = run_scenario(&s).unwrap_err();
        match e {
            ScenarioError::Validation { field, .. } => {
                assert!(field.starts_with("inputs.transfer"), "{field}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let s = scenario(
            json!({ "kind": "markov", "inputs": { "transfer": "nowhere.json", "measure": "x.json" } }),
        );
        let e = run_scenario(&s).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert_eq!(e.to_json()["error"]["kind"], "io");
    }

    #[test]
    fn inconsistent_verification_is_numerical() {
        let plus = json!([[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]]);
        let mixed = json!([[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]);
        let s = scenario(json!({
            "kind": "verify",
            "inputs": {
                "transfer": { "weights": [0.5, 0.5], "branches": [
                    { "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0],[1,0]]]] },
                    { "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0],[-1,0]]]] }
                ] },
                "measure": { "atoms": [ { "weight": 0.5, "state": plus }, { "weight": 0.5, "state": mixed } ] },
                "function": { "sum": [ { "const": 1 }, { "re": [1, 2] } ] }
            }
        }));
        let e = run_scenario(&s).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_json()["error"]["detail"]["constraints"].is_array());
    }

    #[test]
    fn same_seed_same_report() {
        let v = json!({
            "kind": "universal",
            "inputs": {
                "transfer": { "weights": [0.5, 0.5], "branches": [
                    { "dim": 2, "kraus": [[[[1,0],[0,0]],[[0,0],[1,0]]]] },
                    { "dim": 2, "kraus": [[[[0,0],[1,0]],[[1,0],[0,0]]]] }
                ] },
                "measure": { "atoms": [ { "weight": 1.0, "state": [[[0.75,0],[0,0]],[[0,0],[0.25,0]]] } ] }
            },
            "params": { "seed": 11, "samples": 8 }
        });
        let a = run_scenario(&scenario(v.clone())).unwrap().report;
        let b = run_scenario(&scenario(v)).unwrap().report;
        assert_eq!(strip_timestamp(&a), strip_timestamp(&b));
        assert_eq!(a["result"]["pass"], false);
        assert_eq!(a["seed"], 11);
        assert!(a["inputs"]["transfer"]
            .as_str()
            .unwrap()
            .starts_with("sha256:"));
    }
}
