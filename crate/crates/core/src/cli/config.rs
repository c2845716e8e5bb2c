//! Run configuration: a JSON document with row-major nested-array matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::examples;
use crate::linalg::{self, Mat, Vector};
use crate::lpv::{AffineMatrixFunction, LpvSystem, SchedulingBox};
use crate::sdp::DEFAULT_TOL;
use crate::tracking::ReferenceKind;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub system: SystemDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_box: Option<BoxDef>,
    pub data: DataDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingDef>,
    pub simulation: SimulationDef,
    /// Sampling period in seconds; only used to report durations.
    #[serde(default = "default_k_step")]
    pub k_step: f64,
    #[serde(default)]
    pub solver: SolverDef,
    #[serde(default)]
    pub expect: ExpectDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemDef {
    /// `example1`, `example2` or `example3`.
    Builtin { example: String },
    /// `[M_0, M_1, .., M_l]` for each matrix; `c`, `d` default to `I`, `0`.
    Affine {
        a: Vec<Matrix>,
        b: Vec<Matrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<Matrix>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<Vec<Matrix>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDef {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataLength {
    Fixed(usize),
    /// Only `"auto"` is accepted.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDef {
    pub length: DataLength,
    /// Inputs are i.i.d. uniform on `[-a, a]`.
    #[serde(default = "one")]
    pub input_amplitude: f64,
    /// Initial state of the experiment (augmented state for tracking runs).
    pub x0: Vec<f64>,
    #[serde(default = "yes")]
    pub pe_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisDef {
    pub sigma: f64,
    pub beta: f64,
    pub eps: f64,
    #[serde(default = "default_trace_lo")]
    pub trace_lo: f64,
    #[serde(default = "default_trace_hi")]
    pub trace_hi: f64,
    #[serde(default = "yes")]
    pub vertex_precheck: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerDef {
    pub mu: f64,
    pub eps: f64,
    /// Defaults to half the synthesis rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceDef {
    /// `sinusoid`, `square`, `circle` or `figure8`.
    pub kind: String,
    /// Amplitude or radius.
    pub size: f64,
    /// Period in samples.
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingDef {
    pub reference: ReferenceDef,
    pub sigma: f64,
    pub beta: f64,
    pub eps: f64,
    #[serde(default = "default_trace_lo")]
    pub trace_lo: f64,
    #[serde(default = "default_trace_hi")]
    pub trace_hi: f64,
    pub mu: f64,
    pub eps_trigger: f64,
    /// Defaults to half of `beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_trigger: Option<f64>,
    pub v: f64,
    /// Bound on `(w, r)`; derived from `delta` and the reference when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_hat: Option<f64>,
    #[serde(default = "yes")]
    pub vertex_precheck: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleDef {
    /// i.i.d. uniform over the box.
    Uniform,
    /// `p_i = c_i + h_i sin(2 pi k / period + 2 pi i / l)`.
    Sinusoid { period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDef {
    pub horizon: usize,
    pub x0: Vec<f64>,
    /// Bound on the plant perturbation.
    pub delta: f64,
    pub seed: u64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleDef,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_verify_horizon")]
    pub verify_horizon: usize,
    #[serde(default = "default_decay_horizon")]
    pub decay_horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDef {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for SolverDef {
    fn default() -> Self {
        Self { tol: default_tol(), max_iterations: default_max_iterations() }
    }
}

/// Values asserted by `reproduce`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_ceiling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_error_ceiling: Option<f64>,
    /// Published trigger matrices checked for positive definiteness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed_psi: Option<(Matrix, Matrix)>,
}

fn default_k_step() -> f64 {
    0.01
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_trace_lo() -> f64 {
    0.1
}
fn default_trace_hi() -> f64 {
    10.0
}
fn default_schedule() -> ScheduleDef {
    ScheduleDef::Uniform
}
fn default_trials() -> usize {
    100
}
fn default_verify_horizon() -> usize {
    200
}
fn default_decay_horizon() -> usize {
    500
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iterations() -> usize {
    120
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_err(field, format!("must be positive, got {v}")))
    }
}

fn unit_open(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(field_err(field, format!("must lie in (0, 1), got {v}")))
    }
}

fn above_one(field: &str, v: f64) -> Result<()> {
    if v > 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_err(field, format!("must exceed 1, got {v}")))
    }
}

fn affine(field: &str, mats: &[Matrix]) -> Result<AffineMatrixFunction> {
    if mats.is_empty() {
        return Err(field_err(field, "needs at least the constant matrix"));
    }
    let conv = |i: usize, m: &Matrix| -> Result<Mat> {
        if m.is_empty() || m.iter().any(|r| r.len() != m[0].len()) {
            return Err(field_err(&format!("{field}[{i}]"), "rows must be non-empty and of equal length"));
        }
        Ok(linalg::from_rows(m))
    };
    let all: Vec<Mat> = mats.iter().enumerate().map(|(i, m)| conv(i, m)).collect::<Result<_>>()?;
    AffineMatrixFunction::new(all[0].clone(), all[1..].to_vec()).map_err(|e| field_err(field, e))
}

impl SystemDef {
    pub fn build(&self) -> Result<LpvSystem> {
        match self {
            SystemDef::Builtin { example } => match example.as_str() {
                "example1" => Ok(examples::example1_system()),
                "example2" => Ok(examples::example2_plant()),
                "example3" => Ok(examples::example3_plant()),
                other => Err(field_err("system.example", format!("unknown built-in system \"{other}\""))),
            },
            SystemDef::Affine { a, b, c, d } => {
                let a = affine("system.a", a)?;
                let b = affine("system.b", b)?;
                let (n, l) = (a.shape().0, a.l());
                let c = match c {
                    Some(c) => affine("system.c", c)?,
                    None => AffineMatrixFunction::constant(Mat::identity(n, n), l),
                };
                let d = match d {
                    Some(d) => affine("system.d", d)?,
                    None => AffineMatrixFunction::zeros(c.shape().0, b.shape().1, l),
                };
                LpvSystem::new(a, b, c, d).map_err(|e| field_err("system", e))
            }
        }
    }
}

impl RunConfig {
    pub fn scheduling_box(&self, l: usize) -> Result<SchedulingBox> {
        match &self.schedule_box {
            Some(b) => {
                let bx = SchedulingBox::new(b.lower.clone(), b.upper.clone()).map_err(|e| field_err("schedule_box", e))?;
                if bx.dim() != l {
                    return Err(field_err("schedule_box", format!("has dimension {}, system has {l}", bx.dim())));
                }
                Ok(bx)
            }
            None => Ok(SchedulingBox::symmetric(l, 1.0)),
        }
    }

    /// Experiment length, resolving `"auto"` to `min_len`.
    pub fn data_length(&self, min_len: usize) -> Result<usize> {
        match &self.data.length {
            DataLength::Fixed(t) => Ok(*t),
            DataLength::Named(s) if s == "auto" => Ok(min_len),
            DataLength::Named(s) => Err(field_err("data.length", format!("expected a number or \"auto\", got \"{s}\""))),
        }
    }

    pub fn reference_kind(&self) -> Result<Option<ReferenceKind>> {
        match &self.tracking {
            Some(t) => {
                let r = &t.reference;
                ReferenceKind::from_name(&r.kind, r.size, r.period)
                    .map_err(|_| field_err("tracking.reference.kind", format!("unknown reference kind \"{}\"", r.kind)))
                    .map(Some)
            }
            None => Ok(None),
        }
    }

    /// Range checks on every scalar plus dimension checks against the system.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(field_err("name", "must be a non-empty [A-Za-z0-9_-] identifier"));
        }
        let sys = self.system.build()?;
        self.scheduling_box(sys.l())?;
        positive("k_step", self.k_step)?;
        positive("data.input_amplitude", self.data.input_amplitude)?;
        self.data_length(1)?;
        if let DataLength::Fixed(0) = self.data.length {
            return Err(field_err("data.length", "must be at least 1"));
        }
        let sim = &self.simulation;
        if sim.horizon == 0 {
            return Err(field_err("simulation.horizon", "must be at least 1"));
        }
        if !(sim.delta >= 0.0 && sim.delta.is_finite()) {
            return Err(field_err("simulation.delta", format!("must be non-negative, got {}", sim.delta)));
        }
        if sim.trials == 0 || sim.verify_horizon == 0 || sim.decay_horizon == 0 {
            return Err(field_err("simulation", "trials and horizons must be at least 1"));
        }
        if let ScheduleDef::Sinusoid { period } = sim.schedule {
            positive("simulation.schedule.period", period)?;
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iterations == 0 {
            return Err(field_err("solver.max_iterations", "must be at least 1"));
        }
        let state_dim = match &self.tracking {
            Some(_) => sys.n() + sys.r(),
            None => sys.n(),
        };
        if self.data.x0.len() != state_dim {
            return Err(field_err("data.x0", format!("has length {}, expected {state_dim}", self.data.x0.len())));
        }
        if sim.x0.len() != state_dim {
            return Err(field_err("simulation.x0", format!("has length {}, expected {state_dim}", sim.x0.len())));
        }
        if let Some(s) = &self.synthesis {
            above_one("synthesis.sigma", s.sigma)?;
            unit_open("synthesis.beta", s.beta)?;
            positive("synthesis.eps", s.eps)?;
            trace_box("synthesis", s.trace_lo, s.trace_hi)?;
        }
        if let Some(t) = &self.trigger {
            let s = self.synthesis.as_ref().ok_or_else(|| field_err("trigger", "requires a synthesis block"))?;
            positive("trigger.mu", t.mu)?;
            positive("trigger.eps", t.eps)?;
            positive("trigger.v", t.v)?;
            unit_open("trigger.beta", t.beta.unwrap_or(s.beta / 2.0))?;
        }
        if let Some(t) = &self.tracking {
            self.reference_kind()?;
            positive("tracking.reference.size", t.reference.size)?;
            positive("tracking.reference.period", t.reference.period)?;
            let rdim = self.reference_kind()?.map_or(0, |k| k.dim());
            if rdim != sys.r() {
                return Err(field_err("tracking.reference.kind", format!("has dimension {rdim}, plant has {} outputs", sys.r())));
            }
            above_one("tracking.sigma", t.sigma)?;
            unit_open("tracking.beta", t.beta)?;
            positive("tracking.eps", t.eps)?;
            trace_box("tracking", t.trace_lo, t.trace_hi)?;
            positive("tracking.mu", t.mu)?;
            positive("tracking.eps_trigger", t.eps_trigger)?;
            positive("tracking.v", t.v)?;
            unit_open("tracking.beta_trigger", t.beta_trigger.unwrap_or(t.beta / 2.0))?;
            if let Some(d) = t.delta_hat {
                positive("tracking.delta_hat", d)?;
            }
        }
        if self.synthesis.is_none() && self.tracking.is_none() {
            return Err(field_err("synthesis", "either a synthesis or a tracking block is required"));
        }
        if let Some((a, b)) = &self.expect.printed_psi {
            for (f, m) in [("expect.printed_psi[0]", a), ("expect.printed_psi[1]", b)] {
                if m.is_empty() || m.iter().any(|r| r.len() != m.len()) {
                    return Err(field_err(f, "must be a square matrix"));
                }
            }
        }
        Ok(())
    }

    pub fn x0(&self) -> Vector {
        Vector::from_vec(self.simulation.x0.clone())
    }
}

fn trace_box(block: &str, lo: f64, hi: f64) -> Result<()> {
    if lo >= 0.0 && lo <= hi && hi.is_finite() {
        Ok(())
    } else {
        Err(field_err(&format!("{block}.trace_lo"), format!("trace box [{lo}, {hi}] is empty or negative")))
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

pub fn emit_config(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("configuration serializes");
    s.push('\n');
    s
}

/// Bundled configurations, keyed by example id.
pub const BUNDLED: &[(&str, &str)] = &[
    ("1", include_str!("../../configs/example1.json")),
    ("2a", include_str!("../../configs/example2_sine.json")),
    ("2b", include_str!("../../configs/example2_square.json")),
    ("3a", include_str!("../../configs/example3_circle.json")),
    ("3b", include_str!("../../configs/example3_figure8.json")),
];

pub fn bundled_config(id: &str) -> Result<RunConfig> {
    let text = BUNDLED
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("unknown example id \"{id}\"; expected one of 1, 2a, 2b, 3a, 3b")))?;
    parse_config(text, &format!("bundled:{id}"))
}
