use serde::Serialize;

use crate::linalg::{self, Mat};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Passed,
    Failed,
    Skipped,
}

/// Named stage failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageError {
    InsufficientDataLength,
    RankDeficientData,
    StabilizationInfeasible,
    StabilizationNumericalFailure,
    TriggerInfeasible,
    TriggerNumericalFailure,
    SimulationFailed,
    VerificationFailed,
    Internal,
}

impl StageError {
    pub fn describe(&self) -> &'static str {
        match self {
            StageError::InsufficientDataLength => "insufficient data length",
            StageError::RankDeficientData => "rank-deficient data",
            StageError::StabilizationInfeasible => "stabilization program infeasible",
            StageError::StabilizationNumericalFailure => "stabilization solve failed numerically",
            StageError::TriggerInfeasible => "trigger program infeasible",
            StageError::TriggerNumericalFailure => "trigger solve failed numerically",
            StageError::SimulationFailed => "simulation failed",
            StageError::VerificationFailed => "verification failed",
            StageError::Internal => "internal error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub length: usize,
    pub min_length: usize,
    pub rank: usize,
    pub required_rank: usize,
    pub pe_margin: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationSummary {
    pub status: String,
    pub message: String,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precheck: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plug_in_worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Matrix>,
    /// `[K_0, K_1, .., K_l]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<Matrix>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriggerSummary {
    pub status: String,
    pub message: String,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi1: Option<Matrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi2: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationSummary {
    pub vertex_radii: Vec<f64>,
    pub decrease_ok: bool,
    pub worst_decrease_excess: f64,
    pub nominal_decay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSummary {
    pub transmissions: usize,
    pub horizon: usize,
    pub mean_interval: f64,
    pub max_interval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingSummary {
    pub reference: String,
    pub delta_hat: f64,
    pub max_error: f64,
    pub final_rms: f64,
    pub integral_max: f64,
    pub integral_first_half_max: f64,
    pub integral_final_quarter_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub command: String,
    pub seed: u64,
    pub duration_seconds: f64,
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<StabilizationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<EventSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingSummary>,
    pub checks: Vec<Check>,
    pub traces: Vec<String>,
}

impl RunReport {
    pub fn new(name: &str, command: &str, seed: u64, stages: &[&str]) -> Self {
        Self {
            name: name.into(),
            command: command.into(),
            seed,
            duration_seconds: 0.0,
            stages: stages
                .iter()
                .map(|s| StageRecord { name: (*s).into(), status: StageStatus::Skipped, error: None, detail: String::new() })
                .collect(),
            data: None,
            stabilization: None,
            trigger: None,
            verification: None,
            events: None,
            tracking: None,
            checks: vec![],
            traces: vec![],
        }
    }

    fn stage_mut(&mut self, name: &str) -> &mut StageRecord {
        self.stages.iter_mut().find(|s| s.name == name).expect("stage declared at construction")
    }

    pub fn pass(&mut self, stage: &str, detail: impl Into<String>) {
        let s = self.stage_mut(stage);
        s.status = StageStatus::Passed;
        s.detail = detail.into();
    }

    pub fn fail(&mut self, stage: &str, err: StageError, detail: impl Into<String>) {
        let s = self.stage_mut(stage);
        s.status = StageStatus::Failed;
        s.error = Some(err);
        s.detail = format!("{}: {}", err.describe(), detail.into());
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// No failed stage and no failed check.
    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.status != StageStatus::Failed) && self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn rows(m: &Mat) -> Matrix {
    linalg::to_rows(m)
}
