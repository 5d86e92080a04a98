//! The JSON report written next to the CSV files of a run.
//!
//! Key names carry their unit: `_ns`, `_deg`, `_counts`, `_pulses`,
//! `_cycles`, or `_frac` for dimensionless ratios.

use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub artifact_version: String,
    pub preset: String,
    pub seed: u64,
    pub config: ConfigFile,
    pub schedule: ScheduleReport,
    pub curves: Vec<CurveReport>,
    pub fringe_shifts: Vec<ShiftReport>,
    pub bell: Vec<BellReport>,
    pub loss_fit: Option<LossReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report holds only finite numbers");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub n_cycles: u32,
    pub theta2_deg: f64,
    pub channel: String,
    pub file: String,
    pub total_coincidences_counts: u64,
    pub exposure_pulses: u64,
    /// `None` when the curve could not be fitted, e.g. no counts at all.
    pub fit: Option<FitReport>,
}

/// Fit of `A + B·sin²(θ₁ − θ₀)`. Errors are 1σ from the fit covariance
/// with Poisson weights, not from repetition scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub offset_counts: f64,
    pub offset_sigma_counts: f64,
    pub amplitude_counts: f64,
    pub amplitude_sigma_counts: f64,
    pub phase_deg: f64,
    pub phase_sigma_deg: f64,
    pub mean_counts: f64,
    pub mean_sigma_counts: f64,
    pub degenerate_phase: bool,
    pub visibility_frac: Option<f64>,
    pub visibility_sigma_frac: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub n_cycles: u32,
    pub theta2_deg: f64,
    pub shift_deg: f64,
    pub shift_sigma_deg: f64,
}

/// CHSH value from the H/V (θ₂ = 0°) and diagonal (θ₂ = 45°) visibilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    pub n_cycles: u32,
    pub channel: String,
    pub v_hv_frac: f64,
    pub v_diag_frac: f64,
    pub s_frac: f64,
    pub s_sigma_frac: f64,
    /// `(S − 2)/σ_S`; absent when `σ_S` is zero.
    pub significance_sigmas: Option<f64>,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss_per_cycle_frac: f64,
    pub loss_per_cycle_sigma_frac: f64,
    pub points: Vec<RateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub n_cycles: u32,
    /// Mean coincidences per θ₁ setting, from the fringe fit.
    pub mean_counts: f64,
    pub mean_sigma_counts: f64,
    pub total_coincidences_counts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub mode: String,
    /// Absent in heralded mode, where triggers are not periodic.
    pub trigger_period_ns: Option<f64>,
    pub violations: Vec<String>,
    pub min_divider: Vec<DividerRow>,
}

/// Smallest clock divider whose trigger period clears one storage window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DividerRow {
    pub n_cycles: u32,
    pub required_period_ns: f64,
    pub min_divider_k: u64,
}

/// One acceptance threshold. The unit of `value` is in the check name;
/// `value` is absent when the quantity could not be measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn range(
        name: impl Into<String>,
        value: Option<f64>,
        min: Option<f64>,
        max: Option<f64>,
    ) -> Self {
        let value = value.filter(|v| v.is_finite());
        let passed =
            value.is_some_and(|v| min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m));
        Check {
            name: name.into(),
            value,
            min,
            max,
            passed,
        }
    }

    pub fn at_least(name: impl Into<String>, value: Option<f64>, min: f64) -> Self {
        Self::range(name, value, Some(min), None)
    }

    /// `|value − target| ≤ tol`.
    pub fn near(name: impl Into<String>, value: Option<f64>, target: f64, tol: f64) -> Self {
        Self::range(name, value, Some(target - tol), Some(target + tol))
    }

    /// A condition that is either met or not, reported as 1 or 0.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, Some(if ok { 1.0 } else { 0.0 }), 1.0)
    }
}
