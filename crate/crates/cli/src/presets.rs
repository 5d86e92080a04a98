//! Experiment presets and their execution.
//!
//! A [`Plan`] is a run template plus the grid to sweep: for each storage
//! time `n` and analyzer angle θ₂, θ₁ is swept and both the before-storage
//! and after-storage curves are recorded. Presets bind a template and the
//! thresholds their report is judged against.

use loopmem::analysis::{
    chsh_from_visibilities, fit_fringe, fit_loss, fringe_shift, visibility, FringeFit, RatePoint,
};
use loopmem::engine::{
    derive_seed, sweep_theta1, CoincidenceCurve, Mode, RunConfig, StorageChannel,
};
use loopmem::polcore::PolarizerSetting;

use crate::config::ConfigFile;
use crate::output::{curve_csv, curve_file_name, long_csv, OutputFile};
use crate::report::{
    BellReport, Check, CurveReport, DividerRow, FitReport, LossReport, RateReport, ReportDocument,
    ScheduleReport, ShiftReport, ARTIFACT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Heralded fringes before and after storage for n = 4 and 6.
    CalibrateSweep,
    /// Periodic storage of entanglement with source noise; CHSH values.
    StoreEntanglement,
    /// Heralded after-storage rate against n; loss per cycle.
    LossVsN,
    /// Schedule validation of a configuration whose windows overlap.
    ScheduleCheck,
}

/// Measured CHSH values the store-entanglement run is judged against:
/// (n, channel, S, σ_S).
pub const REFERENCE_S: [(u32, StorageChannel, f64, f64); 4] = [
    (4, StorageChannel::BeforeStorage, 2.64, 0.04),
    (4, StorageChannel::AfterStorage, 2.66, 0.06),
    (6, StorageChannel::BeforeStorage, 2.69, 0.02),
    (6, StorageChannel::AfterStorage, 2.52, 0.11),
];

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::CalibrateSweep,
        Preset::StoreEntanglement,
        Preset::LossVsN,
        Preset::ScheduleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::CalibrateSweep => "calibrate-sweep",
            Preset::StoreEntanglement => "store-entanglement",
            Preset::LossVsN => "loss-vs-n",
            Preset::ScheduleCheck => "schedule-check",
        }
    }

    pub fn plan(self) -> Plan {
        let mut t = RunConfig::default();
        let (n_list, theta2): (Vec<u32>, Vec<f64>) = match self {
            Preset::CalibrateSweep => {
                t.source.pair_prob = 5e-3;
                t.num_pulses = 100_000_000;
                (vec![4, 6], vec![0.0, 45.0])
            }
            Preset::StoreEntanglement => {
                t.mode = Mode::Periodic;
                t.divider_k = 64;
                t.source.pair_prob = 1e-2;
                // caps both visibilities at 0.935, S ≈ 2.645
                t.source.white_noise = 0.065;
                t.num_pulses = 300_000_000;
                (vec![4, 6], vec![0.0, 45.0])
            }
            Preset::LossVsN => {
                t.source.pair_prob = 1e-3;
                t.num_pulses = 400_000_000;
                (vec![2, 4, 6, 8, 10], vec![0.0])
            }
            Preset::ScheduleCheck => {
                t.mode = Mode::Periodic;
                // 320 ns trigger period against 540 ns of storage
                t.divider_k = 32;
                t.num_pulses = 1_000_000;
                (vec![20], vec![0.0])
            }
        };
        t.n_cycles = n_list[0];
        Plan {
            name: self.name().to_string(),
            preset: Some(self),
            template: t,
            n_list,
            theta2_deg: theta2,
            theta1_deg: default_theta1_grid(),
        }
    }
}

/// θ₁ = 0°, 10°, …, 170°.
pub fn default_theta1_grid() -> Vec<f64> {
    (0..18).map(|i| i as f64 * 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub name: String,
    /// `None` for a plain sweep of a user configuration, which has no
    /// thresholds.
    pub preset: Option<Preset>,
    pub template: RunConfig,
    pub n_list: Vec<u32>,
    pub theta2_deg: Vec<f64>,
    pub theta1_deg: Vec<f64>,
}

impl Plan {
    /// Sweep of θ₁ at the configured `n` and θ₂.
    pub fn custom(config: &RunConfig) -> Plan {
        Plan {
            name: "sweep".to_string(),
            preset: None,
            template: *config,
            n_list: vec![config.n_cycles],
            theta2_deg: vec![config.theta2.degrees()],
            theta1_deg: default_theta1_grid(),
        }
    }

    /// Applies the keys of a config file to the template. Setting
    /// `run.n_cycles` replaces the preset's list of storage times; the
    /// polarizer keys are ignored because the plan sweeps them.
    pub fn with_file(mut self, file: &ConfigFile) -> Plan {
        self.template = file.apply(&self.template);
        if let Some(n) = file.run.n_cycles {
            self.n_list = vec![n];
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Plan {
        self.template.seed = seed;
        self
    }

    /// Multiplies the pump pulses per sweep point.
    pub fn scaled(mut self, trials_scale: f64) -> Plan {
        let pulses = (self.template.num_pulses as f64 * trials_scale).round();
        self.template.num_pulses = pulses.max(1.0) as u64;
        self
    }

    /// Config of one sweep: storage time `n` at analyzer angle `theta2`. The
    /// seed depends only on the master seed, `n` and θ₂.
    pub fn sweep_config(&self, n: u32, theta2_deg: f64) -> RunConfig {
        let theta2 = PolarizerSetting::from_degrees(theta2_deg);
        let mdeg = (theta2.degrees() * 1000.0).round() as u64;
        RunConfig {
            n_cycles: n,
            theta2,
            seed: derive_seed(derive_seed(self.template.seed, n as u64), mdeg),
            ..self.template
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub n_cycles: u32,
    pub theta2_deg: f64,
    pub before: CoincidenceCurve,
    pub after: CoincidenceCurve,
}

impl SweepResult {
    pub fn curve(&self, channel: StorageChannel) -> &CoincidenceCurve {
        match channel {
            StorageChannel::BeforeStorage => &self.before,
            StorageChannel::AfterStorage => &self.after,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: ReportDocument,
    pub sweeps: Vec<SweepResult>,
    pub files: Vec<OutputFile>,
}

const CHANNELS: [StorageChannel; 2] = [StorageChannel::BeforeStorage, StorageChannel::AfterStorage];

fn schedule_report(plan: &Plan) -> ScheduleReport {
    let t = &plan.template;
    let violations = plan
        .n_list
        .iter()
        .filter_map(|&n| {
            RunConfig { n_cycles: n, ..*t }
                .validate_schedule()
                .err()
                .map(|e| format!("n = {n}: {e}"))
        })
        .collect();
    let max_n = plan.n_list.iter().copied().max().unwrap_or(0).max(20);
    let min_divider = (1..=max_n)
        .map(|n| {
            let required = n as f64 * t.cqm.cycle_time_ns + t.cqm.pc_rise_ns + t.cqm.pc_fall_ns;
            DividerRow {
                n_cycles: n,
                required_period_ns: required,
                min_divider_k: (required / t.source.pulse_period_ns).floor() as u64 + 1,
            }
        })
        .collect();
    ScheduleReport {
        mode: t.mode.name().to_string(),
        trigger_period_ns: (t.mode == Mode::Periodic).then(|| t.trigger_period_ns()),
        violations,
        min_divider,
    }
}

fn fit_report(fit: &FringeFit) -> FitReport {
    let v = visibility(fit).ok();
    FitReport {
        offset_counts: fit.offset,
        offset_sigma_counts: fit.covariance[0][0].max(0.0).sqrt(),
        amplitude_counts: fit.amplitude,
        amplitude_sigma_counts: fit.covariance[1][1].max(0.0).sqrt(),
        phase_deg: fit.phase_deg,
        phase_sigma_deg: fit.covariance[2][2].max(0.0).sqrt(),
        mean_counts: fit.mean,
        mean_sigma_counts: fit.mean_sigma,
        degenerate_phase: fit.degenerate_phase,
        visibility_frac: v.map(|v| v.v),
        visibility_sigma_frac: v.map(|v| v.sigma),
    }
}

/// Runs every sweep of the plan and judges the result. Configuration errors
/// are returned as errors; a schedule violation yields a failed report
/// without simulating anything.
pub fn execute(plan: &Plan) -> loopmem::Result<Outcome> {
    for &n in &plan.n_list {
        RunConfig {
            n_cycles: n,
            ..plan.template
        }
        .validate()?;
    }
    if plan.theta1_deg.is_empty() || plan.theta2_deg.is_empty() || plan.n_list.is_empty() {
        return Err(loopmem::Error::InvalidParameter {
            name: "plan",
            reason: "needs at least one n, θ₁ and θ₂".to_string(),
        });
    }
    let schedule = schedule_report(plan);
    let mut report = ReportDocument {
        artifact_version: ARTIFACT_VERSION.to_string(),
        preset: plan.name.clone(),
        seed: plan.template.seed,
        config: ConfigFile::from_run_config(&plan.template),
        schedule,
        curves: Vec::new(),
        fringe_shifts: Vec::new(),
        bell: Vec::new(),
        loss_fit: None,
        checks: Vec::new(),
        passed: false,
    };

    let schedule_ok = report.schedule.violations.is_empty();
    if !schedule_ok || plan.preset == Some(Preset::ScheduleCheck) {
        report
            .checks
            .push(Check::flag("schedule_valid", schedule_ok));
        report.passed = schedule_ok;
        let files = vec![OutputFile::new("report.json", report.to_json())];
        return Ok(Outcome {
            report,
            sweeps: Vec::new(),
            files,
        });
    }

    let mut sweeps = Vec::new();
    for &n in &plan.n_list {
        for &theta2 in &plan.theta2_deg {
            let (before, after) = sweep_theta1(&plan.sweep_config(n, theta2), &plan.theta1_deg)?;
            sweeps.push(SweepResult {
                n_cycles: n,
                theta2_deg: PolarizerSetting::from_degrees(theta2).degrees(),
                before,
                after,
            });
        }
    }

    let mut files = Vec::new();
    let mut fits = Vec::new();
    for s in &sweeps {
        for channel in CHANNELS {
            let curve = s.curve(channel);
            let fit = fit_fringe(curve).ok();
            let name = curve_file_name(s.n_cycles, curve);
            files.push(OutputFile::new(&name, curve_csv(curve)));
            report.curves.push(CurveReport {
                n_cycles: s.n_cycles,
                theta2_deg: s.theta2_deg,
                channel: channel.name().to_string(),
                file: name,
                total_coincidences_counts: curve.points.iter().map(|p| p.coincidences).sum(),
                exposure_pulses: plan.template.num_pulses,
                fit: fit.as_ref().map(fit_report),
            });
            fits.push(((s.n_cycles, s.theta2_deg, channel), fit));
        }
    }
    let fit_of = |n: u32, theta2: f64, channel| {
        fits.iter()
            .find(|(k, _)| *k == (n, theta2, channel))
            .and_then(|(_, f)| f.as_ref())
    };

    for s in &sweeps {
        if let (Some(b), Some(a)) = (
            fit_of(s.n_cycles, s.theta2_deg, StorageChannel::BeforeStorage),
            fit_of(s.n_cycles, s.theta2_deg, StorageChannel::AfterStorage),
        ) {
            if let Ok(shift) = fringe_shift(b, a) {
                report.fringe_shifts.push(ShiftReport {
                    n_cycles: s.n_cycles,
                    theta2_deg: s.theta2_deg,
                    shift_deg: shift.deg,
                    shift_sigma_deg: shift.sigma_deg,
                });
            }
        }
    }

    for &n in &plan.n_list {
        for channel in CHANNELS {
            let vis = |theta2| fit_of(n, theta2, channel).and_then(|f| visibility(f).ok());
            if let (Some(hv), Some(diag)) = (vis(0.0), vis(45.0)) {
                let b = chsh_from_visibilities(&hv, &diag);
                report.bell.push(BellReport {
                    n_cycles: n,
                    channel: channel.name().to_string(),
                    v_hv_frac: hv.v,
                    v_diag_frac: diag.v,
                    s_frac: b.s,
                    s_sigma_frac: b.sigma,
                    significance_sigmas: (b.sigma > 0.0).then(|| b.significance()),
                    violated: b.violated,
                });
            }
        }
    }

    let loss_theta2 = plan.theta2_deg[0];
    let rate_points: Vec<(RatePoint, RateReport)> = plan
        .n_list
        .iter()
        .filter_map(|&n| {
            let fit = fit_of(n, loss_theta2, StorageChannel::AfterStorage)?;
            let total = report
                .curves
                .iter()
                .find(|c| {
                    c.n_cycles == n
                        && c.theta2_deg == loss_theta2
                        && c.channel == StorageChannel::AfterStorage.name()
                })
                .map_or(0, |c| c.total_coincidences_counts);
            Some((
                RatePoint {
                    cycles: n,
                    rate: fit.mean,
                    sigma: fit.mean_sigma,
                },
                RateReport {
                    n_cycles: n,
                    mean_counts: fit.mean,
                    mean_sigma_counts: fit.mean_sigma,
                    total_coincidences_counts: total,
                },
            ))
        })
        .collect();
    let points: Vec<RatePoint> = rate_points.iter().map(|p| p.0).collect();
    if let Ok(loss) = fit_loss(&points) {
        report.loss_fit = Some(LossReport {
            loss_per_cycle_frac: loss.loss,
            loss_per_cycle_sigma_frac: loss.sigma,
            points: rate_points.into_iter().map(|p| p.1).collect(),
        });
    }

    report.checks = match plan.preset {
        Some(p) => checks(p, plan, &report),
        None => Vec::new(),
    };
    report.passed = report.checks.iter().all(|c| c.passed);

    files.push(OutputFile::new(
        "curves.csv",
        long_csv(&sweeps, &fits_for_plot(&fits)),
    ));
    files.push(OutputFile::new("report.json", report.to_json()));
    Ok(Outcome {
        report,
        sweeps,
        files,
    })
}

type FitKey = (u32, f64, StorageChannel);

fn fits_for_plot(fits: &[(FitKey, Option<FringeFit>)]) -> Vec<(FitKey, FringeFit)> {
    fits.iter()
        .filter_map(|(k, f)| f.map(|f| (*k, f)))
        .collect()
}

fn shift_of(report: &ReportDocument, n: u32, theta2: f64) -> Option<f64> {
    report
        .fringe_shifts
        .iter()
        .find(|s| s.n_cycles == n && s.theta2_deg == theta2)
        .map(|s| s.shift_deg)
}

fn bell_of(report: &ReportDocument, n: u32, channel: StorageChannel) -> Option<&BellReport> {
    report
        .bell
        .iter()
        .find(|b| b.n_cycles == n && b.channel == channel.name())
}

fn visibility_of(
    report: &ReportDocument,
    n: u32,
    theta2: f64,
    channel: StorageChannel,
) -> Option<f64> {
    report
        .curves
        .iter()
        .find(|c| c.n_cycles == n && c.theta2_deg == theta2 && c.channel == channel.name())
        .and_then(|c| c.fit.as_ref())
        .and_then(|f| f.visibility_frac)
}

fn checks(preset: Preset, plan: &Plan, report: &ReportDocument) -> Vec<Check> {
    let mut out = Vec::new();
    let after = StorageChannel::AfterStorage;
    match preset {
        Preset::CalibrateSweep => {
            for &n in &plan.n_list {
                out.push(Check::near(
                    format!("fringe_shift_n{n}_deg"),
                    shift_of(report, n, 0.0),
                    90.0,
                    3.0,
                ));
                out.push(Check::at_least(
                    format!("v_diag_after_n{n}_frac"),
                    visibility_of(report, n, 45.0, after),
                    0.98,
                ));
                out.push(Check::at_least(
                    format!("s_after_n{n}_frac"),
                    bell_of(report, n, after).map(|b| b.s_frac),
                    2.0,
                ));
            }
        }
        Preset::StoreEntanglement => {
            for &n in &plan.n_list {
                out.push(Check::at_least(
                    format!("s_after_n{n}_significance_sigmas"),
                    bell_of(report, n, after).and_then(|b| b.significance_sigmas),
                    5.0,
                ));
                for (pn, channel, s, sigma) in REFERENCE_S {
                    if pn != n {
                        continue;
                    }
                    let b = bell_of(report, n, channel);
                    let tol = 3.0 * sigma.hypot(b.map_or(0.0, |b| b.s_sigma_frac));
                    out.push(Check::near(
                        format!("s_{}_n{n}_vs_reference_frac", channel.name()),
                        b.map(|b| b.s_frac),
                        s,
                        tol,
                    ));
                }
            }
        }
        Preset::LossVsN => {
            out.push(Check::near(
                "loss_per_cycle_frac",
                report.loss_fit.as_ref().map(|l| l.loss_per_cycle_frac),
                0.22,
                0.02,
            ));
            for &n in &plan.n_list {
                let total = report
                    .curves
                    .iter()
                    .find(|c| c.n_cycles == n && c.channel == after.name())
                    .map(|c| c.total_coincidences_counts as f64);
                out.push(Check::at_least(
                    format!("coincidences_n{n}_counts"),
                    total,
                    1e4,
                ));
            }
        }
        Preset::ScheduleCheck => {}
    }
    out
}
