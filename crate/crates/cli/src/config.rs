//! TOML configuration files.
//!
//! A file has up to five flat sections, `[source]`, `[cqm]`, `[delays]`,
//! `[detectors]` and `[run]`. Every key is optional; a missing key keeps the
//! value of the configuration it is applied to, which for [`load_config`] is
//! the built-in default (the apparatus values). Unknown keys are rejected so
//! that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};

use loopmem::components::FlipConvention;
use loopmem::engine::{Mode, RunConfig};
use loopmem::polcore::PolarizerSetting;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("invalid configuration: {0}")]
    Invalid(#[from] loopmem::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Heralded,
    Periodic,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Heralded => Mode::Heralded,
            ModeName::Periodic => Mode::Periodic,
        }
    }
}

impl From<Mode> for ModeName {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Heralded => ModeName::Heralded,
            Mode::Periodic => ModeName::Periodic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlipName {
    InjectionPlusPerCycle,
    PerCycleOnly,
}

impl From<FlipName> for FlipConvention {
    fn from(f: FlipName) -> Self {
        match f {
            FlipName::InjectionPlusPerCycle => FlipConvention::InjectionPlusPerCycle,
            FlipName::PerCycleOnly => FlipConvention::PerCycleOnly,
        }
    }
}

impl From<FlipConvention> for FlipName {
    fn from(f: FlipConvention) -> Self {
        match f {
            FlipConvention::InjectionPlusPerCycle => FlipName::InjectionPlusPerCycle,
            FlipConvention::PerCycleOnly => FlipName::PerCycleOnly,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse_period_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sa_success_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_phase_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub white_noise: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqmSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle_time_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_cycle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flip_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_per_cycle_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc_rise_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc_fall_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tap_reflectivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flip_convention: Option<FlipName>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaysSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herald_delay_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herald_transmission: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herald_phase_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passive_delay_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passive_transmission: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passive_phase_rad: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1_efficiency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1_dark_count_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d2_efficiency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d2_dark_count_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_efficiency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aux_dark_count_prob: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_cycles: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_pulses: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta1_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta2_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herald_latency_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divider_k: Option<u32>,
    /// Defaults to half the pulse period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_window_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coincidence_window_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger_delay_ns: Option<f64>,
}

/// Contents of a configuration file, with absent keys left as `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub source: SourceSection,
    pub cqm: CqmSection,
    pub delays: DelaysSection,
    pub detectors: DetectorsSection,
    pub run: RunSection,
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ConfigFile {
    /// Every key filled in from `c`.
    pub fn from_run_config(c: &RunConfig) -> Self {
        let d = &c.detectors;
        ConfigFile {
            source: SourceSection {
                pulse_period_ns: Some(c.source.pulse_period_ns),
                pair_prob: Some(c.source.pair_prob),
                sa_success_prob: Some(c.source.sa_success_prob),
                psi_phase_rad: Some(c.source.psi_phase_rad),
                white_noise: Some(c.source.white_noise),
            },
            cqm: CqmSection {
                cycle_time_ns: Some(c.cqm.cycle_time_ns),
                eta_cycle: Some(c.cqm.eta_cycle),
                flip_fidelity: Some(c.cqm.flip_fidelity),
                delta_per_cycle_rad: Some(c.cqm.delta_per_cycle_rad),
                pc_rise_ns: Some(c.cqm.pc_rise_ns),
                pc_fall_ns: Some(c.cqm.pc_fall_ns),
                tap_reflectivity: Some(c.cqm.tap_reflectivity),
                flip_convention: Some(c.cqm.flip_convention.into()),
            },
            delays: DelaysSection {
                herald_delay_ns: Some(c.herald_delay.delay_ns),
                herald_transmission: Some(c.herald_delay.transmission),
                herald_phase_rad: Some(c.herald_delay.birefringent_phase_rad),
                passive_delay_ns: Some(c.passive_delay.delay_ns),
                passive_transmission: Some(c.passive_delay.transmission),
                passive_phase_rad: Some(c.passive_delay.birefringent_phase_rad),
            },
            detectors: DetectorsSection {
                d1_efficiency: Some(d.d1.efficiency),
                d1_dark_count_prob: Some(d.d1.dark_count_prob),
                d2_efficiency: Some(d.d2.efficiency),
                d2_dark_count_prob: Some(d.d2.dark_count_prob),
                aux_efficiency: Some(d.aux.efficiency),
                aux_dark_count_prob: Some(d.aux.dark_count_prob),
            },
            run: RunSection {
                mode: Some(c.mode.into()),
                n_cycles: Some(c.n_cycles),
                num_pulses: Some(c.num_pulses),
                seed: Some(c.seed),
                theta1_deg: Some(c.theta1.degrees()),
                theta2_deg: Some(c.theta2.degrees()),
                herald_latency_ns: Some(c.herald_latency_ns),
                divider_k: Some(c.divider_k),
                acceptance_window_ns: Some(c.acceptance_window_ns),
                coincidence_window_ns: Some(c.coincidence_window_ns),
                trigger_delay_ns: Some(c.trigger_delay_ns),
            },
        }
    }

    /// Overrides the keys present in the file on top of `base`. Does not
    /// validate.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = *base;
        let s = &self.source;
        set(&mut c.source.pulse_period_ns, s.pulse_period_ns);
        set(&mut c.source.pair_prob, s.pair_prob);
        set(&mut c.source.sa_success_prob, s.sa_success_prob);
        set(&mut c.source.psi_phase_rad, s.psi_phase_rad);
        set(&mut c.source.white_noise, s.white_noise);

        let q = &self.cqm;
        set(&mut c.cqm.cycle_time_ns, q.cycle_time_ns);
        set(&mut c.cqm.eta_cycle, q.eta_cycle);
        set(&mut c.cqm.flip_fidelity, q.flip_fidelity);
        set(&mut c.cqm.delta_per_cycle_rad, q.delta_per_cycle_rad);
        set(&mut c.cqm.pc_rise_ns, q.pc_rise_ns);
        set(&mut c.cqm.pc_fall_ns, q.pc_fall_ns);
        set(&mut c.cqm.tap_reflectivity, q.tap_reflectivity);
        set(
            &mut c.cqm.flip_convention,
            q.flip_convention.map(Into::into),
        );

        let d = &self.delays;
        set(&mut c.herald_delay.delay_ns, d.herald_delay_ns);
        set(&mut c.herald_delay.transmission, d.herald_transmission);
        set(
            &mut c.herald_delay.birefringent_phase_rad,
            d.herald_phase_rad,
        );
        set(&mut c.passive_delay.delay_ns, d.passive_delay_ns);
        set(&mut c.passive_delay.transmission, d.passive_transmission);
        set(
            &mut c.passive_delay.birefringent_phase_rad,
            d.passive_phase_rad,
        );

        let t = &self.detectors;
        set(&mut c.detectors.d1.efficiency, t.d1_efficiency);
        set(&mut c.detectors.d1.dark_count_prob, t.d1_dark_count_prob);
        set(&mut c.detectors.d2.efficiency, t.d2_efficiency);
        set(&mut c.detectors.d2.dark_count_prob, t.d2_dark_count_prob);
        set(&mut c.detectors.aux.efficiency, t.aux_efficiency);
        set(&mut c.detectors.aux.dark_count_prob, t.aux_dark_count_prob);

        let r = &self.run;
        set(&mut c.mode, r.mode.map(Into::into));
        set(&mut c.n_cycles, r.n_cycles);
        set(&mut c.num_pulses, r.num_pulses);
        set(&mut c.seed, r.seed);
        set(
            &mut c.theta1,
            r.theta1_deg.map(PolarizerSetting::from_degrees),
        );
        set(
            &mut c.theta2,
            r.theta2_deg.map(PolarizerSetting::from_degrees),
        );
        set(&mut c.herald_latency_ns, r.herald_latency_ns);
        set(&mut c.divider_k, r.divider_k);
        set(&mut c.coincidence_window_ns, r.coincidence_window_ns);
        set(&mut c.trigger_delay_ns, r.trigger_delay_ns);
        match (r.acceptance_window_ns, s.pulse_period_ns) {
            (Some(w), _) => c.acceptance_window_ns = w,
            (None, Some(period)) => c.acceptance_window_ns = period / 2.0,
            (None, None) => {}
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections are plain tables")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        let message = e.message().to_string();
        match message.strip_prefix("unknown field `") {
            Some(rest) => ConfigError::UnknownKey {
                line,
                key: rest.split('`').next().unwrap_or_default().to_string(),
            },
            None => ConfigError::Syntax { line, message },
        }
    })
}

/// Parses `text` on top of the defaults and validates the result.
pub fn config_from_str(text: &str) -> Result<RunConfig, ConfigError> {
    let config = parse_config(text)?.apply(&RunConfig::default());
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    config_from_str(&read(path)?)
}

pub fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// The fully resolved config as a file that loads back to the same value.
pub fn to_toml(config: &RunConfig) -> String {
    ConfigFile::from_run_config(config).to_toml()
}
