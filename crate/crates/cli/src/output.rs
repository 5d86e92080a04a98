//! CSV tables and file writing.
//!
//! Per-curve files have the columns `theta1_deg,coincidences,exposure_pulses,channel`.
//! The oracle table uses the same columns with expected (fractional)
//! coincidences and the channel name suffixed `_oracle`. `curves.csv` joins
//! all curves of a run in long format with the fitted value alongside.

use std::io;
use std::path::Path;

use loopmem::analysis::FringeFit;
use loopmem::engine::{CoincidenceCurve, RunConfig, StorageChannel};
use loopmem::oracle::expected_rate_per_pulse;
use loopmem::polcore::PolarizerSetting;

use crate::presets::SweepResult;

pub const CURVE_HEADER: [&str; 4] = ["theta1_deg", "coincidences", "exposure_pulses", "channel"];

pub const LONG_HEADER: [&str; 7] = [
    "n_cycles",
    "theta2_deg",
    "channel",
    "theta1_deg",
    "coincidences",
    "exposure_pulses",
    "fit_coincidences",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    pub fn new(name: &str, contents: String) -> Self {
        OutputFile {
            name: name.to_string(),
            contents,
        }
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("csv fields are UTF-8")
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

pub fn curve_file_name(n: u32, curve: &CoincidenceCurve) -> String {
    format!(
        "n{n}_theta2_{}_{}.csv",
        curve.theta2.degrees(),
        curve.channel.name()
    )
}

pub fn curve_csv(curve: &CoincidenceCurve) -> String {
    let mut w = writer();
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for p in &curve.points {
        w.write_record([
            p.theta1_deg.to_string(),
            p.coincidences.to_string(),
            p.exposure_pulses.to_string(),
            curve.channel.name().to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn long_csv(
    sweeps: &[SweepResult],
    fits: &[((u32, f64, StorageChannel), FringeFit)],
) -> String {
    let mut w = writer();
    w.write_record(LONG_HEADER).expect("in-memory write");
    for s in sweeps {
        for curve in [&s.before, &s.after] {
            let fit = fits
                .iter()
                .find(|(k, _)| *k == (s.n_cycles, s.theta2_deg, curve.channel))
                .map(|(_, f)| f);
            for p in &curve.points {
                w.write_record([
                    s.n_cycles.to_string(),
                    s.theta2_deg.to_string(),
                    curve.channel.name().to_string(),
                    p.theta1_deg.to_string(),
                    p.coincidences.to_string(),
                    p.exposure_pulses.to_string(),
                    fit.map_or(String::new(), |f| f.value_at(p.theta1_deg).to_string()),
                ])
                .expect("in-memory write");
            }
        }
    }
    finish(w)
}

/// Expected coincidences over `num_pulses` pump pulses for both channels.
pub fn oracle_table_csv(config: &RunConfig, theta1_deg: &[f64]) -> String {
    let mut w = writer();
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for channel in [StorageChannel::BeforeStorage, StorageChannel::AfterStorage] {
        for &t in theta1_deg {
            let theta1 = PolarizerSetting::from_degrees(t);
            let rate = expected_rate_per_pulse(config, channel, theta1, config.theta2);
            w.write_record([
                theta1.degrees().to_string(),
                (rate * config.num_pulses as f64).to_string(),
                config.num_pulses.to_string(),
                format!("{}_oracle", channel.name()),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

pub fn emit_oracle_table(config: &RunConfig, theta1_deg: &[f64], path: &Path) -> io::Result<()> {
    config
        .validate()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    std::fs::write(path, oracle_table_csv(config, theta1_deg))
}

/// Writes the files in order, creating the directory if needed.
pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}
