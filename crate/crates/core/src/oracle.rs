//! Closed-form expectations for the Monte Carlo observables.
//!
//! Nothing here samples. Expected coincidence probabilities are computed by
//! evolving the source state exactly and taking the trace against the
//! polarizer projectors, then multiplying by the classical survival factors.
//!
//! Two effects are left out: the heralded-mode dead time (a trigger arriving
//! while the Pockels cell is still busy is ignored by the engine) and dark
//! counts. Both vanish at low pair rates.

use crate::components::{cqm_net_transform, CqmParams};
use crate::engine::{Mode, RunConfig, StorageChannel};
use crate::polcore::{
    apply_one_photon, coincidence_probability, phase_op, psi_minus, Photon, PolarizerSetting,
    TwoQubitState,
};

/// `C(θ₁) = offset + amplitude·sin²(θ₁ − phase)` at a fixed θ₂.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCurve {
    pub theta2_deg: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Location of the fringe minimum, in `[0°, 180°)`.
    pub phase_deg: f64,
    pub points: Vec<(f64, f64)>,
}

impl ExpectedCurve {
    pub fn value_at(&self, theta1_deg: f64) -> f64 {
        self.offset + self.amplitude * (theta1_deg - self.phase_deg).to_radians().sin().powi(2)
    }

    /// `(max − min)/(max + min)`; zero for a vanishing curve.
    pub fn visibility(&self) -> f64 {
        let sum = self.amplitude + 2.0 * self.offset;
        if sum <= 0.0 {
            0.0
        } else {
            self.amplitude / sum
        }
    }
}

/// State of the pair as it meets the two polarizers on `channel`.
pub fn channel_state(config: &RunConfig, channel: StorageChannel) -> TwoQubitState {
    let src = &config.source;
    let mut rho =
        psi_minus(src.psi_phase_rad).mix(&TwoQubitState::maximally_mixed(), src.white_noise);
    rho = match config.mode {
        Mode::Heralded => apply_one_photon(
            &rho,
            Photon::Two,
            &phase_op(config.herald_delay.birefringent_phase_rad),
        ),
        Mode::Periodic => apply_one_photon(
            &rho,
            Photon::One,
            &phase_op(config.passive_delay.birefringent_phase_rad),
        ),
    };
    if channel == StorageChannel::AfterStorage && config.n_cycles > 0 {
        let (net, _) =
            cqm_net_transform(config.n_cycles, &config.cqm).expect("n_cycles checked above");
        rho = apply_one_photon(&rho, Photon::Two, &net);
    }
    rho
}

/// Probability that both photons of the channel survive every classical
/// loss, given that the pair was emitted and the storage window (if any)
/// was open.
pub fn channel_throughput(config: &RunConfig, channel: StorageChannel) -> f64 {
    let cqm = &config.cqm;
    let d = &config.detectors;
    let delays = match config.mode {
        Mode::Heralded => config.herald_delay.transmission,
        Mode::Periodic => config.passive_delay.transmission,
    };
    let common = config.source.sa_success_prob * delays * d.d1.efficiency;
    match channel {
        StorageChannel::BeforeStorage => common * cqm.tap_reflectivity * d.aux.efficiency,
        StorageChannel::AfterStorage => {
            common
                * cqm.tap_transmissivity()
                * cqm.cycle_survival().powi(config.n_cycles as i32)
                * cqm.tap_reflectivity
                * d.d2.efficiency
        }
    }
}

/// Expected coincidence probability per emitted pair on `channel`, for a
/// pair whose photon 2 finds an open storage window.
pub fn expected_coincidence(
    config: &RunConfig,
    channel: StorageChannel,
    theta1: PolarizerSetting,
    theta2: PolarizerSetting,
) -> f64 {
    channel_throughput(config, channel)
        * coincidence_probability(&channel_state(config, channel), theta1, theta2)
}

/// Fraction of emitted pairs whose photon 2 reaches the memory inside a
/// storage window.
pub fn alignment_probability(config: &RunConfig, channel: StorageChannel) -> f64 {
    if channel == StorageChannel::BeforeStorage {
        return 1.0;
    }
    let w = config.acceptance_window_ns;
    match config.mode {
        Mode::Heralded => {
            let miss = config.herald_delay.delay_ns - config.herald_latency_ns;
            if miss.abs() < w {
                1.0
            } else {
                0.0
            }
        }
        Mode::Periodic => {
            let k = config.divider_k as u64;
            let period = config.source.pulse_period_ns;
            let trigger = config.trigger_period_ns();
            let aligned = (0..k)
                .filter(|&r| {
                    let d = (r as f64 * period - config.trigger_delay_ns).rem_euclid(trigger);
                    d.min(trigger - d) < w
                })
                .count();
            aligned as f64 / k as f64
        }
    }
}

/// Expected coincidences per pump pulse.
pub fn expected_rate_per_pulse(
    config: &RunConfig,
    channel: StorageChannel,
    theta1: PolarizerSetting,
    theta2: PolarizerSetting,
) -> f64 {
    config.source.pair_prob
        * alignment_probability(config, channel)
        * expected_coincidence(config, channel, theta1, theta2)
}

/// The expected fringe at `theta2`, sampled on `grid_deg`, in coincidences
/// per emitted pair.
///
/// Any two-qubit coincidence probability is `a₀ + a₁cos2θ₁ + a₂sin2θ₁` in
/// θ₁, so three evaluations at 0°, 45° and 90° pin the curve down exactly.
pub fn expected_curve(
    config: &RunConfig,
    channel: StorageChannel,
    theta2: PolarizerSetting,
    grid_deg: &[f64],
) -> ExpectedCurve {
    let f =
        |d: f64| expected_coincidence(config, channel, PolarizerSetting::from_degrees(d), theta2);
    let (f0, f45, f90) = (f(0.0), f(45.0), f(90.0));
    let a0 = 0.5 * (f0 + f90);
    let a1 = 0.5 * (f0 - f90);
    let a2 = f45 - a0;
    let r = a1.hypot(a2);
    let phase_deg = if r > 0.0 {
        PolarizerSetting::from_degrees(0.5 * (-a2).atan2(-a1).to_degrees()).degrees()
    } else {
        0.0
    };
    ExpectedCurve {
        theta2_deg: theta2.degrees(),
        amplitude: 2.0 * r,
        offset: (a0 - r).max(0.0),
        phase_deg,
        points: grid_deg.iter().map(|&d| (d, f(d))).collect(),
    }
}

/// Expected (H/V, diagonal) visibilities: the fringes at θ₂ = 0° and 45°.
pub fn expected_visibility(config: &RunConfig, channel: StorageChannel) -> (f64, f64) {
    let v = |deg: f64| {
        expected_curve(config, channel, PolarizerSetting::from_degrees(deg), &[]).visibility()
    };
    (v(0.0), v(45.0))
}

/// Ratio of average after-storage rates for `n1` vs `n2` cycles.
pub fn expected_rate_ratio(n1: u32, n2: u32, params: &CqmParams) -> f64 {
    params.cycle_survival().powi(n1 as i32 - n2 as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::DetectorParams;
    use std::f64::consts::PI;

    fn deg(d: f64) -> PolarizerSetting {
        PolarizerSetting::from_degrees(d)
    }

    fn ideal() -> RunConfig {
        let mut c = RunConfig::default();
        c.cqm.eta_cycle = 1.0;
        c
    }

    #[test]
    fn after_storage_fringe_is_shifted() {
        let cfg = ideal();
        let after = StorageChannel::AfterStorage;
        let max = expected_coincidence(&cfg, after, deg(0.0), deg(0.0));
        // 0.5 (SA) · 0.5 (tap in) · 0.5 (tap out) · ½ (flipped singlet at θ₁ = θ₂ = 0)
        assert!((max - 0.0625).abs() < 1e-12);
        assert!(expected_coincidence(&cfg, after, deg(90.0), deg(0.0)).abs() < 1e-12);
        let curve = expected_curve(&cfg, after, deg(0.0), &[]);
        assert!((curve.phase_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn flip_leaves_diagonal_fringe_in_place() {
        // X maps ψ⁻ to φ⁻, whose fringe ½cos²(θ₁ + θ₂) coincides with the
        // singlet fringe when θ₂ = 45°
        let cfg = ideal();
        let before = expected_curve(&cfg, StorageChannel::BeforeStorage, deg(45.0), &[]);
        let after = expected_curve(&cfg, StorageChannel::AfterStorage, deg(45.0), &[]);
        assert!((before.phase_deg - after.phase_deg).abs() < 1e-9);
    }

    #[test]
    fn before_storage_is_plain_singlet() {
        let cfg = ideal();
        for (a, b) in [(0.0f64, 0.0), (30.0, 0.0), (90.0, 0.0), (100.0, 45.0)] {
            let law = 0.5 * (a - b).to_radians().sin().powi(2) * 0.5 * 0.5;
            let got = expected_coincidence(&cfg, StorageChannel::BeforeStorage, deg(a), deg(b));
            assert!((got - law).abs() < 1e-12);
        }
        let c = expected_curve(&cfg, StorageChannel::BeforeStorage, deg(0.0), &[]);
        assert!(c.phase_deg.abs() < 1e-9);
    }

    #[test]
    fn zero_transmission_kills_after_storage() {
        let mut cfg = RunConfig::default();
        cfg.cqm.eta_cycle = 0.0;
        for n in 1..6 {
            cfg.n_cycles = n;
            assert_eq!(
                expected_coincidence(&cfg, StorageChannel::AfterStorage, deg(0.0), deg(0.0)),
                0.0
            );
        }
        assert_eq!(
            expected_visibility(&cfg, StorageChannel::AfterStorage),
            (0.0, 0.0)
        );
    }

    #[test]
    fn visibilities() {
        let (hv, diag) = expected_visibility(&ideal(), StorageChannel::AfterStorage);
        assert!((hv - 1.0).abs() < 1e-12 && (diag - 1.0).abs() < 1e-12);

        let mut cfg = ideal();
        cfg.n_cycles = 3;
        cfg.cqm.delta_per_cycle_rad = PI / 2.0;
        let (hv, diag) = expected_visibility(&cfg, StorageChannel::AfterStorage);
        assert!((hv - 1.0).abs() < 1e-12);
        assert!(diag.abs() < 1e-12);

        // a residual phase of π turns ψ⁻ into ψ⁺: the diagonal fringe moves
        // by 90° but keeps full visibility
        cfg.cqm.delta_per_cycle_rad = PI;
        let (_, diag) = expected_visibility(&cfg, StorageChannel::AfterStorage);
        assert!((diag - 1.0).abs() < 1e-12);

        for n in [2, 4, 6] {
            cfg.n_cycles = n;
            cfg.cqm.delta_per_cycle_rad = 1.234;
            let (_, diag) = expected_visibility(&cfg, StorageChannel::AfterStorage);
            assert!((diag - 1.0).abs() < 1e-12);
        }
        for n in [1, 3, 5] {
            cfg.n_cycles = n;
            cfg.cqm.delta_per_cycle_rad = 0.5;
            let (_, diag) = expected_visibility(&cfg, StorageChannel::AfterStorage);
            assert!((diag - 0.5f64.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_caps_visibility() {
        let mut cfg = ideal();
        cfg.source.white_noise = 0.06;
        let (hv, diag) = expected_visibility(&cfg, StorageChannel::BeforeStorage);
        assert!((hv - 0.94).abs() < 1e-12 && (diag - 0.94).abs() < 1e-12);
    }

    #[test]
    fn rate_ratios() {
        let p = CqmParams::default();
        assert!((expected_rate_ratio(5, 4, &p) - 0.78).abs() < 1e-15);
        assert_eq!(expected_rate_ratio(7, 7, &p), 1.0);
        let r = expected_rate_ratio(20, 0, &p);
        assert!((r - 0.78f64.powi(20)).abs() < 1e-18);
        assert!((r - 6.9e-3).abs() < 0.05e-3);
    }

    #[test]
    fn alignment() {
        let mut cfg = RunConfig {
            mode: Mode::Periodic,
            divider_k: 64,
            ..Default::default()
        };
        assert!(
            (alignment_probability(&cfg, StorageChannel::AfterStorage) - 1.0 / 64.0).abs() < 1e-15
        );
        cfg.trigger_delay_ns = 0.5;
        cfg.acceptance_window_ns = 0.4;
        assert_eq!(
            alignment_probability(&cfg, StorageChannel::AfterStorage),
            0.0
        );
        let mut h = RunConfig::default();
        assert_eq!(alignment_probability(&h, StorageChannel::AfterStorage), 1.0);
        h.herald_latency_ns = 310.0;
        assert_eq!(alignment_probability(&h, StorageChannel::AfterStorage), 0.0);
    }

    #[test]
    fn curve_mean_is_offset_plus_half_amplitude() {
        let mut cfg = RunConfig::default();
        cfg.source.white_noise = 0.2;
        cfg.cqm.delta_per_cycle_rad = 0.4;
        cfg.n_cycles = 3;
        cfg.detectors.d2 = DetectorParams {
            efficiency: 0.7,
            dark_count_prob: 0.0,
        };
        let grid: Vec<f64> = (0..3600).map(|i| i as f64 * 0.05).collect();
        for ch in [StorageChannel::BeforeStorage, StorageChannel::AfterStorage] {
            for t2 in [0.0, 45.0, 17.0] {
                let c = expected_curve(&cfg, ch, deg(t2), &grid);
                let mean = c.points.iter().map(|p| p.1).sum::<f64>() / grid.len() as f64;
                assert!((mean - (c.offset + c.amplitude / 2.0)).abs() < 1e-10);
                for &(x, y) in &c.points {
                    assert!((c.value_at(x) - y).abs() < 1e-12);
                }
            }
        }
    }
}
