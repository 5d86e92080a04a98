use loopmem::analysis::{fit_fringe, fringe_shift, visibility};
use loopmem::engine::{
    run, run_heralded, run_periodic, sweep_theta1, Mode, RunConfig, StorageChannel,
};
use loopmem::oracle::{expected_rate_per_pulse, expected_rate_ratio};
use loopmem::polcore::PolarizerSetting;

fn deg(d: f64) -> PolarizerSetting {
    PolarizerSetting::from_degrees(d)
}

fn grid() -> Vec<f64> {
    (0..18).map(|i| i as f64 * 10.0).collect()
}

fn heralded(n: u32, pulses: u64, pair_prob: f64) -> RunConfig {
    let mut c = RunConfig {
        n_cycles: n,
        num_pulses: pulses,
        ..RunConfig::default()
    };
    c.source.pair_prob = pair_prob;
    c
}

fn within(observed: u64, rate: f64, pulses: u64, nsigma: f64) -> bool {
    let mean = rate * pulses as f64;
    let sigma = (mean * (1.0 - rate)).sqrt().max(1.0);
    (observed as f64 - mean).abs() <= nsigma * sigma
}

#[test]
fn before_storage_sweep_follows_oracle() {
    let cfg = heralded(4, 1_000_000, 1e-3);
    let (before, _) = sweep_theta1(&cfg, &grid()).unwrap();
    for p in &before.points {
        let rate = expected_rate_per_pulse(
            &cfg,
            StorageChannel::BeforeStorage,
            deg(p.theta1_deg),
            cfg.theta2,
        );
        assert!(
            within(p.coincidences, rate, p.exposure_pulses, 4.0),
            "θ₁ = {}: {} vs {}",
            p.theta1_deg,
            p.coincidences,
            rate * p.exposure_pulses as f64
        );
    }
}

#[test]
fn periodic_point_follows_oracle() {
    let mut cfg = heralded(4, 4_000_000, 0.02);
    cfg.mode = Mode::Periodic;
    cfg.cqm.eta_cycle = 1.0;
    for channel in [StorageChannel::BeforeStorage, StorageChannel::AfterStorage] {
        let rec = run_periodic(&cfg).unwrap();
        let rate = expected_rate_per_pulse(&cfg, channel, cfg.theta1, cfg.theta2);
        let got = rec.total().coincidences(channel);
        assert!(
            within(got, rate, cfg.num_pulses, 4.0),
            "{channel}: {got} vs {rate}"
        );
    }
}

#[test]
fn heralded_fringe_shift_is_ninety_degrees() {
    let mut cfg = heralded(4, 2_000_000, 5e-3);
    cfg.cqm.eta_cycle = 1.0;
    let (before, after) = sweep_theta1(&cfg, &grid()).unwrap();
    let shift = fringe_shift(&fit_fringe(&before).unwrap(), &fit_fringe(&after).unwrap()).unwrap();
    assert!(
        (shift.deg - 90.0).abs() <= 3.0_f64.max(3.0 * shift.sigma_deg),
        "{shift:?}"
    );
    let v = visibility(&fit_fringe(&after).unwrap()).unwrap();
    assert!(v.v > 0.95, "{v:?}");
}

#[test]
fn storage_loss_scales_as_eta_squared_per_two_cycles() {
    let n4 = run_heralded(&heralded(4, 4_000_000, 5e-3))
        .unwrap()
        .total()
        .coincidences_12;
    let n6 = run_heralded(&heralded(6, 4_000_000, 5e-3))
        .unwrap()
        .total()
        .coincidences_12;
    let ratio = n6 as f64 / n4 as f64;
    let sigma = ratio * (1.0 / n6 as f64 + 1.0 / n4 as f64).sqrt();
    let expected = expected_rate_ratio(6, 4, &RunConfig::default().cqm);
    assert!((expected - 0.78f64.powi(2)).abs() < 1e-15);
    assert!(
        (ratio - expected).abs() <= 3.0 * sigma,
        "{ratio} vs {expected} ± {sigma}"
    );
}

#[test]
fn periodic_rate_halves_with_divider() {
    let mut cfg = heralded(4, 4_000_000, 0.05);
    cfg.mode = Mode::Periodic;
    let c64 = run(&cfg).unwrap().total().coincidences_12;
    cfg.divider_k = 128;
    let c128 = run(&cfg).unwrap().total().coincidences_12;
    let ratio = c128 as f64 / c64 as f64;
    let sigma = ratio * (1.0 / c128 as f64 + 1.0 / c64 as f64).sqrt();
    assert!((ratio - 0.5).abs() <= 3.0 * sigma, "{c64} {c128}");
}

#[test]
fn zero_pair_probability_gives_nothing() {
    let cfg = heralded(4, 1_000_000, 0.0);
    let t = run(&cfg).unwrap().total();
    assert_eq!(t.pairs_emitted, 0);
    assert_eq!(t.coincidences_12 + t.coincidences_1aux, 0);
}

#[test]
fn shrinking_acceptance_window_starves_periodic_storage() {
    let mut cfg = heralded(4, 2_000_000, 0.05);
    cfg.mode = Mode::Periodic;
    let wide = run(&cfg).unwrap().total();
    assert!(wide.photons_stored > 0);
    cfg.trigger_delay_ns = 0.5;
    cfg.acceptance_window_ns = 0.4;
    let narrow = run(&cfg).unwrap().total();
    assert_eq!(narrow.photons_stored, 0);
    assert_eq!(narrow.coincidences_12, 0);
}
