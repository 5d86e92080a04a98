//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Every tolerance used below is fixed in this file.

use std::time::Instant;

use loopmem::analysis::{
    chsh_from_visibilities, fit_fringe, fringe_shift, visibility, VisibilityResult,
};
use loopmem::components::{validate_pc_schedule, CqmParams, ScheduleViolation};
use loopmem::engine::{
    derive_seed, run, splitmix64, sweep_theta1, CoincidenceCurve, Mode, RunConfig, RunRecord,
    StorageChannel,
};
use loopmem::oracle::{expected_rate_per_pulse, expected_visibility};
use loopmem::polcore::{flip_op, phase_op, PolarizerSetting};
use loopmem_cli::presets::{default_theta1_grid, execute, Preset};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn deg(d: f64) -> PolarizerSetting {
    PolarizerSetting::from_degrees(d)
}

/// Uniform draw in [0, 1) from a counter, for parameter sweeps.
fn unit(i: u64) -> f64 {
    (splitmix64(i) >> 11) as f64 / (1u64 << 53) as f64
}

fn heralded(n: u32, pulses: u64, pair_prob: f64, theta2: f64) -> RunConfig {
    let mut c = RunConfig {
        n_cycles: n,
        num_pulses: pulses,
        theta2: deg(theta2),
        ..RunConfig::default()
    };
    c.source.pair_prob = pair_prob;
    c
}

fn fitted_visibility(curve: &CoincidenceCurve) -> Result<VisibilityResult, String> {
    let fit = fit_fringe(curve).map_err(|e| e.to_string())?;
    visibility(&fit).map_err(|e| e.to_string())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

fn ac1_singlet_fringe_law() -> Verdict {
    const NSIGMA: f64 = 4.0;
    const MAX_SECONDS: f64 = 30.0;
    let cfg = heralded(4, 1_000_000, 1e-3, 0.0);
    let start = Instant::now();
    let (before, _) = single_threaded(|| sweep_theta1(&cfg, &default_theta1_grid()))
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for p in &before.points {
        let q = expected_rate_per_pulse(
            &cfg,
            StorageChannel::BeforeStorage,
            deg(p.theta1_deg),
            cfg.theta2,
        );
        let n = p.exposure_pulses as f64;
        let sigma = (n * q * (1.0 - q)).sqrt().max(1.0);
        worst = worst.max((p.coincidences as f64 - n * q).abs() / sigma);
    }
    let msg = format!(
        "{} points, worst deviation {worst:.2}σ (limit {NSIGMA}σ), {secs:.2} s single-threaded (limit {MAX_SECONDS} s)",
        before.points.len()
    );
    if before.points.len() == 18 && worst <= NSIGMA && secs < MAX_SECONDS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac2_fringe_shift() -> Verdict {
    const TOL_DEG: f64 = 3.0;
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [4, 6] {
        let cfg = heralded(n, 20_000_000, 5e-3, 0.0);
        let (b, a) = sweep_theta1(&cfg, &default_theta1_grid()).map_err(|e| e.to_string())?;
        let fb = fit_fringe(&b).map_err(|e| e.to_string())?;
        let fa = fit_fringe(&a).map_err(|e| e.to_string())?;
        let s = fringe_shift(&fb, &fa).map_err(|e| e.to_string())?;
        ok &= (s.deg - 90.0).abs() <= TOL_DEG;
        parts.push(format!("n={n}: {:.2}° ± {:.2}°", s.deg, s.sigma_deg));
    }
    let msg = format!("{} (target 90° ± {TOL_DEG}°)", parts.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac3_loss_fit() -> Verdict {
    const TARGET: f64 = 0.22;
    const TOL: f64 = 0.02;
    const MIN_COINCIDENCES: u64 = 10_000;
    let out = execute(&Preset::LossVsN.plan()).map_err(|e| e.to_string())?;
    let loss = out.report.loss_fit.as_ref().ok_or("no loss fit")?;
    let fewest = loss
        .points
        .iter()
        .map(|p| p.total_coincidences_counts)
        .min()
        .unwrap_or(0);
    let ns: Vec<u32> = loss.points.iter().map(|p| p.n_cycles).collect();
    let msg = format!(
        "n = {ns:?}: loss {:.4} ± {:.4} per cycle (target {TARGET} ± {TOL}), fewest coincidences {fewest} (min {MIN_COINCIDENCES})",
        loss.loss_per_cycle_frac, loss.loss_per_cycle_sigma_frac
    );
    if (loss.loss_per_cycle_frac - TARGET).abs() <= TOL
        && fewest >= MIN_COINCIDENCES
        && ns == [2, 4, 6, 8, 10]
    {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac4_visibility_flat_in_n() -> Verdict {
    const MIN_V: f64 = 0.98;
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [2, 4, 6] {
        let cfg = heralded(n, 20_000_000, 5e-3, 45.0);
        let (_, after) = sweep_theta1(&cfg, &default_theta1_grid()).map_err(|e| e.to_string())?;
        let v = fitted_visibility(&after)?;
        ok &= v.v >= MIN_V;
        parts.push(format!("n={n}: {:.4} ± {:.4}", v.v, v.sigma));
    }
    let msg = format!("after-storage V_diag {} (min {MIN_V})", parts.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac5_chsh() -> Verdict {
    const ROUNDING_TOL: f64 = 0.005;
    const MIN_SIGNIFICANCE: f64 = 5.0;
    let reference = [
        (0.95, 0.92, 2.64, ROUNDING_TOL),
        (0.97, 0.91, 2.66, ROUNDING_TOL),
        (0.98, 0.93, 2.69, 0.015),
        (0.93, 0.85, 2.52, ROUNDING_TOL),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (hv, diag, s, tol) in reference {
        let v = |x| VisibilityResult { v: x, sigma: 0.0 };
        let got = chsh_from_visibilities(&v(hv), &v(diag)).s;
        ok &= (got - s).abs() <= tol;
        parts.push(format!("({hv},{diag})→{got:.4}"));
    }

    let mut cfg = RunConfig {
        mode: Mode::Periodic,
        num_pulses: 100_000_000,
        ..RunConfig::default()
    };
    cfg.source.pair_prob = 1e-2;
    cfg.source.white_noise = 0.06;
    let mut vis = Vec::new();
    for theta2 in [0.0, 45.0] {
        let c = RunConfig {
            theta2: deg(theta2),
            seed: derive_seed(5, theta2 as u64),
            ..cfg
        };
        let (_, after) = sweep_theta1(&c, &default_theta1_grid()).map_err(|e| e.to_string())?;
        vis.push(fitted_visibility(&after)?);
    }
    let bell = chsh_from_visibilities(&vis[0], &vis[1]);
    let sig = bell.significance();
    ok &= bell.s > 2.0 && sig >= MIN_SIGNIFICANCE;
    let msg = format!(
        "{}; simulated after storage with white noise 0.06: S = {:.3} ± {:.3}, {sig:.1}σ above 2 (min {MIN_SIGNIFICANCE}σ)",
        parts.join(", "),
        bell.s,
        bell.sigma
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac6_phase_cancellation() -> Verdict {
    const DELTA: f64 = 0.5;
    const ORACLE_TOL: f64 = 1e-12;
    const NSIGMA: f64 = 4.0;
    const MATRIX_TOL: f64 = 1e-12;
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 1..=6u32 {
        let mut cfg = heralded(n, 20_000_000, 5e-3, 45.0);
        cfg.cqm.delta_per_cycle_rad = DELTA;
        let law = if n % 2 == 0 { 1.0 } else { DELTA.cos().abs() };
        let (_, oracle_diag) = expected_visibility(&cfg, StorageChannel::AfterStorage);
        let (_, after) = sweep_theta1(&cfg, &default_theta1_grid()).map_err(|e| e.to_string())?;
        let v = fitted_visibility(&after)?;
        ok &= (oracle_diag - law).abs() <= ORACLE_TOL;
        ok &= (v.v - oracle_diag).abs() <= NSIGMA * v.sigma;
        parts.push(format!(
            "n={n}: oracle {oracle_diag:.4}, MC {:.4} ± {:.4}",
            v.v, v.sigma
        ));
    }
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let delta = unit(i) * std::f64::consts::TAU;
        let xp = flip_op() * phase_op(delta);
        let m = *(xp * xp).matrix();
        for r in 0..2 {
            for c in 0..2 {
                let id = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((m[(r, c)].norm() - id).abs());
            }
        }
    }
    ok &= worst <= MATRIX_TOL;
    let msg = format!(
        "δ = {DELTA} rad, V_diag {}; |(X·P(δ))²| vs |I| over 100 δ: max error {worst:.1e}",
        parts.join("; ")
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac7_schedule() -> Verdict {
    const SAMPLES: u64 = 10_000;
    let p = CqmParams::default();
    let accept = validate_pc_schedule(6, &p, 640.0).is_ok();
    let reject = matches!(
        validate_pc_schedule(20, &p, 320.0),
        Err(ScheduleViolation::Overlap { .. })
    );
    let mut monotone = true;
    for i in 0..SAMPLES {
        let params = CqmParams {
            pc_rise_ns: unit(4 * i) * 40.0,
            pc_fall_ns: unit(4 * i + 1) * 40.0,
            ..p
        };
        let n = 1 + (unit(4 * i + 2) * 30.0) as u32;
        let period = unit(4 * i + 3) * 1200.0 + 1.0;
        if validate_pc_schedule(n, &params, period).is_ok() {
            monotone &= validate_pc_schedule(n, &params, period * 1.5).is_ok();
            monotone &= n == 1 || validate_pc_schedule(n - 1, &params, period).is_ok();
        }
    }
    let msg = format!(
        "n=6 @ 640 ns accepted: {accept}; n=20 @ 320 ns rejected as overlap: {reject}; monotone over {SAMPLES} random draws: {monotone}"
    );
    if accept && reject && monotone {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac8_periodic_rate() -> Verdict {
    const NSIGMA: f64 = 3.0;
    let mut cfg = RunConfig {
        mode: Mode::Periodic,
        num_pulses: 10_000_000,
        ..RunConfig::default()
    };
    cfg.source.pair_prob = 0.2;
    let c64 = run(&cfg)
        .map_err(|e| e.to_string())?
        .total()
        .coincidences_12;
    cfg.divider_k = 128;
    cfg.seed = 2;
    let c128 = run(&cfg)
        .map_err(|e| e.to_string())?
        .total()
        .coincidences_12;
    let ratio = c128 as f64 / c64 as f64;
    let sigma = ratio * (1.0 / c128 as f64 + 1.0 / c64 as f64).sqrt();
    let msg = format!(
        "k=64: {c64}, k=128: {c128}, ratio {ratio:.4} ± {sigma:.4} (target 0.5 within {NSIGMA}σ)"
    );
    if c128 > 0 && (ratio - 0.5).abs() <= NSIGMA * sigma {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac9_determinism() -> Verdict {
    const SCALE: f64 = 0.01;
    let mut ok = true;
    let mut files = 0;
    for p in Preset::ALL {
        let plan = p.plan().scaled(SCALE);
        let a = execute(&plan).map_err(|e| e.to_string())?;
        let b = single_threaded(|| execute(&plan)).map_err(|e| e.to_string())?;
        ok &= a.files == b.files;
        files += a.files.len();
    }

    let mut cfg = RunConfig {
        num_pulses: 50_000_000,
        ..RunConfig::default()
    };
    cfg.source.pair_prob = 0.02;
    let parts: Vec<RunRecord> = (0..4)
        .map(|s| run(&RunConfig { seed: s, ..cfg }))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let fold = |order: [usize; 4]| {
        let mut acc = parts[order[0]].clone();
        for &i in &order[1..] {
            acc.merge(&parts[i]);
        }
        acc.counts
    };
    let merge_ok = [[3, 1, 0, 2], [2, 3, 1, 0], [1, 0, 3, 2]]
        .iter()
        .all(|&o| fold(o) == fold([0, 1, 2, 3]));
    let msg = format!(
        "{files} preset files byte-identical across repeat and thread counts: {ok}; merge order independent: {merge_ok}"
    );
    if ok && merge_ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 singlet fringe law", ac1_singlet_fringe_law),
        ("AC2 90° fringe shift", ac2_fringe_shift),
        ("AC3 loss fit", ac3_loss_fit),
        ("AC4 visibility flat in n", ac4_visibility_flat_in_n),
        ("AC5 CHSH reproduction", ac5_chsh),
        ("AC6 even/odd phase cancellation", ac6_phase_cancellation),
        ("AC7 schedule validator", ac7_schedule),
        ("AC8 periodic rate law", ac8_periodic_rate),
        ("AC9 determinism", ac9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
