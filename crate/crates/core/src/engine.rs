//! Orchestration of the two operating modes.
//!
//! *Heralded*: photon 1 goes straight to its polarizer and D1; a D1 click
//! opens a storage window `herald_latency_ns` later while photon 2 travels
//! through the latency-compensating spool. *Periodic*: storage windows open
//! on every `divider_k`-th pump pulse; photon 1 waits in the passive-memory
//! spool, and photon 2 is stored only if it happens to arrive in a window.
//!
//! In both modes photon 2 first meets the tap beamsplitter: the reflected
//! branch is the before-storage channel (D1–Daux coincidences) and the
//! transmitted branch may be stored and then reflected to D2 (after-storage,
//! D1–D2 coincidences).
//!
//! # Trials and seeds
//!
//! A run's pump pulses are cut into fixed-size trial blocks (see
//! [`block_pulses`]). Block `b` of a run with seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `b`. Sweeps give each
//! point its own run seed via [`derive_seed`] keyed by the polarizer angle
//! in millidegrees, so a point's data do not depend on which other points are
//! in the grid. Blocks run in parallel and are merged by adding counts.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{AddAssign, Range};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::components::{
    cqm_loop_transit, cqm_state, dark_counts, delay_state, delay_transit, detect,
    shih_alley_transit, source_state, tap_input, tap_output, validate_pc_schedule, Channel,
    CqmParams, DelayParams, DelayRole, Detector, DetectorParams, PulseTrain, SourceParams,
    TapRoute,
};
use crate::polcore::{joint_expectation, polarizer_projector, JonesOp, Photon, PolarizerSetting};
use crate::{Error, Result};

pub use crate::components::DetectionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Heralded,
    Periodic,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Heralded => "heralded",
            Mode::Periodic => "periodic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectorSet {
    pub d1: DetectorParams,
    pub d2: DetectorParams,
    pub aux: DetectorParams,
}

impl DetectorSet {
    pub fn get(&self, detector: Detector) -> &DetectorParams {
        match detector {
            Detector::D1 => &self.d1,
            Detector::D2 => &self.d2,
            Detector::Aux => &self.aux,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub n_cycles: u32,
    pub num_pulses: u64,
    pub seed: u64,
    pub theta1: PolarizerSetting,
    pub theta2: PolarizerSetting,
    /// Delay between a D1 click and the opening of the storage window.
    pub herald_latency_ns: f64,
    /// Periodic mode: a storage window opens every `divider_k` pump pulses.
    pub divider_k: u32,
    /// Photon 2 is stored iff it reaches the memory strictly less than this
    /// far from a window opening.
    pub acceptance_window_ns: f64,
    /// Offset-corrected detection times within this distance coincide.
    pub coincidence_window_ns: f64,
    /// Periodic mode: phase of the window clock relative to the pump pulses.
    pub trigger_delay_ns: f64,
    pub source: SourceParams,
    pub cqm: CqmParams,
    pub herald_delay: DelayParams,
    pub passive_delay: DelayParams,
    pub detectors: DetectorSet,
}

impl Default for RunConfig {
    fn default() -> Self {
        let source = SourceParams::default();
        RunConfig {
            mode: Mode::Heralded,
            n_cycles: 4,
            num_pulses: 1_000_000,
            seed: 1,
            theta1: PolarizerSetting::from_degrees(0.0),
            theta2: PolarizerSetting::from_degrees(0.0),
            herald_latency_ns: 320.0,
            divider_k: 64,
            acceptance_window_ns: source.pulse_period_ns / 2.0,
            coincidence_window_ns: 1.0,
            trigger_delay_ns: 0.0,
            source,
            cqm: CqmParams::default(),
            herald_delay: DelayParams::herald_compensation(),
            passive_delay: DelayParams::passive_memory(),
            detectors: DetectorSet::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.cqm.validate()?;
        self.herald_delay.validate(DelayRole::Herald)?;
        self.passive_delay.validate(DelayRole::Passive)?;
        self.detectors.d1.validate("d1_efficiency")?;
        self.detectors.d2.validate("d2_efficiency")?;
        self.detectors.aux.validate("aux_efficiency")?;
        if self.n_cycles == 0 {
            return Err(Error::param("n_cycles", "must be >= 1"));
        }
        if self.num_pulses == 0 {
            return Err(Error::param("num_pulses", "must be >= 1"));
        }
        if self.divider_k == 0 {
            return Err(Error::param("divider_k", "must be >= 1"));
        }
        if !(self.acceptance_window_ns > 0.0 && self.acceptance_window_ns.is_finite()) {
            return Err(Error::param("acceptance_window_ns", "must be > 0"));
        }
        if !(self.coincidence_window_ns > 0.0 && self.coincidence_window_ns.is_finite()) {
            return Err(Error::param("coincidence_window_ns", "must be > 0"));
        }
        if !(self.herald_latency_ns >= 0.0 && self.herald_latency_ns.is_finite()) {
            return Err(Error::param("herald_latency_ns", "must be >= 0"));
        }
        if !self.trigger_delay_ns.is_finite() {
            return Err(Error::param("trigger_delay_ns", "must be finite"));
        }
        Ok(())
    }

    pub fn trigger_period_ns(&self) -> f64 {
        self.divider_k as f64 * self.source.pulse_period_ns
    }

    /// Heralded triggers have no fixed period; only the switching-time
    /// condition applies there and the engine enforces the dead time itself.
    pub fn validate_schedule(&self) -> Result<()> {
        let period = match self.mode {
            Mode::Heralded => f64::INFINITY,
            Mode::Periodic => self.trigger_period_ns(),
        };
        validate_pc_schedule(self.n_cycles, &self.cqm, period)?;
        Ok(())
    }

    pub fn storage_ns(&self) -> f64 {
        self.n_cycles as f64 * self.cqm.cycle_time_ns
    }

    /// Time from one window opening until the next may open.
    pub fn pc_busy_ns(&self) -> f64 {
        self.storage_ns() + self.cqm.pc_rise_ns + self.cqm.pc_fall_ns
    }

    /// Fixed delays of each detector relative to the emission time of a
    /// pair, so that true pairs coincide at zero corrected delay.
    pub fn offsets(&self) -> ChannelOffsets {
        match self.mode {
            Mode::Heralded => ChannelOffsets {
                d1_ns: 0.0,
                aux_ns: self.herald_delay.delay_ns,
                d2_ns: self.herald_delay.delay_ns + self.storage_ns(),
            },
            Mode::Periodic => ChannelOffsets {
                d1_ns: self.passive_delay.delay_ns,
                aux_ns: 0.0,
                d2_ns: self.storage_ns(),
            },
        }
    }

    pub fn elapsed_ns(&self) -> f64 {
        self.num_pulses as f64 * self.source.pulse_period_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelOffsets {
    pub d1_ns: f64,
    pub d2_ns: f64,
    pub aux_ns: f64,
}

impl ChannelOffsets {
    pub fn of(&self, detector: Detector) -> f64 {
        match detector {
            Detector::D1 => self.d1_ns,
            Detector::D2 => self.d2_ns,
            Detector::Aux => self.aux_ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoincidenceCounts {
    pub d1_d2: u64,
    pub d1_aux: u64,
}

/// Counts offset-corrected coincidences between D1 and each of D2 and Daux.
///
/// Records are paired greedily in order of corrected time: each D1 record
/// takes the earliest unused partner within `window_ns`, and every record is
/// used at most once per detector pair.
pub fn coincidence_count(
    records: &[DetectionRecord],
    window_ns: f64,
    offsets: &ChannelOffsets,
) -> CoincidenceCounts {
    let corrected = |det: Detector| {
        let mut t: Vec<f64> = records
            .iter()
            .filter(|r| r.detector == det)
            .map(|r| r.time_ns - offsets.of(det))
            .collect();
        t.sort_by(f64::total_cmp);
        t
    };
    let d1 = corrected(Detector::D1);
    CoincidenceCounts {
        d1_d2: greedy_pairs(&d1, &corrected(Detector::D2), window_ns),
        d1_aux: greedy_pairs(&d1, &corrected(Detector::Aux), window_ns),
    }
}

fn greedy_pairs(a: &[f64], b: &[f64], window_ns: f64) -> u64 {
    let mut j = 0;
    let mut pairs = 0;
    for &t in a {
        while j < b.len() && b[j] < t - window_ns {
            j += 1;
        }
        if j < b.len() && (b[j] - t).abs() <= window_ns {
            pairs += 1;
            j += 1;
        }
    }
    pairs
}

/// Per-setting tallies of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub pairs_emitted: u64,
    pub photons_stored: u64,
    pub singles_1: u64,
    pub singles_2: u64,
    pub singles_aux: u64,
    pub coincidences_12: u64,
    pub coincidences_1aux: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.pairs_emitted += o.pairs_emitted;
        self.photons_stored += o.photons_stored;
        self.singles_1 += o.singles_1;
        self.singles_2 += o.singles_2;
        self.singles_aux += o.singles_aux;
        self.coincidences_12 += o.coincidences_12;
        self.coincidences_1aux += o.coincidences_1aux;
    }
}

impl Counts {
    pub fn coincidences(&self, channel: StorageChannel) -> u64 {
        match channel {
            StorageChannel::BeforeStorage => self.coincidences_1aux,
            StorageChannel::AfterStorage => self.coincidences_12,
        }
    }
}

/// Polarizer pair in millidegrees, used as a map key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SettingKey {
    pub theta1_mdeg: i64,
    pub theta2_mdeg: i64,
}

impl SettingKey {
    pub fn new(theta1: PolarizerSetting, theta2: PolarizerSetting) -> Self {
        SettingKey {
            theta1_mdeg: millidegrees(theta1) as i64,
            theta2_mdeg: millidegrees(theta2) as i64,
        }
    }
}

fn millidegrees(s: PolarizerSetting) -> u64 {
    (s.degrees() * 1000.0).round() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub counts: BTreeMap<SettingKey, Counts>,
    pub attempted_storages: u64,
    pub elapsed_ns: f64,
}

impl RunRecord {
    fn empty(config: RunConfig) -> Self {
        RunRecord {
            config,
            counts: BTreeMap::new(),
            attempted_storages: 0,
            elapsed_ns: 0.0,
        }
    }

    /// Adds another record's tallies. Addition of counts is commutative and
    /// associative, so any merge order gives the same result.
    pub fn merge(&mut self, other: &RunRecord) {
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_default() += *c;
        }
        self.attempted_storages += other.attempted_storages;
        self.elapsed_ns += other.elapsed_ns;
    }

    pub fn total(&self) -> Counts {
        let mut t = Counts::default();
        for c in self.counts.values() {
            t += *c;
        }
        t
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `master`. Stable across versions.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

const MIN_BLOCK_PULSES: f64 = (1u64 << 16) as f64;
const MAX_BLOCK_PULSES: f64 = (1u64 << 24) as f64;
const PAIRS_PER_BLOCK: f64 = (1u64 << 17) as f64;

/// Pump pulses per trial block: about 2¹⁷ expected pairs, clamped to
/// [2¹⁶, 2²⁴] pulses, and a multiple of `divider_k` in periodic mode so every
/// block starts on a window.
pub fn block_pulses(config: &RunConfig) -> u64 {
    let target = if config.source.pair_prob > 0.0 {
        (PAIRS_PER_BLOCK / config.source.pair_prob).ceil()
    } else {
        MAX_BLOCK_PULSES
    };
    let raw = target.clamp(MIN_BLOCK_PULSES, MAX_BLOCK_PULSES) as u64;
    let k = match config.mode {
        Mode::Heralded => 1,
        Mode::Periodic => config.divider_k as u64,
    };
    (raw / k * k).max(k)
}

fn block_range(config: &RunConfig, block: u64) -> Range<u64> {
    let size = block_pulses(config);
    let start = block * size;
    start..(start + size).min(config.num_pulses)
}

pub fn num_blocks(config: &RunConfig) -> u64 {
    config.num_pulses.div_ceil(block_pulses(config))
}

/// Polarizer outcome probabilities of photon 2 on one path, conditioned on
/// what happened to photon 1 at its polarizer.
#[derive(Debug, Clone, Copy)]
struct OutcomeTable {
    given_pass1: f64,
    given_block1: f64,
    marginal: f64,
}

impl OutcomeTable {
    fn new(state: &crate::polcore::TwoQubitState, p: &Projectors) -> Self {
        let j = |a: &JonesOp, b: &JonesOp| joint_expectation(state, a, b).max(0.0);
        let pp = j(&p.pass1, &p.pass2);
        let pb = j(&p.pass1, &p.block2);
        let bp = j(&p.block1, &p.pass2);
        let bb = j(&p.block1, &p.block2);
        let ratio = |num: f64, den: f64| if den > 0.0 { (num / den).min(1.0) } else { 0.0 };
        OutcomeTable {
            given_pass1: ratio(pp, pp + pb),
            given_block1: ratio(bp, bp + bb),
            marginal: (pp + bp).min(1.0),
        }
    }

    fn pass_prob(&self, photon1: Photon1) -> f64 {
        match photon1 {
            Photon1::Lost => self.marginal,
            Photon1::Passed => self.given_pass1,
            Photon1::Blocked => self.given_block1,
        }
    }
}

struct Projectors {
    pass1: JonesOp,
    block1: JonesOp,
    pass2: JonesOp,
    block2: JonesOp,
}

/// Everything about the polarization of a pair that does not depend on
/// chance: the state on each path and the resulting outcome probabilities.
struct PairModel {
    pass1: f64,
    aux: OutcomeTable,
    after: OutcomeTable,
}

impl PairModel {
    fn new(config: &RunConfig) -> Result<Self> {
        let mut rho = source_state(&config.source);
        match config.mode {
            Mode::Heralded => rho = delay_state(&rho, Photon::Two, &config.herald_delay),
            Mode::Periodic => rho = delay_state(&rho, Photon::One, &config.passive_delay),
        }
        let stored = cqm_state(&rho, Photon::Two, config.n_cycles, &config.cqm)?;
        let p = Projectors {
            pass1: polarizer_projector(config.theta1),
            block1: polarizer_projector(config.theta1.orthogonal()),
            pass2: polarizer_projector(config.theta2),
            block2: polarizer_projector(config.theta2.orthogonal()),
        };
        let pass1 = joint_expectation(&rho, &p.pass1, &JonesOp::identity()).clamp(0.0, 1.0);
        Ok(PairModel {
            pass1,
            aux: OutcomeTable::new(&rho, &p),
            after: OutcomeTable::new(&stored, &p),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Photon1 {
    Lost,
    Passed,
    Blocked,
}

/// Storage windows of one block.
enum Windows {
    Listed {
        starts: Vec<f64>,
        used: Vec<bool>,
    },
    Clocked {
        period_ns: f64,
        delay_ns: f64,
        first: u64,
        end: u64,
        used: Vec<bool>,
    },
}

impl Windows {
    fn heralded(config: &RunConfig, records: &[DetectionRecord]) -> Self {
        let mut clicks: Vec<f64> = records
            .iter()
            .filter(|r| r.detector == Detector::D1)
            .map(|r| r.time_ns)
            .collect();
        clicks.sort_by(f64::total_cmp);
        let busy = config.pc_busy_ns();
        let mut starts = Vec::with_capacity(clicks.len());
        let mut last = f64::NEG_INFINITY;
        for t in clicks {
            let s = t + config.herald_latency_ns;
            // the cell ignores triggers until the previous window has closed
            if s - last > busy {
                starts.push(s);
                last = s;
            }
        }
        let used = vec![false; starts.len()];
        Windows::Listed { starts, used }
    }

    fn periodic(config: &RunConfig, range: &Range<u64>) -> Self {
        let k = config.divider_k as u64;
        let first = range.start / k;
        let end = range.end.div_ceil(k);
        Windows::Clocked {
            period_ns: config.trigger_period_ns(),
            delay_ns: config.trigger_delay_ns,
            first,
            end,
            used: vec![false; (end - first) as usize],
        }
    }

    fn opened(&self) -> u64 {
        match self {
            Windows::Listed { starts, .. } => starts.len() as u64,
            Windows::Clocked { first, end, .. } => end - first,
        }
    }

    /// Claims the earliest unused window that opens within `tolerance_ns` of
    /// `arrival_ns`.
    fn claim(&mut self, arrival_ns: f64, tolerance_ns: f64) -> bool {
        match self {
            Windows::Listed { starts, used } => {
                let mut i = starts.partition_point(|&s| s <= arrival_ns - tolerance_ns);
                while i < starts.len() && starts[i] < arrival_ns + tolerance_ns {
                    if !used[i] {
                        used[i] = true;
                        return true;
                    }
                    i += 1;
                }
                false
            }
            Windows::Clocked {
                period_ns,
                delay_ns,
                first,
                end,
                used,
            } => {
                let nearest = ((arrival_ns - *delay_ns) / *period_ns).round();
                for j in [nearest - 1.0, nearest, nearest + 1.0] {
                    if j < *first as f64 || j >= *end as f64 {
                        continue;
                    }
                    let start = j * *period_ns + *delay_ns;
                    let slot = (j as u64 - *first) as usize;
                    if (arrival_ns - start).abs() < tolerance_ns && !used[slot] {
                        used[slot] = true;
                        return true;
                    }
                }
                false
            }
        }
    }
}

struct BlockOutput {
    counts: Counts,
    attempted_storages: u64,
    records: Vec<DetectionRecord>,
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn simulate_block(
    config: &RunConfig,
    model: &PairModel,
    train: &PulseTrain,
    block: u64,
) -> Result<BlockOutput> {
    let range = block_range(config, block);
    let mut rng = block_rng(config.seed, block);
    let dets = &config.detectors;
    let mut records = Vec::new();
    let mut candidates = Vec::new();
    let mut counts = Counts::default();

    let mut next = range.start;
    while let Some(pair) = train.next_pair(&mut next, range.end, &mut rng) {
        counts.pairs_emitted += 1;
        let Some(pair) = shih_alley_transit(pair, &config.source, &mut rng) else {
            continue;
        };

        let mut p1 = pair.first;
        if config.mode == Mode::Periodic {
            p1 = delay_transit(p1, &config.passive_delay, &mut rng);
        }
        let outcome1 = if !p1.is_alive() {
            Photon1::Lost
        } else if bernoulli(&mut rng, model.pass1) {
            Photon1::Passed
        } else {
            p1.kill();
            Photon1::Blocked
        };
        p1.channel = Channel::Detector1;
        records.extend(detect(&p1, Detector::D1, &dets.d1, &mut rng));

        let mut p2 = pair.second;
        if config.mode == Mode::Heralded {
            p2 = delay_transit(p2, &config.herald_delay, &mut rng);
        }
        if !p2.is_alive() {
            continue;
        }
        p2.channel = Channel::CqmInput;
        match tap_input(p2, &config.cqm, &mut rng) {
            TapRoute::ToAux(mut e) => {
                if !bernoulli(&mut rng, model.aux.pass_prob(outcome1)) {
                    e.kill();
                }
                records.extend(detect(&e, Detector::Aux, &dets.aux, &mut rng));
            }
            TapRoute::IntoLoop(e) => candidates.push((e, outcome1)),
        }
    }

    let offsets = config.offsets();
    let period = config.source.pulse_period_ns;
    for det in [Detector::D1, Detector::D2, Detector::Aux] {
        records.extend(dark_counts(
            det,
            dets.get(det),
            range.clone(),
            period,
            offsets.of(det),
            &mut rng,
        ));
    }

    let mut windows = match config.mode {
        Mode::Heralded => Windows::heralded(config, &records),
        Mode::Periodic => Windows::periodic(config, &range),
    };
    for (e, outcome1) in candidates {
        if !windows.claim(e.time_ns, config.acceptance_window_ns) {
            continue;
        }
        counts.photons_stored += 1;
        let Some(e) = cqm_loop_transit(e, config.n_cycles, &config.cqm, &mut rng) else {
            continue;
        };
        let Some(mut e) = tap_output(e, &config.cqm, &mut rng) else {
            continue;
        };
        if !bernoulli(&mut rng, model.after.pass_prob(outcome1)) {
            e.kill();
        }
        records.extend(detect(&e, Detector::D2, &dets.d2, &mut rng));
    }

    let coinc = coincidence_count(&records, config.coincidence_window_ns, &offsets);
    for r in &records {
        match r.detector {
            Detector::D1 => counts.singles_1 += 1,
            Detector::D2 => counts.singles_2 += 1,
            Detector::Aux => counts.singles_aux += 1,
        }
    }
    counts.coincidences_12 = coinc.d1_d2;
    counts.coincidences_1aux = coinc.d1_aux;

    Ok(BlockOutput {
        counts,
        attempted_storages: windows.opened(),
        records,
    })
}

fn check_mode(config: &RunConfig, expected: Mode) -> Result<()> {
    if config.mode != expected {
        return Err(Error::ModeMismatch {
            expected: expected.name(),
            actual: config.mode.name(),
        });
    }
    Ok(())
}

fn simulate(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    config.validate_schedule()?;
    let model = PairModel::new(config)?;
    let train = PulseTrain::new(&config.source)?;
    let blocks: Vec<BlockOutput> = (0..num_blocks(config))
        .into_par_iter()
        .map(|b| simulate_block(config, &model, &train, b))
        .collect::<Result<_>>()?;

    let mut counts = Counts::default();
    let mut attempted = 0;
    for b in blocks {
        counts += b.counts;
        attempted += b.attempted_storages;
    }
    let mut record = RunRecord::empty(*config);
    record
        .counts
        .insert(SettingKey::new(config.theta1, config.theta2), counts);
    record.attempted_storages = attempted;
    record.elapsed_ns = config.elapsed_ns();
    Ok(record)
}

/// Heralded calibration run: D1 clicks trigger storage of photon 2.
pub fn run_heralded(config: &RunConfig) -> Result<RunRecord> {
    check_mode(config, Mode::Heralded)?;
    simulate(config)
}

/// Periodic storage run: windows open on a divided pump clock.
pub fn run_periodic(config: &RunConfig) -> Result<RunRecord> {
    check_mode(config, Mode::Periodic)?;
    simulate(config)
}

pub fn run(config: &RunConfig) -> Result<RunRecord> {
    match config.mode {
        Mode::Heralded => run_heralded(config),
        Mode::Periodic => run_periodic(config),
    }
}

/// All detection records of one trial block, in generation order.
pub fn detection_records(config: &RunConfig, block: u64) -> Result<Vec<DetectionRecord>> {
    config.validate()?;
    config.validate_schedule()?;
    let model = PairModel::new(config)?;
    let train = PulseTrain::new(&config.source)?;
    Ok(simulate_block(config, &model, &train, block)?.records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StorageChannel {
    /// D1–Daux: photon 2 reflected by the tap before entering the memory.
    BeforeStorage,
    /// D1–D2: photon 2 released from the memory.
    AfterStorage,
}

impl StorageChannel {
    pub fn name(self) -> &'static str {
        match self {
            StorageChannel::BeforeStorage => "before_storage",
            StorageChannel::AfterStorage => "after_storage",
        }
    }
}

impl fmt::Display for StorageChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub theta1_deg: f64,
    pub coincidences: u64,
    pub exposure_pulses: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceCurve {
    pub theta2: PolarizerSetting,
    pub channel: StorageChannel,
    pub points: Vec<CurvePoint>,
}

/// Seed of the sweep point at `theta1`.
pub fn point_seed(master: u64, theta1: PolarizerSetting) -> u64 {
    derive_seed(master, millidegrees(theta1))
}

/// Runs the configured mode once per `theta1` and returns the
/// (before-storage, after-storage) curves, sorted by angle.
pub fn sweep_theta1(
    config: &RunConfig,
    theta1_list: &[f64],
) -> Result<(CoincidenceCurve, CoincidenceCurve)> {
    if theta1_list.is_empty() {
        return Err(Error::param(
            "theta1_list",
            "sweep needs at least one angle",
        ));
    }
    let mut angles: Vec<PolarizerSetting> = theta1_list
        .iter()
        .map(|&d| PolarizerSetting::from_degrees(d))
        .collect();
    angles.sort_by(|a, b| a.degrees().total_cmp(&b.degrees()));

    let runs: Vec<(PolarizerSetting, Counts)> = angles
        .par_iter()
        .map(|&theta1| {
            let cfg = RunConfig {
                theta1,
                seed: point_seed(config.seed, theta1),
                ..*config
            };
            run(&cfg).map(|r| (theta1, r.total()))
        })
        .collect::<Result<_>>()?;

    let curve = |channel| CoincidenceCurve {
        theta2: config.theta2,
        channel,
        points: runs
            .iter()
            .map(|(t, c)| CurvePoint {
                theta1_deg: t.degrees(),
                coincidences: c.coincidences(channel),
                exposure_pulses: config.num_pulses,
            })
            .collect(),
    };
    Ok((
        curve(StorageChannel::BeforeStorage),
        curve(StorageChannel::AfterStorage),
    ))
}

/// Coincidence counts for the four outcome pairs `(a, b)`, `(a, b⊥)`,
/// `(a⊥, b)`, `(a⊥, b⊥)` on one channel, as used by a CHSH correlation.
pub fn correlation_counts(
    config: &RunConfig,
    a: PolarizerSetting,
    b: PolarizerSetting,
    channel: StorageChannel,
) -> Result<[u64; 4]> {
    let settings = [
        (a, b),
        (a, b.orthogonal()),
        (a.orthogonal(), b),
        (a.orthogonal(), b.orthogonal()),
    ];
    let mut out = [0; 4];
    for (slot, (t1, t2)) in out.iter_mut().zip(settings) {
        let cfg = RunConfig {
            theta1: t1,
            theta2: t2,
            seed: derive_seed(point_seed(config.seed, t1), millidegrees(t2)),
            ..*config
        };
        *slot = run(&cfg)?.total().coincidences(channel);
    }
    Ok(out)
}
