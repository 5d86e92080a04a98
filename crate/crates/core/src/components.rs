//! Optical device models.
//!
//! Every device is a stateless transformer of [`PhotonEvent`]s driven by a
//! caller-owned RNG. Polarization effects are split from the classical part
//! (timing and survival) so the engine can sample photons cheaply while the
//! polarization transforms are still defined in exactly one place.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::polcore::{
    apply_one_photon, flip_op, phase_op, psi_minus, JonesOp, Photon, TwoQubitState,
};
use crate::{Error, Result};

/// Spatial path a photon currently occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    SourceToSa,
    SaOut1,
    SaOut2,
    Delay,
    CqmInput,
    CqmLoop,
    CqmOutput,
    Aux,
    Detector1,
    Detector2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonEvent {
    pub pair_id: u64,
    pub photon: Photon,
    pub time_ns: f64,
    pub channel: Channel,
    alive: bool,
}

impl PhotonEvent {
    pub fn new(pair_id: u64, photon: Photon, time_ns: f64, channel: Channel) -> Self {
        PhotonEvent {
            pair_id,
            photon,
            time_ns,
            channel,
            alive: true,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// Marks the photon as lost. There is no way back.
    pub fn kill(&mut self) {
        self.alive = false;
    }

    fn advance(&mut self, dt_ns: f64, channel: Channel) {
        debug_assert!(dt_ns >= 0.0, "time must not run backwards");
        self.time_ns += dt_ns;
        self.channel = channel;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPair {
    pub first: PhotonEvent,
    pub second: PhotonEvent,
}

fn check_prob(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must lie in [0, 1], got {value}"),
        ))
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be > 0, got {value}")))
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be >= 0, got {value}")))
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {value}")))
    }
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Pulsed pair source followed by the Shih–Alley combiner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Spacing of pump pulses (100 MHz train).
    pub pulse_period_ns: f64,
    /// Probability that a pump pulse yields a pair.
    pub pair_prob: f64,
    /// Probability that the two photons leave the combiner by different ports.
    pub sa_success_prob: f64,
    /// Residual phase φ of the post-selected state.
    pub psi_phase_rad: f64,
    /// Weight of white noise mixed into the emitted state. A fraction `w`
    /// caps both fringe visibilities at `1 − w`.
    pub white_noise: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            pulse_period_ns: 10.0,
            pair_prob: 1e-4,
            sa_success_prob: 0.5,
            psi_phase_rad: 0.0,
            white_noise: 0.0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("pulse_period_ns", self.pulse_period_ns)?;
        check_prob("pair_prob", self.pair_prob)?;
        check_prob("sa_success_prob", self.sa_success_prob)?;
        check_finite("psi_phase_rad", self.psi_phase_rad)?;
        check_prob("white_noise", self.white_noise)
    }
}

/// How many H ↔ V flips a photon picks up during `n` storage cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipConvention {
    /// One flip when switched in plus one per cycle: `n + 1` flips.
    /// Gives the 90° fringe shift for even `n` together with the even-`n`
    /// phase cancellation.
    #[default]
    InjectionPlusPerCycle,
    /// One flip per cycle only: `n` flips.
    PerCycleOnly,
}

impl FlipConvention {
    pub fn flip_parity(self, n: u32) -> u32 {
        match self {
            FlipConvention::InjectionPlusPerCycle => n + 1,
            FlipConvention::PerCycleOnly => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FlipConvention::InjectionPlusPerCycle => "injection-plus-per-cycle",
            FlipConvention::PerCycleOnly => "per-cycle-only",
        }
    }
}

/// Loop memory parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqmParams {
    pub cycle_time_ns: f64,
    /// Per-cycle transmission; bundles all intra-loop optical loss.
    pub eta_cycle: f64,
    /// Per-pass probability that the Pockels cell flips correctly. Failed
    /// flips are ejected from the loop and only count as loss.
    pub flip_fidelity: f64,
    /// Birefringent phase picked up by the H component per cycle.
    pub delta_per_cycle_rad: f64,
    pub pc_rise_ns: f64,
    pub pc_fall_ns: f64,
    /// Reflectivity of the tap beamsplitter in the memory input channel.
    pub tap_reflectivity: f64,
    pub flip_convention: FlipConvention,
}

impl Default for CqmParams {
    fn default() -> Self {
        CqmParams {
            cycle_time_ns: 27.0,
            eta_cycle: 0.78,
            flip_fidelity: 1.0,
            delta_per_cycle_rad: 0.0,
            pc_rise_ns: 15.0,
            pc_fall_ns: 15.0,
            tap_reflectivity: 0.5,
            flip_convention: FlipConvention::default(),
        }
    }
}

impl CqmParams {
    pub fn tap_transmissivity(&self) -> f64 {
        1.0 - self.tap_reflectivity
    }

    pub fn cycle_survival(&self) -> f64 {
        self.eta_cycle * self.flip_fidelity
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("cycle_time_ns", self.cycle_time_ns)?;
        check_prob("eta_cycle", self.eta_cycle)?;
        check_prob("flip_fidelity", self.flip_fidelity)?;
        check_finite("delta_per_cycle_rad", self.delta_per_cycle_rad)?;
        check_non_negative("pc_rise_ns", self.pc_rise_ns)?;
        check_non_negative("pc_fall_ns", self.pc_fall_ns)?;
        check_prob("tap_reflectivity", self.tap_reflectivity)?;
        if self.pc_rise_ns + self.pc_fall_ns >= 2.0 * self.cycle_time_ns {
            return Err(Error::param(
                "pc_rise_ns",
                format!(
                    "pc_rise_ns + pc_fall_ns = {} must be < 2·cycle_time_ns = {}",
                    self.pc_rise_ns + self.pc_fall_ns,
                    2.0 * self.cycle_time_ns
                ),
            ));
        }
        Ok(())
    }
}

/// A fiber spool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParams {
    pub delay_ns: f64,
    pub transmission: f64,
    pub birefringent_phase_rad: f64,
}

impl DelayParams {
    /// Spool that compensates detection and switching latency in the
    /// heralded mode.
    pub fn herald_compensation() -> Self {
        DelayParams {
            delay_ns: 320.0,
            transmission: 1.0,
            birefringent_phase_rad: 0.0,
        }
    }

    /// Spool acting as the passive memory for photon 1 in the periodic mode.
    pub fn passive_memory() -> Self {
        DelayParams {
            delay_ns: 165.0,
            transmission: 1.0,
            birefringent_phase_rad: 0.0,
        }
    }

    pub fn validate(&self, prefix: DelayRole) -> Result<()> {
        let (d, t, p) = prefix.keys();
        check_non_negative(d, self.delay_ns)?;
        check_prob(t, self.transmission)?;
        check_finite(p, self.birefringent_phase_rad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayRole {
    Herald,
    Passive,
}

impl DelayRole {
    fn keys(self) -> (&'static str, &'static str, &'static str) {
        match self {
            DelayRole::Herald => ("herald_delay_ns", "herald_transmission", "herald_phase_rad"),
            DelayRole::Passive => (
                "passive_delay_ns",
                "passive_transmission",
                "passive_phase_rad",
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Dark count probability per pulse slot.
    pub dark_count_prob: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self, name: &'static str) -> Result<()> {
        check_prob(name, self.efficiency)?;
        check_prob("dark_count_prob", self.dark_count_prob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    D1,
    D2,
    Aux,
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
            Detector::Aux => "Daux",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub detector: Detector,
    pub time_ns: f64,
    /// `None` for dark counts.
    pub pair_id: Option<u64>,
}

/// One pump pulse. The pair id is the pulse index, which is unique because a
/// pulse yields at most one pair.
pub fn spdc_emit<R: Rng + ?Sized>(
    pulse_index: u64,
    params: &SourceParams,
    rng: &mut R,
) -> Option<PhotonPair> {
    bernoulli(rng, params.pair_prob).then(|| emit_pair(pulse_index, params))
}

fn emit_pair(pulse_index: u64, params: &SourceParams) -> PhotonPair {
    let t = pulse_index as f64 * params.pulse_period_ns;
    PhotonPair {
        first: PhotonEvent::new(pulse_index, Photon::One, t, Channel::SourceToSa),
        second: PhotonEvent::new(pulse_index, Photon::Two, t, Channel::SourceToSa),
    }
}

/// Jumps from one emitting pulse to the next.
///
/// Sampling the gap between successes from a geometric distribution draws
/// exactly the same process as one Bernoulli trial per pulse, at a cost
/// proportional to the number of pairs rather than the number of pulses.
#[derive(Debug, Clone)]
pub struct PulseTrain {
    params: SourceParams,
    gap: Option<Geometric>,
}

impl PulseTrain {
    pub fn new(params: &SourceParams) -> Result<Self> {
        params.validate()?;
        let gap = if params.pair_prob > 0.0 {
            Some(
                Geometric::new(params.pair_prob)
                    .map_err(|e| Error::param("pair_prob", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(PulseTrain {
            params: *params,
            gap,
        })
    }

    /// The first pair emitted at a pulse index in `*from..end`, advancing
    /// `from` past it.
    pub fn next_pair<R: Rng + ?Sized>(
        &self,
        from: &mut u64,
        end: u64,
        rng: &mut R,
    ) -> Option<PhotonPair> {
        let gap = self.gap.as_ref()?;
        if *from >= end {
            return None;
        }
        let pulse = from.saturating_add(gap.sample(rng));
        if pulse >= end {
            *from = end;
            return None;
        }
        *from = pulse + 1;
        Some(emit_pair(pulse, &self.params))
    }
}

/// The post-selected source state: `ψ⁻(φ)` mixed with white noise.
pub fn source_state(params: &SourceParams) -> TwoQubitState {
    psi_minus(params.psi_phase_rad).mix(&TwoQubitState::maximally_mixed(), params.white_noise)
}

/// Classical part of the Shih–Alley combiner: both photons leave by
/// different ports with probability `sa_success_prob`, otherwise the pair is
/// discarded by post-selection.
pub fn shih_alley_transit<R: Rng + ?Sized>(
    pair: PhotonPair,
    params: &SourceParams,
    rng: &mut R,
) -> Option<PhotonPair> {
    assert_eq!(
        pair.first.pair_id, pair.second.pair_id,
        "Shih–Alley combiner fed photons from different pairs"
    );
    debug_assert!(pair.first.is_alive() && pair.second.is_alive());
    if !bernoulli(rng, params.sa_success_prob) {
        return None;
    }
    let mut out = pair;
    out.first.channel = Channel::SaOut1;
    out.second.channel = Channel::SaOut2;
    Some(out)
}

pub fn shih_alley_combine<R: Rng + ?Sized>(
    pair: PhotonPair,
    params: &SourceParams,
    rng: &mut R,
) -> Option<(PhotonPair, TwoQubitState)> {
    shih_alley_transit(pair, params, rng).map(|p| (p, source_state(params)))
}

pub fn delay_transit<R: Rng + ?Sized>(
    mut event: PhotonEvent,
    params: &DelayParams,
    rng: &mut R,
) -> PhotonEvent {
    event.advance(params.delay_ns, Channel::Delay);
    if event.is_alive() && !bernoulli(rng, params.transmission) {
        event.kill();
    }
    event
}

pub fn delay_state(state: &TwoQubitState, photon: Photon, params: &DelayParams) -> TwoQubitState {
    if params.birefringent_phase_rad == 0.0 {
        return *state;
    }
    apply_one_photon(state, photon, &phase_op(params.birefringent_phase_rad))
}

pub fn delay_line<R: Rng + ?Sized>(
    event: PhotonEvent,
    state: &TwoQubitState,
    params: &DelayParams,
    rng: &mut R,
) -> (PhotonEvent, TwoQubitState) {
    let photon = event.photon;
    (
        delay_transit(event, params, rng),
        delay_state(state, photon, params),
    )
}

/// Net polarization transform and survival probability of `n` storage
/// cycles.
///
/// Each cycle applies the birefringent phase and then a flip, so a cycle is
/// `X·diag(e^{iδ}, 1)`. Two cycles give `e^{iδ}·I`, which is why the phase
/// drops out for even `n`. Extra flips beyond one per cycle come from the
/// configured [`FlipConvention`].
pub fn cqm_net_transform(n: u32, params: &CqmParams) -> Result<(JonesOp, f64)> {
    if n == 0 {
        return Err(Error::param("n_cycles", "storage needs at least one cycle"));
    }
    let cycle = flip_op() * phase_op(params.delta_per_cycle_rad);
    let mut net = JonesOp::identity();
    for _ in 0..n {
        net = cycle * net;
    }
    for _ in n..params.flip_convention.flip_parity(n) {
        net = flip_op() * net;
    }
    Ok((net, params.cycle_survival().powi(n as i32)))
}

pub enum TapRoute {
    IntoLoop(PhotonEvent),
    ToAux(PhotonEvent),
}

/// Input pass through the tap: reflection goes to the auxiliary detector,
/// transmission enters the loop.
pub fn tap_input<R: Rng + ?Sized>(
    mut event: PhotonEvent,
    params: &CqmParams,
    rng: &mut R,
) -> TapRoute {
    if bernoulli(rng, params.tap_reflectivity) {
        event.channel = Channel::Aux;
        TapRoute::ToAux(event)
    } else {
        event.channel = Channel::CqmLoop;
        TapRoute::IntoLoop(event)
    }
}

/// `n` cycles in the loop. Returns the released photon at entry + `n·Δτ`, or
/// `None` if it was lost or ejected by a bad flip.
pub fn cqm_loop_transit<R: Rng + ?Sized>(
    mut event: PhotonEvent,
    n: u32,
    params: &CqmParams,
    rng: &mut R,
) -> Option<PhotonEvent> {
    let survival = params.cycle_survival().powi(n as i32);
    if !event.is_alive() || !bernoulli(rng, survival) {
        return None;
    }
    event.advance(n as f64 * params.cycle_time_ns, Channel::CqmOutput);
    Some(event)
}

/// Output pass through the tap: reflection heads to D2, transmission goes
/// back towards the source and is lost.
pub fn tap_output<R: Rng + ?Sized>(
    mut event: PhotonEvent,
    params: &CqmParams,
    rng: &mut R,
) -> Option<PhotonEvent> {
    if !bernoulli(rng, params.tap_reflectivity) {
        return None;
    }
    event.channel = Channel::Detector2;
    Some(event)
}

pub fn cqm_state(
    state: &TwoQubitState,
    photon: Photon,
    n: u32,
    params: &CqmParams,
) -> Result<TwoQubitState> {
    let (net, _) = cqm_net_transform(n, params)?;
    Ok(apply_one_photon(state, photon, &net))
}

/// Full storage of one photon: tap in, `n` cycles, tap out towards D2.
/// `Ok(None)` means the photon did not make it (reflected to the auxiliary
/// port on the way in, lost in the loop, or transmitted on the way out).
pub fn cqm_store<R: Rng + ?Sized>(
    event: PhotonEvent,
    state: &TwoQubitState,
    n: u32,
    params: &CqmParams,
    rng: &mut R,
) -> Result<Option<(PhotonEvent, TwoQubitState)>> {
    let transformed = cqm_state(state, event.photon, n, params)?;
    if !event.is_alive() {
        return Ok(None);
    }
    let inside = match tap_input(event, params, rng) {
        TapRoute::IntoLoop(e) => e,
        TapRoute::ToAux(_) => return Ok(None),
    };
    Ok(cqm_loop_transit(inside, n, params, rng)
        .and_then(|e| tap_output(e, params, rng))
        .map(|e| (e, transformed)))
}

pub fn detect<R: Rng + ?Sized>(
    event: &PhotonEvent,
    detector: Detector,
    params: &DetectorParams,
    rng: &mut R,
) -> Option<DetectionRecord> {
    (event.is_alive() && bernoulli(rng, params.efficiency)).then_some(DetectionRecord {
        detector,
        time_ns: event.time_ns,
        pair_id: Some(event.pair_id),
    })
}

/// Dark counts over the pulse slots in `slots`. A dark count lands uniformly
/// within ±half a period of the slot's nominal arrival time `slot·period +
/// offset_ns`, so it can fake a coincidence.
pub fn dark_counts<R: Rng + ?Sized>(
    detector: Detector,
    params: &DetectorParams,
    slots: Range<u64>,
    pulse_period_ns: f64,
    offset_ns: f64,
    rng: &mut R,
) -> Vec<DetectionRecord> {
    let mut out = Vec::new();
    if params.dark_count_prob <= 0.0 {
        return out;
    }
    let gap = Geometric::new(params.dark_count_prob).expect("validated probability");
    let mut slot = slots.start;
    loop {
        slot = slot.saturating_add(gap.sample(rng));
        if slot >= slots.end {
            break;
        }
        let jitter = (rng.random::<f64>() - 0.5) * pulse_period_ns;
        let t = slot as f64 * pulse_period_ns + offset_ns + jitter;
        out.push(DetectionRecord {
            detector,
            time_ns: t.max(0.0),
            pair_id: None,
        });
        slot += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleViolation {
    #[error(
        "Pockels cell rise time {rise_ns} ns is not shorter than the {cycle_ns} ns cycle time"
    )]
    RiseTooSlow { rise_ns: f64, cycle_ns: f64 },

    #[error(
        "Pockels cell fall time {fall_ns} ns is not shorter than the {cycle_ns} ns cycle time"
    )]
    FallTooSlow { fall_ns: f64, cycle_ns: f64 },

    #[error(
        "on/off overlap: trigger period {trigger_period_ns} ns must exceed \
         n·Δτ + rise + fall = {n}·{cycle_ns} + {rise_ns} + {fall_ns} = {required_ns} ns"
    )]
    Overlap {
        n: u32,
        cycle_ns: f64,
        rise_ns: f64,
        fall_ns: f64,
        required_ns: f64,
        trigger_period_ns: f64,
    },

    #[error("storage needs n >= 1 and a positive trigger period")]
    Degenerate,
}

/// Checks that the Pockels cell can switch within a cycle and that the next
/// storage window cannot open before the current one has closed.
pub fn validate_pc_schedule(
    n: u32,
    params: &CqmParams,
    trigger_period_ns: f64,
) -> std::result::Result<(), ScheduleViolation> {
    if n == 0 || trigger_period_ns.is_nan() || trigger_period_ns <= 0.0 {
        return Err(ScheduleViolation::Degenerate);
    }
    let cycle_ns = params.cycle_time_ns;
    if params.pc_rise_ns >= cycle_ns {
        return Err(ScheduleViolation::RiseTooSlow {
            rise_ns: params.pc_rise_ns,
            cycle_ns,
        });
    }
    if params.pc_fall_ns >= cycle_ns {
        return Err(ScheduleViolation::FallTooSlow {
            fall_ns: params.pc_fall_ns,
            cycle_ns,
        });
    }
    let required_ns = n as f64 * cycle_ns + params.pc_rise_ns + params.pc_fall_ns;
    if trigger_period_ns <= required_ns {
        return Err(ScheduleViolation::Overlap {
            n,
            cycle_ns,
            rise_ns: params.pc_rise_ns,
            fall_ns: params.pc_fall_ns,
            required_ns,
            trigger_period_ns,
        });
    }
    Ok(())
}
