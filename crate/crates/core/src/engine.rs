//! Virtual-time discrete-event simulation of one sample through sensing,
//! per-unit encoding, temporal aggregation and fusion.
//!
//! Unit `u` of a modality with sensing interval `L_S` becomes available at
//! `u * L_S`. In pipelined mode each modality has one encoder serving a FIFO
//! of available units; the window counts as complete once every unit is
//! encoded and the sensing window has elapsed. In blocking and non-blocking
//! modes a modality encodes its whole window in one block after it closes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{aggregate_with, AggregationError, AggregationSpec};
use crate::features::FeatureMatrix;
use crate::latency::unimodal_latency;
use crate::model::{
    AssignmentError, ConfigAssignment, ExecutionMode, LevelPair, MissingProfileEntry, ResourceLevel, Scenario,
};
use crate::sample::{Sample, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    UnitSensed,
    EncodeStart { resource: String, duration_us: u64 },
    EncodeEnd,
    CheckpointEval { fraction: f64, p: f64, committed: bool },
    SkipCommitted { checkpoint_unit: u32, units_skipped: u32, saved_encode_us: u64 },
    AggregationDone { rows: u32, duration_us: u64 },
    FusionStart { padded: Vec<usize> },
    PredictionEmitted { class: usize, label: usize },
    ConfigSwitch { assignment: String, probe_us: u64 },
    ResourceChange { level: String },
}

impl EventKind {
    /// Position in the tie-break order for simultaneous events.
    pub fn ordinal(&self) -> u8 {
        match self {
            EventKind::UnitSensed => 0,
            EventKind::EncodeStart { .. } => 1,
            EventKind::EncodeEnd => 2,
            EventKind::CheckpointEval { .. } => 3,
            EventKind::SkipCommitted { .. } => 4,
            EventKind::AggregationDone { .. } => 5,
            EventKind::FusionStart { .. } => 6,
            EventKind::PredictionEmitted { .. } => 7,
            EventKind::ConfigSwitch { .. } => 8,
            EventKind::ResourceChange { .. } => 9,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::UnitSensed => "unit_sensed",
            EventKind::EncodeStart { .. } => "encode_start",
            EventKind::EncodeEnd => "encode_end",
            EventKind::CheckpointEval { .. } => "checkpoint_eval",
            EventKind::SkipCommitted { .. } => "skip_committed",
            EventKind::AggregationDone { .. } => "aggregation_done",
            EventKind::FusionStart { .. } => "fusion_start",
            EventKind::PredictionEmitted { .. } => "prediction_emitted",
            EventKind::ConfigSwitch { .. } => "config_switch",
            EventKind::ResourceChange { .. } => "resource_change",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<u32>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    /// `(time, modality, unit, kind)` with absent ids ordered last.
    pub fn sort_key(&self) -> (u64, usize, u32, u8) {
        (self.time_us, self.modality.unwrap_or(usize::MAX), self.unit.unwrap_or(u32::MAX), self.kind.ordinal())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub modality: usize,
    pub checkpoint_unit: u32,
    pub fraction: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mode: ExecutionMode,
    pub assignment: String,
    pub reported_latency_us: u64,
    pub waiting_us: u64,
    pub peak_buffered_units: Vec<u32>,
    pub skipped_units: u32,
    pub prediction: usize,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<SkipRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub fingerprint: String,
    pub sample_id: u64,
    pub window_us: u64,
    pub events: Vec<Event>,
    pub summary: TraceSummary,
}

impl SimTrace {
    pub fn prediction_time(&self) -> Option<u64> {
        self.events.iter().find(|e| matches!(e.kind, EventKind::PredictionEmitted { .. })).map(|e| e.time_us)
    }

    pub fn events_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind.name() == name)
    }
}

/// What the gate sees at a checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct GateInput<'a> {
    pub sample: &'a Sample,
    pub slow_modality: usize,
    pub checkpoint_unit: u32,
    pub fraction: f64,
    /// Aggregates of every other modality, concatenated in id order.
    pub fast: &'a [f64],
    /// Aggregate of the slow modality's first `checkpoint_unit + 1` units.
    pub slow_prefix: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GateError {
    #[error("gate expects {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Probability that the prefix prediction already matches the full one.
pub trait SkipGate {
    fn probability(&self, input: &GateInput<'_>) -> Result<f64, GateError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    MissingProfileEntry(#[from] MissingProfileEntry),
    #[error("skip checkpoints are configured but no gate was supplied")]
    GateRequiredButMissing,
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

impl From<crate::latency::LatencyError> for EngineError {
    fn from(e: crate::latency::LatencyError) -> Self {
        match e {
            crate::latency::LatencyError::MissingProfileEntry(m) => EngineError::MissingProfileEntry(m),
            other => unreachable!("assignment was checked before the run: {other}"),
        }
    }
}

#[derive(Default, Clone, Copy)]
pub struct RunOptions<'a> {
    pub gate: Option<&'a dyn SkipGate>,
    /// Records a configuration switch at time zero; encoders stay busy for
    /// the probe cost plus the scenario's switch cost.
    pub config_switch: Option<u64>,
}

/// Resource level active at virtual time `t_us`.
pub fn apply_resource_schedule(scenario: &Scenario, t_us: u64) -> ResourceLevel {
    scenario.resource_at(t_us)
}

/// Unit indices `ceil(f * N) - 1` for each fraction, deduplicated and sorted,
/// paired with the first fraction that produced each index.
pub fn checkpoint_units(fractions: &[f64], units: u32) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = fractions
        .iter()
        .map(|&f| (((f * f64::from(units)).ceil() as u32).clamp(1, units) - 1, f))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out.dedup_by_key(|c| c.0);
    out
}

/// Modality with the largest projected unimodal latency at time zero, lowest id on ties.
pub fn slow_modality(scenario: &Scenario, assignment: &ConfigAssignment) -> Result<usize, EngineError> {
    let r = scenario.resource_at(0);
    let mut best = (0, 0);
    for m in 0..scenario.modality_count() {
        let l = unimodal_latency(m, assignment, scenario, r)?;
        if m == 0 || l > best.1 {
            best = (m, l);
        }
    }
    Ok(best.0)
}

pub fn run(
    scenario: &Scenario,
    assignment: &ConfigAssignment,
    sample: &Sample,
    gate: Option<&dyn SkipGate>,
) -> Result<SimTrace, EngineError> {
    run_with(scenario, assignment, sample, RunOptions { gate, config_switch: None })
}

pub fn run_with(
    scenario: &Scenario,
    assignment: &ConfigAssignment,
    sample: &Sample,
    options: RunOptions<'_>,
) -> Result<SimTrace, EngineError> {
    assignment.check(scenario)?;
    let skipping = scenario.execution_mode == ExecutionMode::Pipelined
        && scenario.modality_count() > 1
        && !scenario.skip_checkpoints.is_empty();
    if skipping && options.gate.is_none() {
        return Err(EngineError::GateRequiredButMissing);
    }
    let mut sim = Sim::new(scenario, assignment, sample, options, skipping)?;
    sim.run()?;
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Acquire(u32),
    EncoderReady,
    EncodeDone(u32),
    SkipCommit(u32),
    WindowClosed,
    AggDone,
    Fusion,
    Prediction,
}

impl Action {
    fn ordinal(self) -> u8 {
        match self {
            Action::Acquire(_) => 0,
            Action::EncoderReady => 1,
            Action::EncodeDone(_) => 2,
            Action::SkipCommit(_) => 4,
            Action::WindowClosed => 5,
            Action::AggDone => 6,
            Action::Fusion => 7,
            Action::Prediction => 8,
        }
    }
}

struct ModalityState {
    pair: LevelPair,
    units: u32,
    interval: u64,
    spec: AggregationSpec,
    features: FeatureMatrix,
    fifo: VecDeque<u32>,
    in_flight: Option<u32>,
    ready_at: u64,
    acquired: u32,
    closed: bool,
    aggregating: bool,
    agg_rows: u32,
    agg_duration: u64,
    aggregate: Option<Vec<f64>>,
    done_at: Option<u64>,
    skipped: bool,
    buffered: u32,
    peak: u32,
}

struct Checkpoints {
    slow: usize,
    list: Vec<(u32, f64)>,
    next: usize,
    committed: bool,
}

type Key = (u64, usize, u32, u8, u64);

struct Sim<'a> {
    scenario: &'a Scenario,
    assignment: &'a ConfigAssignment,
    sample: &'a Sample,
    world: World,
    gate: Option<&'a dyn SkipGate>,
    mods: Vec<ModalityState>,
    checkpoints: Option<Checkpoints>,
    queue: BinaryHeap<Reverse<(Key, usize)>>,
    actions: Vec<(Option<usize>, Action)>,
    events: Vec<Event>,
    fusion_scheduled: bool,
    prediction: Option<(u64, usize)>,
    skip: Option<SkipRecord>,
    skipped_units: u32,
}

impl<'a> Sim<'a> {
    fn new(
        scenario: &'a Scenario,
        assignment: &'a ConfigAssignment,
        sample: &'a Sample,
        options: RunOptions<'a>,
        skipping: bool,
    ) -> Result<Self, EngineError> {
        let ready_at = options.config_switch.map_or(0, |probe| probe + scenario.switch_cost_us);
        let mods = scenario
            .modalities
            .iter()
            .enumerate()
            .map(|(m, modality)| {
                let pair = assignment.pairs()[m];
                let sensing = scenario.sensing(m, pair);
                ModalityState {
                    pair,
                    units: sensing.units_per_window,
                    interval: sensing.interval_us(),
                    spec: AggregationSpec::from_settings(&scenario.aggregation, modality.channels, m),
                    features: FeatureMatrix::zeros(sensing.units_per_window as usize, modality.channels),
                    fifo: VecDeque::new(),
                    in_flight: None,
                    ready_at,
                    acquired: 0,
                    closed: false,
                    aggregating: false,
                    agg_rows: 0,
                    agg_duration: 0,
                    aggregate: None,
                    done_at: None,
                    skipped: false,
                    buffered: 0,
                    peak: 0,
                }
            })
            .collect::<Vec<_>>();
        let checkpoints = if skipping {
            let slow = slow_modality(scenario, assignment)?;
            Some(Checkpoints {
                slow,
                list: checkpoint_units(&scenario.skip_checkpoints, mods[slow].units),
                next: 0,
                committed: false,
            })
        } else {
            None
        };
        let mut sim = Sim {
            scenario,
            assignment,
            sample,
            world: World::for_scenario(scenario),
            gate: options.gate,
            mods,
            checkpoints,
            queue: BinaryHeap::new(),
            actions: Vec::new(),
            events: Vec::new(),
            fusion_scheduled: false,
            prediction: None,
            skip: None,
            skipped_units: 0,
        };
        if let Some(probe_us) = options.config_switch {
            sim.record(0, None, None, EventKind::ConfigSwitch { assignment: assignment.to_string(), probe_us });
        }
        for m in 0..sim.mods.len() {
            let (units, interval) = (sim.mods[m].units, sim.mods[m].interval);
            for u in 0..units {
                sim.schedule(u64::from(u) * interval, Some(m), Action::Acquire(u));
            }
            sim.schedule(u64::from(units) * interval, Some(m), Action::WindowClosed);
            if ready_at > 0 && scenario.execution_mode == ExecutionMode::Pipelined {
                sim.schedule(ready_at, Some(m), Action::EncoderReady);
            }
        }
        Ok(sim)
    }

    fn schedule(&mut self, time: u64, modality: Option<usize>, action: Action) {
        let unit = match action {
            Action::Acquire(u) | Action::EncodeDone(u) => u,
            _ => u32::MAX,
        };
        let seq = self.actions.len();
        let key = (time, modality.unwrap_or(usize::MAX), unit, action.ordinal(), seq as u64);
        self.actions.push((modality, action));
        self.queue.push(Reverse((key, seq)));
    }

    fn record(&mut self, time_us: u64, modality: Option<usize>, unit: Option<u32>, kind: EventKind) {
        self.events.push(Event { time_us, modality, unit, kind });
    }

    fn level_label(&self, r: ResourceLevel) -> String {
        self.scenario.profile.resource_levels.get(r.0).cloned().unwrap_or_default()
    }

    fn run(&mut self) -> Result<(), EngineError> {
        while let Some(Reverse(((now, ..), seq))) = self.queue.pop() {
            let (modality, action) = self.actions[seq];
            match (modality, action) {
                (Some(m), Action::Acquire(u)) => self.acquire(now, m, u)?,
                (Some(m), Action::EncoderReady) => self.try_start(now, m)?,
                (Some(m), Action::EncodeDone(u)) => self.encode_done(now, m, u)?,
                (Some(m), Action::SkipCommit(c)) => self.commit_skip(now, m, c)?,
                (Some(m), Action::WindowClosed) => self.window_closed(now, m)?,
                (Some(m), Action::AggDone) => self.aggregation_done(now, m)?,
                (None, Action::Fusion) => self.fusion(now),
                (None, Action::Prediction) => {
                    let (_, class) = self.prediction.expect("prediction scheduled with fusion");
                    self.record(now, None, None, EventKind::PredictionEmitted { class, label: self.sample.label });
                }
                other => unreachable!("malformed action {other:?}"),
            }
        }
        Ok(())
    }

    fn acquire(&mut self, now: u64, m: usize, u: u32) -> Result<(), EngineError> {
        if self.mods[m].skipped {
            return Ok(());
        }
        self.record(now, Some(m), Some(u), EventKind::UnitSensed);
        let st = &mut self.mods[m];
        st.acquired += 1;
        st.buffered += 1;
        st.peak = st.peak.max(st.buffered);
        st.fifo.push_back(u);
        if self.scenario.execution_mode == ExecutionMode::Pipelined {
            self.try_start(now, m)?;
        }
        Ok(())
    }

    fn try_start(&mut self, now: u64, m: usize) -> Result<(), EngineError> {
        let st = &self.mods[m];
        if st.skipped || st.in_flight.is_some() || now < st.ready_at {
            return Ok(());
        }
        let Some(&u) = st.fifo.front() else { return Ok(()) };
        let level = self.scenario.resource_at(now);
        let cost = self.scenario.profile.lookup(m, st.pair, level)?;
        let st = &mut self.mods[m];
        st.fifo.pop_front();
        st.in_flight = Some(u);
        let resource = self.level_label(level);
        self.record(now, Some(m), Some(u), EventKind::EncodeStart { resource, duration_us: cost.encode_us });
        self.schedule(now + cost.encode_us, Some(m), Action::EncodeDone(u));
        Ok(())
    }

    fn encode_done(&mut self, now: u64, m: usize, u: u32) -> Result<(), EngineError> {
        self.record(now, Some(m), Some(u), EventKind::EncodeEnd);
        let skipped = self.mods[m].skipped;
        let st = &mut self.mods[m];
        st.buffered -= 1;
        if st.in_flight == Some(u) {
            st.in_flight = None;
        }
        if skipped {
            return Ok(());
        }
        let row = self.sample.unit_features(&self.world, m, st.units, u);
        self.mods[m].features.push_row(&row);
        if self.scenario.execution_mode == ExecutionMode::Pipelined {
            self.try_start(now, m)?;
        }
        self.check_checkpoints(now)?;
        self.maybe_aggregate(now, m)
    }

    fn window_closed(&mut self, now: u64, m: usize) -> Result<(), EngineError> {
        if self.mods[m].skipped {
            return Ok(());
        }
        self.mods[m].closed = true;
        if self.scenario.execution_mode != ExecutionMode::Pipelined {
            // the whole window is encoded as one block at the level active when it starts
            let start = now.max(self.mods[m].ready_at);
            let level = self.scenario.resource_at(start);
            let cost = self.scenario.profile.lookup(m, self.mods[m].pair, level)?;
            let resource = self.level_label(level);
            let units: Vec<u32> = self.mods[m].fifo.drain(..).collect();
            for (i, u) in units.into_iter().enumerate() {
                let t = start + i as u64 * cost.encode_us;
                let kind = EventKind::EncodeStart { resource: resource.clone(), duration_us: cost.encode_us };
                self.record(t, Some(m), Some(u), kind);
                self.schedule(t + cost.encode_us, Some(m), Action::EncodeDone(u));
            }
        }
        self.maybe_aggregate(now, m)
    }

    fn maybe_aggregate(&mut self, now: u64, m: usize) -> Result<(), EngineError> {
        let st = &self.mods[m];
        if st.aggregating || st.skipped || !st.closed || st.features.valid_prefix() < st.units as usize {
            return Ok(());
        }
        let features = st.features.clone();
        self.start_aggregation(now, m, &features)
    }

    fn start_aggregation(&mut self, now: u64, m: usize, features: &FeatureMatrix) -> Result<(), EngineError> {
        let level = self.scenario.resource_at(now);
        let cost = self.scenario.profile.lookup(m, self.mods[m].pair, level)?;
        let aggregate = aggregate_with(features, &self.mods[m].spec)?;
        let st = &mut self.mods[m];
        st.aggregating = true;
        st.agg_rows = features.valid_prefix() as u32;
        st.agg_duration = cost.aggregate_us;
        st.aggregate = Some(aggregate);
        self.schedule(now + cost.aggregate_us, Some(m), Action::AggDone);
        Ok(())
    }

    fn aggregation_done(&mut self, now: u64, m: usize) -> Result<(), EngineError> {
        let (rows, duration_us) = (self.mods[m].agg_rows, self.mods[m].agg_duration);
        self.record(now, Some(m), None, EventKind::AggregationDone { rows, duration_us });
        self.mods[m].done_at = Some(now);
        let all_done = self.mods.iter().all(|s| s.done_at.is_some());
        let fire = match self.scenario.execution_mode {
            ExecutionMode::NonBlocking => true,
            _ => all_done,
        };
        if fire && !self.fusion_scheduled {
            self.fusion_scheduled = true;
            self.schedule(now, None, Action::Fusion);
        }
        self.check_checkpoints(now)
    }

    fn fusion(&mut self, now: u64) {
        let padded: Vec<usize> = (0..self.mods.len()).filter(|&m| self.mods[m].done_at.is_none()).collect();
        let inputs: Vec<Option<&[f64]>> = self
            .mods
            .iter()
            .map(|s| if s.done_at.is_some() { s.aggregate.as_deref() } else { None })
            .collect();
        let class = self.world.predict(&inputs);
        self.record(now, None, None, EventKind::FusionStart { padded });
        let at = now + self.scenario.profile.fusion_us;
        self.prediction = Some((at, class));
        self.schedule(at, None, Action::Prediction);
    }

    fn check_checkpoints(&mut self, now: u64) -> Result<(), EngineError> {
        let Some(cp) = &self.checkpoints else { return Ok(()) };
        let slow = cp.slow;
        if cp.committed || cp.next >= cp.list.len() || self.mods[slow].aggregating {
            return Ok(());
        }
        let fast_ready = self.mods.iter().enumerate().all(|(m, s)| m == slow || s.done_at.is_some());
        if !fast_ready {
            return Ok(());
        }
        let fast: Vec<f64> = self
            .mods
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != slow)
            .flat_map(|(_, s)| s.aggregate.clone().unwrap_or_default())
            .collect();
        let gate = self.gate.expect("checked before the run");
        loop {
            let cp = self.checkpoints.as_ref().expect("present");
            let Some(&(unit, fraction)) = cp.list.get(cp.next) else { break };
            if self.mods[slow].features.valid_prefix() <= unit as usize {
                break;
            }
            let prefix = self.mods[slow].features.truncated(unit as usize + 1);
            let slow_prefix = aggregate_with(&prefix, &self.mods[slow].spec)?;
            let input = GateInput {
                sample: self.sample,
                slow_modality: slow,
                checkpoint_unit: unit,
                fraction,
                fast: &fast,
                slow_prefix: &slow_prefix,
            };
            let p = gate.probability(&input)?;
            let committed = p > self.scenario.tau;
            self.record(now, Some(slow), Some(unit), EventKind::CheckpointEval { fraction, p, committed });
            let cp = self.checkpoints.as_mut().expect("present");
            cp.next += 1;
            if committed {
                cp.committed = true;
                self.skip = Some(SkipRecord { modality: slow, checkpoint_unit: unit, fraction, p });
                self.schedule(now + self.scenario.gate_eval_cost_us, Some(slow), Action::SkipCommit(unit));
                break;
            }
        }
        Ok(())
    }

    fn commit_skip(&mut self, now: u64, m: usize, checkpoint_unit: u32) -> Result<(), EngineError> {
        if self.mods[m].aggregating {
            log::debug!("skip on modality {m} at unit {checkpoint_unit} arrived after the window completed");
            self.skip = None;
            return Ok(());
        }
        let level = self.scenario.resource_at(now);
        let cost = self.scenario.profile.lookup(m, self.mods[m].pair, level)?;
        let st = &mut self.mods[m];
        let cancelled = (st.units - st.acquired) + st.fifo.len() as u32;
        st.buffered -= st.fifo.len() as u32;
        st.fifo.clear();
        st.skipped = true;
        let units_skipped = st.units - checkpoint_unit - 1;
        self.skipped_units = units_skipped;
        let saved_encode_us = u64::from(cancelled) * cost.encode_us;
        self.record(
            now,
            Some(m),
            None,
            EventKind::SkipCommitted { checkpoint_unit, units_skipped, saved_encode_us },
        );
        let prefix = self.mods[m].features.truncated(checkpoint_unit as usize + 1);
        self.start_aggregation(now, m, &prefix)
    }

    fn finish(mut self) -> SimTrace {
        let (end, class) = self.prediction.expect("every run emits a prediction");
        for entry in &self.scenario.resource_schedule {
            if entry.time_us <= end {
                self.events.push(Event {
                    time_us: entry.time_us,
                    modality: None,
                    unit: None,
                    kind: EventKind::ResourceChange { level: entry.level.clone() },
                });
            }
        }
        self.events.sort_by_key(Event::sort_key);
        let waiting_us = match self.scenario.execution_mode {
            ExecutionMode::NonBlocking => 0,
            _ => {
                let done: Vec<u64> = self.mods.iter().filter_map(|s| s.done_at).collect();
                done.iter().max().unwrap_or(&0) - done.iter().min().unwrap_or(&0)
            }
        };
        SimTrace {
            fingerprint: self.scenario.fingerprint(),
            sample_id: self.sample.id,
            window_us: self.scenario.window_us,
            events: self.events,
            summary: TraceSummary {
                mode: self.scenario.execution_mode,
                assignment: self.assignment.to_string(),
                reported_latency_us: end.saturating_sub(self.scenario.window_us),
                waiting_us,
                peak_buffered_units: self.mods.iter().map(|s| s.peak).collect(),
                skipped_units: self.skipped_units,
                prediction: class,
                label: self.sample.label,
                skip: self.skip,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::end_to_end_latency;
    use crate::model::{two_modality_scenario, ProfileKey, ScheduleEntry, UnitCost};
    use crate::sample::Difficulty;

    fn sample() -> Sample {
        Sample::generate(4, 0, 1, Difficulty::Easy, false)
    }

    struct Constant(f64);

    impl SkipGate for Constant {
        fn probability(&self, _: &GateInput<'_>) -> Result<f64, GateError> {
            Ok(self.0)
        }
    }

    #[test]
    fn checkpoint_rounding() {
        assert_eq!(checkpoint_units(&[0.5, 0.7], 30), vec![(14, 0.5), (20, 0.7)]);
        assert_eq!(checkpoint_units(&[0.5, 0.7], 2), vec![(0, 0.5), (1, 0.7)]);
        assert_eq!(checkpoint_units(&[0.5, 0.7], 1), vec![(0, 0.5)]);
    }

    #[test]
    fn pipelined_matches_closed_form() {
        let s = two_modality_scenario(25).without_skipping();
        for a in ConfigAssignment::enumerate(&s) {
            let t = run(&s, &a, &sample(), None).unwrap();
            let e = end_to_end_latency(&a, &s, ResourceLevel(0)).unwrap();
            assert_eq!(t.summary.reported_latency_us, e.total_us - s.window_us, "{a}");
            assert_eq!(t.summary.waiting_us, e.waiting_us);
        }
    }

    #[test]
    fn blocking_buffers_whole_window() {
        let s = two_modality_scenario(25).without_skipping().with_mode(ExecutionMode::Blocking);
        let a = ConfigAssignment::minimal(2);
        let t = run(&s, &a, &sample(), None).unwrap();
        let units: Vec<u32> = (0..2).map(|m| s.sensing(m, a.pairs()[m]).units_per_window).collect();
        assert_eq!(t.summary.peak_buffered_units, units);
        let p = run(&s.with_mode(ExecutionMode::Pipelined), &a, &sample(), None).unwrap();
        assert!(p.summary.peak_buffered_units.iter().zip(&units).all(|(a, b)| a <= b));
        assert!(p.summary.reported_latency_us < t.summary.reported_latency_us);
    }

    #[test]
    fn events_are_sorted_and_paired() {
        let s = two_modality_scenario(25).without_skipping();
        let t = run(&s, &ConfigAssignment::minimal(2), &sample(), None).unwrap();
        assert!(t.events.windows(2).all(|w| w[0].sort_key() <= w[1].sort_key()));
        assert_eq!(t.events_of("encode_start").count(), t.events_of("encode_end").count());
        assert_eq!(t.events_of("prediction_emitted").count(), 1);
    }

    #[test]
    fn job_keeps_level_it_started_under() {
        let mut s = two_modality_scenario(1).without_skipping();
        s.resource_schedule =
            vec![ScheduleEntry { time_us: 0, level: "lowCPU".into() }, ScheduleEntry { time_us: 500_000, level: "highCPU".into() }];
        assert_eq!(apply_resource_schedule(&s, 499_999), ResourceLevel(1));
        assert_eq!(apply_resource_schedule(&s, 500_000), ResourceLevel(0));
        s.profile.insert(
            ProfileKey { modality: 0, sensing: 0, model: 0, resource: ResourceLevel(1) },
            UnitCost { encode_us: 30_000, aggregate_us: 0 },
        );
        let mut s = s.with_mode(ExecutionMode::Pipelined);
        // delay the only unit's encode to 499 000 through the config switch probe
        s.switch_cost_us = 0;
        let t = run_with(&s, &ConfigAssignment::minimal(2), &sample(), RunOptions { gate: None, config_switch: Some(499_000) })
            .unwrap();
        let start = t.events_of("encode_start").find(|e| e.modality == Some(0)).unwrap();
        let end = t.events_of("encode_end").find(|e| e.modality == Some(0)).unwrap();
        assert_eq!((start.time_us, end.time_us), (499_000, 529_000));
    }

    #[test]
    fn gate_is_required_when_checkpoints_exist() {
        let mut s = two_modality_scenario(25);
        s.skip_checkpoints = vec![0.5];
        let err = run(&s, &ConfigAssignment::minimal(2), &sample(), None).unwrap_err();
        assert_eq!(err, EngineError::GateRequiredButMissing);
    }

    #[test]
    fn inert_gate_only_adds_checkpoint_events() {
        let mut s = two_modality_scenario(25);
        s.skip_checkpoints = vec![0.5, 0.7];
        let a = ConfigAssignment::minimal(2);
        let gated = run(&s, &a, &sample(), Some(&Constant(0.5))).unwrap();
        let plain = run(&s.without_skipping(), &a, &sample(), None).unwrap();
        let strip = |t: &SimTrace| -> Vec<Event> {
            t.events.iter().filter(|e| e.kind.name() != "checkpoint_eval").cloned().collect()
        };
        assert_eq!(strip(&gated), strip(&plain));
        assert_eq!(gated.summary.reported_latency_us, plain.summary.reported_latency_us);
    }

    #[test]
    fn determinism() {
        let s = two_modality_scenario(25).without_skipping();
        let a = ConfigAssignment::minimal(2);
        assert_eq!(run(&s, &a, &sample(), None).unwrap(), run(&s, &a, &sample(), None).unwrap());
    }
}
