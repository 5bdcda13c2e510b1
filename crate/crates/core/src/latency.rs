//! Closed-form latency of a configuration assignment.
//!
//! A modality cut into `N` units with sensing interval `L_S`, per-unit
//! encode latency `L_E` and aggregation latency `L_A` finishes after
//! `max(L_E, L_S) * N + L_A`. The multimodal sample finishes once the
//! slowest modality is done and fusion (`L_F`) has run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConfigAssignment, LatencyProfile, MissingProfileEntry, ResourceLevel, Scenario, SensingConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatencyError {
    #[error(transparent)]
    MissingProfileEntry(#[from] MissingProfileEntry),
    #[error("assignment does not cover modality {0}")]
    Uncovered(usize),
    #[error("trace has no {0} event")]
    IncompleteTrace(&'static str),
}

/// `max(L_E, L_S) * N + L_A` for one modality.
pub fn unimodal_latency(
    modality: usize,
    assignment: &ConfigAssignment,
    scenario: &Scenario,
    resource: ResourceLevel,
) -> Result<u64, LatencyError> {
    let pair = assignment.get(modality).ok_or(LatencyError::Uncovered(modality))?;
    let sensing = scenario.sensing(modality, pair);
    unit_pipeline_latency(sensing, &scenario.profile, modality, pair, resource)
}

fn unit_pipeline_latency(
    sensing: &SensingConfig,
    profile: &LatencyProfile,
    modality: usize,
    pair: crate::model::LevelPair,
    resource: ResourceLevel,
) -> Result<u64, LatencyError> {
    let cost = profile.lookup(modality, pair, resource)?;
    Ok(sensing_bound_latency(cost.encode_us, sensing.interval_us(), sensing.units_per_window, cost.aggregate_us))
}

/// The formula itself, on raw numbers.
pub const fn sensing_bound_latency(encode_us: u64, interval_us: u64, units: u32, aggregate_us: u64) -> u64 {
    let per_unit = if encode_us > interval_us { encode_us } else { interval_us };
    per_unit * units as u64 + aggregate_us
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndToEnd {
    /// `max_i L_i + L_F`.
    pub total_us: u64,
    pub per_modality_us: Vec<u64>,
    /// Idle gap of the fastest modality at the fusion barrier: `max_i L_i - min_i L_i`.
    pub waiting_us: u64,
}

impl EndToEnd {
    /// Latency as reported to users: the sensing window is excluded.
    pub fn reported_us(&self, window_us: u64) -> u64 {
        self.total_us.saturating_sub(window_us)
    }
}

pub fn end_to_end_latency(
    assignment: &ConfigAssignment,
    scenario: &Scenario,
    resource: ResourceLevel,
) -> Result<EndToEnd, LatencyError> {
    let per_modality_us = (0..scenario.modality_count())
        .map(|m| unimodal_latency(m, assignment, scenario, resource))
        .collect::<Result<Vec<_>, _>>()?;
    let max = per_modality_us.iter().copied().max().unwrap_or(0);
    let min = per_modality_us.iter().copied().min().unwrap_or(0);
    Ok(EndToEnd { total_us: max + scenario.profile.fusion_us, per_modality_us, waiting_us: max - min })
}

/// Per-modality latency of every `(sensing, model)` pair at one resource
/// level, indexed `[modality][sensing * models + model]`. This is the
/// lookup table the optimizer consults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTable {
    pub resource: ResourceLevel,
    pub fusion_us: u64,
    pub window_us: u64,
    models_per_modality: Vec<usize>,
    unimodal_us: Vec<Vec<u64>>,
}

impl LatencyTable {
    pub fn build(scenario: &Scenario, resource: ResourceLevel) -> Result<Self, LatencyError> {
        let mut unimodal_us = Vec::with_capacity(scenario.modality_count());
        let mut models_per_modality = Vec::with_capacity(scenario.modality_count());
        for (m, space) in scenario.config_spaces.iter().enumerate() {
            let row = space
                .pairs()
                .map(|pair| unit_pipeline_latency(&space.sensing[pair.sensing], &scenario.profile, m, pair, resource))
                .collect::<Result<Vec<_>, _>>()?;
            unimodal_us.push(row);
            models_per_modality.push(space.models.len());
        }
        Ok(Self {
            resource,
            fusion_us: scenario.profile.fusion_us,
            window_us: scenario.window_us,
            models_per_modality,
            unimodal_us,
        })
    }

    pub fn unimodal(&self, modality: usize, pair: crate::model::LevelPair) -> u64 {
        self.unimodal_us[modality][pair.sensing * self.models_per_modality[modality] + pair.model]
    }

    pub fn total(&self, assignment: &ConfigAssignment) -> u64 {
        let max = assignment.pairs().iter().enumerate().map(|(m, &p)| self.unimodal(m, p)).max().unwrap_or(0);
        max + self.fusion_us
    }

    pub fn reported(&self, assignment: &ConfigAssignment) -> u64 {
        self.total(assignment).saturating_sub(self.window_us)
    }
}

/// `(T_end - T_0) - t_w`: prediction time minus the first unit acquisition,
/// with the sensing window excluded.
pub fn reported_latency(trace: &crate::engine::SimTrace, scenario: &Scenario) -> Result<u64, LatencyError> {
    let end = trace.prediction_time().ok_or(LatencyError::IncompleteTrace("prediction_emitted"))?;
    let start = trace.events_of("unit_sensed").map(|e| e.time_us).min().ok_or(LatencyError::IncompleteTrace("unit_sensed"))?;
    Ok((end - start).saturating_sub(scenario.window_us))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{two_modality_scenario, LevelPair, ProfileKey, UnitCost};

    #[test]
    fn sensing_bound_and_encoder_bound() {
        assert_eq!(sensing_bound_latency(28_000, 40_000, 25, 3_000), 1_003_000);
        assert_eq!(sensing_bound_latency(55_000, 40_000, 25, 3_000), 1_378_000);
        assert_eq!(sensing_bound_latency(5_000, 1_000_000, 1, 7), 1_000_007);
        assert_eq!(sensing_bound_latency(2_000_000, 1_000_000, 1, 7), 2_000_007);
    }

    fn set(s: &mut Scenario, modality: usize, encode_us: u64, aggregate_us: u64) {
        s.profile.insert(
            ProfileKey { modality, sensing: 0, model: 0, resource: ResourceLevel(0) },
            UnitCost { encode_us, aggregate_us },
        );
    }

    #[test]
    fn end_to_end_takes_the_slowest_modality() {
        let mut s = two_modality_scenario(25);
        // video sensing-bound: 40 000 * 25 + 3 000; audio: 34 000 * 25 + 0 = 850 000
        set(&mut s, 0, 28_000, 3_000);
        s.config_spaces[1].sensing[0].units_per_window = 25;
        set(&mut s, 1, 34_000, 0);
        s.config_spaces[1].sensing[0].window_us = 850_000;
        let a = ConfigAssignment::minimal(2);
        let e = end_to_end_latency(&a, &s, ResourceLevel(0)).unwrap();
        assert_eq!(e.per_modality_us, vec![1_003_000, 850_000]);
        assert_eq!(e.total_us, 1_015_000);
        assert_eq!(e.waiting_us, 153_000);
    }

    #[test]
    fn single_modality_has_no_waiting() {
        let mut s = two_modality_scenario(25);
        s.modalities.truncate(1);
        s.config_spaces.truncate(1);
        let a = ConfigAssignment::minimal(1);
        let e = end_to_end_latency(&a, &s, ResourceLevel(0)).unwrap();
        assert_eq!(e.waiting_us, 0);
        assert_eq!(e.total_us, e.per_modality_us[0] + s.profile.fusion_us);
    }

    #[test]
    fn missing_entry_is_an_error() {
        let mut s = two_modality_scenario(25);
        let key = ProfileKey { modality: 1, sensing: 0, model: 1, resource: ResourceLevel(0) };
        s.profile.remove(&key);
        let a = ConfigAssignment::new(vec![LevelPair::new(0, 0), LevelPair::new(0, 1)]);
        assert_eq!(
            end_to_end_latency(&a, &s, ResourceLevel(0)),
            Err(LatencyError::MissingProfileEntry(MissingProfileEntry(key)))
        );
    }

    #[test]
    fn table_matches_direct_computation() {
        let s = two_modality_scenario(25);
        let table = LatencyTable::build(&s, ResourceLevel(1)).unwrap();
        for a in ConfigAssignment::enumerate(&s) {
            assert_eq!(table.total(&a), end_to_end_latency(&a, &s, ResourceLevel(1)).unwrap().total_us);
        }
    }
}
