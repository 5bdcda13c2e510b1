//! Latency-constrained configuration search.
//!
//! An assignment is feasible when its reported latency (end-to-end minus
//! the sensing window) fits in the scenario's `t_max_us`.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{LatencyError, LatencyTable};
use crate::model::{ConfigAssignment, LevelPair, ResourceLevel, Scenario};
use crate::predictor::{predict, EncodingSpec, ModalityIndicators, PredictorModel};
use crate::sample::{Sample, World};
use crate::workload::sample_indicators;

/// Anything that scores an assignment for given indicators.
pub trait AccuracyModel {
    fn score(&self, ind: &ModalityIndicators, a: &ConfigAssignment) -> f64;
}

impl AccuracyModel for PredictorModel {
    /// Assignments outside the encoding score zero; [`optimizer_step`]
    /// rejects mismatched encodings before searching.
    fn score(&self, ind: &ModalityIndicators, a: &ConfigAssignment) -> f64 {
        predict(self, ind, a).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("no assignment meets the latency budget of {t_max_us} us")]
    NoFeasibleAssignment { t_max_us: u64 },
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error("predictor encoding does not match the scenario's configuration space")]
    EncodingMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub best: ConfigAssignment,
    pub best_score: f64,
    pub feasible_count: usize,
}

/// Exhaustive search. Ties keep the lexicographically first assignment.
pub fn brute_force<M: AccuracyModel + ?Sized>(
    scenario: &Scenario,
    ind: &ModalityIndicators,
    model: &M,
    resource: ResourceLevel,
) -> Result<BruteForce, OptimizerError> {
    let table = LatencyTable::build(scenario, resource)?;
    let mut best: Option<(ConfigAssignment, f64)> = None;
    let mut feasible_count = 0;
    for a in ConfigAssignment::enumerate(scenario) {
        if table.reported(&a) > scenario.t_max_us {
            continue;
        }
        feasible_count += 1;
        let s = model.score(ind, &a);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((a, s));
        }
    }
    let (best, best_score) = best.ok_or(OptimizerError::NoFeasibleAssignment { t_max_us: scenario.t_max_us })?;
    Ok(BruteForce { best, best_score, feasible_count })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub modality: usize,
    pub pair: LevelPair,
    pub score: f64,
    pub reported_latency_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Greedy {
    pub assignment: ConfigAssignment,
    pub score: f64,
    pub steps: Vec<GreedyStep>,
}

/// Starts from the per-modality fastest pairs and repeatedly applies the
/// feasible move with the best accuracy gain per added microsecond of
/// latency. A move replaces one modality's whole (sensing, model) pair.
/// Moves that do not add latency rank above all others by their gain.
/// Ties go to the larger gain, then the lower modality, then the
/// lexicographically smaller pair. Stops when no feasible move improves
/// the score.
pub fn greedy_search<M: AccuracyModel + ?Sized>(
    scenario: &Scenario,
    ind: &ModalityIndicators,
    model: &M,
    resource: ResourceLevel,
) -> Result<Greedy, OptimizerError> {
    let table = LatencyTable::build(scenario, resource)?;
    let start: Vec<LevelPair> = scenario
        .config_spaces
        .iter()
        .enumerate()
        .map(|(m, space)| {
            space.pairs().min_by_key(|&p| table.unimodal(m, p)).expect("validated spaces are non-empty")
        })
        .collect();
    let mut current = ConfigAssignment::new(start);
    if table.reported(&current) > scenario.t_max_us {
        return Err(OptimizerError::NoFeasibleAssignment { t_max_us: scenario.t_max_us });
    }
    // After a move on one modality, candidates that change a different
    // modality are new, but the rest were already scored in earlier steps.
    let mut seen: HashMap<ConfigAssignment, f64> = HashMap::new();
    let mut score = model.score(ind, &current);
    let mut steps = Vec::new();
    loop {
        let latency = table.reported(&current) as i64;
        // (free move, rank value, gain, modality, pair, score, latency)
        let mut best: Option<(bool, f64, f64, usize, LevelPair, f64, u64)> = None;
        for (m, space) in scenario.config_spaces.iter().enumerate() {
            for pair in space.pairs() {
                if pair == current.pairs()[m] {
                    continue;
                }
                let candidate = current.with(m, pair);
                let lat = table.reported(&candidate);
                if lat > scenario.t_max_us {
                    continue;
                }
                let s = *seen.entry(candidate).or_insert_with_key(|c| model.score(ind, c));
                let gain = s - score;
                if gain <= 0.0 {
                    continue;
                }
                let added = lat as i64 - latency;
                let free = added <= 0;
                let rank = if free { gain } else { gain / added as f64 };
                let better = match &best {
                    None => true,
                    Some((bf, br, bg, ..)) => (free, rank, gain).partial_cmp(&(*bf, *br, *bg)) == Some(std::cmp::Ordering::Greater),
                };
                if better {
                    best = Some((free, rank, gain, m, pair, s, lat));
                }
            }
        }
        let Some((.., m, pair, s, lat)) = best else { break };
        current = current.with(m, pair);
        score = s;
        steps.push(GreedyStep { modality: m, pair, score: s, reported_latency_us: lat });
    }
    Ok(Greedy { assignment: current, score, steps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub assignment: ConfigAssignment,
    pub indicators: ModalityIndicators,
    pub score: f64,
    /// Wall-clock time of the probe, indicator and search steps.
    pub decision_latency: Duration,
}

/// Probe indicators from the sample's first units at the minimal
/// configuration, then greedy search under the resource level active at
/// time zero.
pub fn optimizer_step<M: AccuracyModel + ?Sized>(
    sample: &Sample,
    scenario: &Scenario,
    model: &M,
) -> Result<Decision, OptimizerError> {
    let t0 = Instant::now();
    let world = World::for_scenario(scenario);
    let indicators = sample_indicators(scenario, &world, sample);
    let greedy = greedy_search(scenario, &indicators, model, scenario.resource_at(0))?;
    Ok(Decision { assignment: greedy.assignment, indicators, score: greedy.score, decision_latency: t0.elapsed() })
}

/// [`optimizer_step`] with a trained predictor, after checking that its
/// encoding fits the scenario.
pub fn optimizer_step_with_predictor(
    sample: &Sample,
    scenario: &Scenario,
    model: &PredictorModel,
) -> Result<Decision, OptimizerError> {
    if model.encoding != EncodingSpec::for_scenario(scenario) {
        return Err(OptimizerError::EncodingMismatch);
    }
    optimizer_step(sample, scenario, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{gen_scenario, gen_surface, SurfaceKind};

    struct Table(Vec<f64>);

    impl AccuracyModel for Table {
        fn score(&self, _: &ModalityIndicators, a: &ConfigAssignment) -> f64 {
            let p = a.pairs();
            self.0[(p[0].sensing * 3 + p[0].model) * 9 + p[1].sensing * 3 + p[1].model]
        }
    }

    #[test]
    fn infeasible_budget() {
        let mut s = gen_scenario("lrw-like", 0).unwrap();
        s.t_max_us = 1;
        let f = gen_surface(&s, 0, SurfaceKind::Additive);
        let ind = ModalityIndicators::from_consistency(0.9);
        assert!(matches!(brute_force(&s, &ind, &f, ResourceLevel(0)), Err(OptimizerError::NoFeasibleAssignment { .. })));
        assert!(matches!(greedy_search(&s, &ind, &f, ResourceLevel(0)), Err(OptimizerError::NoFeasibleAssignment { .. })));
    }

    #[test]
    fn unbounded_budget_is_global_argmax() {
        let mut s = gen_scenario("lrw-like", 0).unwrap();
        s.t_max_us = u64::MAX;
        let scores: Vec<f64> = (0..81).map(|i| ((i * 37) % 81) as f64).collect();
        let top = scores.iter().cloned().fold(f64::MIN, f64::max);
        let b = brute_force(&s, &ModalityIndicators::from_consistency(0.0), &Table(scores), ResourceLevel(0)).unwrap();
        assert_eq!(b.best_score, top);
        assert_eq!(b.feasible_count, 81);
    }

    #[test]
    fn ties_keep_lexicographic_first() {
        let mut s = gen_scenario("lrw-like", 0).unwrap();
        s.t_max_us = u64::MAX;
        let b = brute_force(&s, &ModalityIndicators::from_consistency(0.0), &Table(vec![1.0; 81]), ResourceLevel(0)).unwrap();
        assert_eq!(b.best, ConfigAssignment::minimal(2));
    }

    #[test]
    fn greedy_steps_strictly_improve() {
        let s = gen_scenario("lrw-like", 0).unwrap();
        let f = gen_surface(&s, 3, SurfaceKind::Interacting);
        let ind = ModalityIndicators::from_consistency(0.8);
        let g = greedy_search(&s, &ind, &f, ResourceLevel(0)).unwrap();
        assert!(g.steps.windows(2).all(|w| w[1].score > w[0].score));
        let table = LatencyTable::build(&s, ResourceLevel(0)).unwrap();
        assert!(table.reported(&g.assignment) <= s.t_max_us);
    }
}
