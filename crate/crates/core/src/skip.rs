//! Gate for cross-modal speculative skipping.
//!
//! The gate scores `[f_fast, f_slow_prefix, fraction]` and the engine
//! commits a skip when the resulting probability is strictly above `tau`.
//! Labels come from asking whether the fused prediction on the prefix
//! matches the fused prediction on the full window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{aggregate_with, AggregationSpec};
use crate::engine::{checkpoint_units, slow_modality, EngineError, GateError, GateInput, SkipGate};
use crate::model::{ConfigAssignment, Scenario};
use crate::nn::{dense_pairs, sigmoid, Activation, Adam, Mlp};
use crate::predictor::{model_from_json, model_to_json, ModelFileError};
use crate::rng::{self, Rng};
use crate::sample::{Sample, World};

pub const GATE_SCHEMA: &str = "pipefuse-gate/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateLayout {
    pub fast_dim: usize,
    pub slow_dim: usize,
}

impl GateLayout {
    pub fn input_len(&self) -> usize {
        self.fast_dim + self.slow_dim + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Last few epoch losses.
    pub loss_tail: Vec<f64>,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub schema: String,
    pub layout: GateLayout,
    pub net: Mlp,
    /// Dropout rate used in training; evaluation never drops units.
    pub dropout: f64,
    /// Added to the logit before the sigmoid; set by [`calibrate`].
    #[serde(default)]
    pub logit_offset: f64,
    pub meta: GateMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipDecision {
    pub checkpoint_fraction: f64,
    pub p: f64,
    pub committed: bool,
    pub units_skipped: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateExample {
    /// Examples sharing a group are the checkpoints of one (sample, config) window.
    pub group: u64,
    pub fast: Vec<f64>,
    pub slow_prefix: Vec<f64>,
    pub fraction: f64,
    pub label: bool,
}

impl GateExample {
    fn input(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.fast.len() + self.slow_prefix.len() + 1);
        x.extend(&self.fast);
        x.extend(&self.slow_prefix);
        x.push(self.fraction);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateHyper {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub holdout_fraction: f64,
}

impl Default for GateHyper {
    fn default() -> Self {
        Self { seed: 0, epochs: 400, learning_rate: 0.01, hidden: 16, dropout: 0.1, holdout_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateTrainError {
    #[error("gate training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error(transparent)]
    Dimension(#[from] GateError),
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Full-batch Adam on binary cross-entropy with inverted dropout on the
/// hidden layer. Dropout masks come from a per-epoch seeded stream.
pub fn gate_train(dataset: &[GateExample], hyper: &GateHyper) -> Result<GateModel, GateTrainError> {
    let first = dataset.first().ok_or(GateTrainError::EmptyDataset)?;
    let layout = GateLayout { fast_dim: first.fast.len(), slow_dim: first.slow_prefix.len() };
    for e in dataset {
        let got = e.fast.len() + e.slow_prefix.len() + 1;
        if e.fast.len() != layout.fast_dim || got != layout.input_len() {
            return Err(GateError::DimensionMismatch { expected: layout.input_len(), got }.into());
        }
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng::shuffle(&mut rng::stream(hyper.seed, "gate/split", 0), &mut order);
    let holdout_n = (dataset.len() as f64 * hyper.holdout_fraction).floor() as usize;
    let holdout_n = if holdout_n >= dataset.len() { 0 } else { holdout_n };
    let (held, fit) = order.split_at(holdout_n);
    let xs: Vec<Vec<(usize, f64)>> = fit.iter().map(|&i| dense_pairs(&dataset[i].input())).collect();
    let ys: Vec<f64> = fit.iter().map(|&i| f64::from(u8::from(dataset[i].label))).collect();

    let mut net = Mlp::seeded(layout.input_len(), hyper.hidden, Activation::Relu, hyper.seed);
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), hyper.learning_rate);
    let keep = 1.0 - hyper.dropout;
    let n = xs.len() as f64;
    let mut losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let mut r = rng::stream(hyper.seed, "gate/dropout", epoch as u64);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut mask = vec![1.0; hyper.hidden];
        for (x, &y) in xs.iter().zip(&ys) {
            if hyper.dropout > 0.0 {
                mask.iter_mut().for_each(|m| *m = if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
            }
            let pass = net.forward_sparse(x);
            let p = sigmoid(net.masked_out(&pass, &mask));
            loss += bce(p, y) / n;
            net.accumulate_grad(x, &pass, (p - y) / n, Some(&mask), &mut grad);
        }
        if !loss.is_finite() {
            return Err(GateTrainError::NonFiniteLoss(epoch));
        }
        losses.push(loss);
        adam.step(&mut params, &grad);
        net.set_params(&params);
    }
    let accuracy = |idx: &[usize]| {
        let hits = idx
            .iter()
            .filter(|&&i| (sigmoid(net.forward(&dataset[i].input()).out) > 0.5) == dataset[i].label)
            .count();
        hits as f64 / idx.len().max(1) as f64
    };
    let meta = GateMeta {
        seed: hyper.seed,
        epochs: hyper.epochs,
        learning_rate: hyper.learning_rate,
        loss_tail: losses[losses.len().saturating_sub(5)..].to_vec(),
        train_accuracy: accuracy(fit),
        holdout_accuracy: (!held.is_empty()).then(|| accuracy(held)),
    };
    Ok(GateModel { schema: GATE_SCHEMA.to_string(), layout, net, dropout: hyper.dropout, logit_offset: 0.0, meta })
}

impl GateModel {
    pub fn logit(&self, fast: &[f64], slow_prefix: &[f64], fraction: f64) -> Result<f64, GateError> {
        let got = fast.len() + slow_prefix.len() + 1;
        if fast.len() != self.layout.fast_dim || got != self.layout.input_len() {
            return Err(GateError::DimensionMismatch { expected: self.layout.input_len(), got });
        }
        let mut x = Vec::with_capacity(got);
        x.extend_from_slice(fast);
        x.extend_from_slice(slow_prefix);
        x.push(fraction);
        Ok(self.net.forward(&x).out + self.logit_offset)
    }

    pub fn to_json(&self) -> String {
        model_to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        model_from_json(text, GATE_SCHEMA)
    }
}

/// Evaluates the gate at one checkpoint; `remaining_units` is what a
/// commit would skip.
pub fn gate_eval(
    model: &GateModel,
    fast: &[f64],
    slow_prefix: &[f64],
    fraction: f64,
    tau: f64,
    remaining_units: u32,
) -> Result<SkipDecision, GateError> {
    let p = sigmoid(model.logit(fast, slow_prefix, fraction)?);
    let committed = p > tau;
    Ok(SkipDecision { checkpoint_fraction: fraction, p, committed, units_skipped: if committed { remaining_units } else { 0 } })
}

impl SkipGate for GateModel {
    fn probability(&self, input: &GateInput<'_>) -> Result<f64, GateError> {
        Ok(sigmoid(self.logit(input.fast, input.slow_prefix, input.fraction)?))
    }
}

/// Window-level view used for labels and datasets: full aggregates of every
/// modality plus the slow modality's prefix aggregates at each checkpoint.
pub struct WindowView {
    pub slow: usize,
    pub full: Vec<Vec<f64>>,
    /// `(checkpoint unit, fraction, prefix aggregate)`
    pub prefixes: Vec<(u32, f64, Vec<f64>)>,
}

impl WindowView {
    pub fn build(
        scenario: &Scenario,
        world: &World,
        assignment: &ConfigAssignment,
        sample: &Sample,
    ) -> Result<Self, EngineError> {
        assignment.check(scenario)?;
        let slow = slow_modality(scenario, assignment)?;
        let mut full = Vec::with_capacity(scenario.modality_count());
        let mut prefixes = Vec::new();
        for (m, modality) in scenario.modalities.iter().enumerate() {
            let units = scenario.sensing(m, assignment.pairs()[m]).units_per_window;
            let spec = AggregationSpec::from_settings(&scenario.aggregation, modality.channels, m);
            let matrix = sample.window_matrix(world, m, units, units);
            full.push(aggregate_with(&matrix, &spec)?);
            if m == slow {
                for (unit, fraction) in checkpoint_units(&scenario.skip_checkpoints, units) {
                    prefixes.push((unit, fraction, aggregate_with(&matrix.truncated(unit as usize + 1), &spec)?));
                }
            }
        }
        Ok(Self { slow, full, prefixes })
    }

    pub fn fast(&self) -> Vec<f64> {
        self.full.iter().enumerate().filter(|&(m, _)| m != self.slow).flat_map(|(_, v)| v.iter().copied()).collect()
    }

    pub fn full_prediction(&self, world: &World) -> usize {
        let inputs: Vec<Option<&[f64]>> = self.full.iter().map(|v| Some(v.as_slice())).collect();
        world.predict(&inputs)
    }

    pub fn prefix_prediction(&self, world: &World, k: usize) -> usize {
        let inputs: Vec<Option<&[f64]>> = self
            .full
            .iter()
            .enumerate()
            .map(|(m, v)| Some(if m == self.slow { self.prefixes[k].2.as_slice() } else { v.as_slice() }))
            .collect();
        world.predict(&inputs)
    }

    /// Label per checkpoint: does the prefix prediction match the full one?
    pub fn labels(&self, world: &World) -> Vec<bool> {
        let full = self.full_prediction(world);
        (0..self.prefixes.len()).map(|k| self.prefix_prediction(world, k) == full).collect()
    }
}

/// Gate examples for every sample under every listed assignment.
pub fn gate_dataset(
    scenario: &Scenario,
    samples: &[Sample],
    assignments: &[ConfigAssignment],
) -> Result<Vec<GateExample>, EngineError> {
    let world = World::for_scenario(scenario);
    let mut out = Vec::new();
    for (ai, a) in assignments.iter().enumerate() {
        for s in samples {
            let view = WindowView::build(scenario, &world, a, s)?;
            let fast = view.fast();
            let labels = view.labels(&world);
            for ((_, fraction, prefix), label) in view.prefixes.iter().zip(labels) {
                out.push(GateExample {
                    group: (ai as u64) << 32 | s.id,
                    fast: fast.clone(),
                    slow_prefix: prefix.clone(),
                    fraction: *fraction,
                    label,
                });
            }
        }
    }
    Ok(out)
}

fn group_max_logits(model: &GateModel, examples: &[GateExample]) -> Result<Vec<f64>, GateError> {
    let mut groups: BTreeMap<u64, f64> = BTreeMap::new();
    for e in examples {
        let l = model.logit(&e.fast, &e.slow_prefix, e.fraction)? - model.logit_offset;
        groups.entry(e.group).and_modify(|m| *m = m.max(l)).or_insert(l);
    }
    Ok(groups.into_values().collect())
}

/// Share of windows in which at least one checkpoint commits.
pub fn skip_rate(model: &GateModel, examples: &[GateExample], tau: f64) -> Result<f64, GateError> {
    let maxes = group_max_logits(model, examples)?;
    let hits = maxes.iter().filter(|&&m| sigmoid(m + model.logit_offset) > tau).count();
    Ok(hits as f64 / maxes.len().max(1) as f64)
}

/// Chooses the logit offset so that `round(target * windows)` windows of
/// `examples` commit at threshold `tau`. The ranking of windows is the
/// trained gate's; only the cut moves.
pub fn calibrate(model: &mut GateModel, examples: &[GateExample], target: f64, tau: f64) -> Result<f64, GateError> {
    let mut maxes = group_max_logits(model, examples)?;
    maxes.sort_by(|a, b| b.total_cmp(a));
    let n = maxes.len();
    let k = ((target * n as f64).round() as usize).min(n);
    let cut = (tau / (1.0 - tau)).ln();
    model.logit_offset = match k {
        _ if n == 0 => 0.0,
        0 => cut - maxes[0] - 1.0,
        k if k == n => cut - maxes[n - 1] + 1.0,
        k => cut - 0.5 * (maxes[k - 1] + maxes[k]),
    };
    skip_rate(model, examples, tau)
}

/// Gate that answers with the true label: commit exactly when the prefix
/// prediction equals the full-window prediction.
#[derive(Debug, Clone, Default)]
pub struct OracleGate {
    labels: BTreeMap<(u64, u32), bool>,
}

impl OracleGate {
    pub fn for_samples(scenario: &Scenario, assignment: &ConfigAssignment, samples: &[Sample]) -> Result<Self, EngineError> {
        let world = World::for_scenario(scenario);
        let mut labels = BTreeMap::new();
        for s in samples {
            let view = WindowView::build(scenario, &world, assignment, s)?;
            for ((unit, ..), label) in view.prefixes.iter().zip(view.labels(&world)) {
                labels.insert((s.id, *unit), label);
            }
        }
        Ok(Self { labels })
    }
}

impl SkipGate for OracleGate {
    fn probability(&self, input: &GateInput<'_>) -> Result<f64, GateError> {
        let hit = self.labels.get(&(input.sample.id, input.checkpoint_unit)).copied().unwrap_or(false);
        Ok(if hit { 1.0 } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_gate(fast: usize, slow: usize, hidden: usize) -> GateModel {
        let layout = GateLayout { fast_dim: fast, slow_dim: slow };
        GateModel {
            schema: GATE_SCHEMA.into(),
            layout,
            net: Mlp::zeros(layout.input_len(), hidden, Activation::Relu),
            dropout: 0.0,
            logit_offset: 0.0,
            meta: GateMeta {
                seed: 0,
                epochs: 0,
                learning_rate: 0.0,
                loss_tail: vec![],
                train_accuracy: 0.0,
                holdout_accuracy: None,
            },
        }
    }

    #[test]
    fn zero_weights_never_commit_at_half() {
        let g = zero_gate(2, 2, 3);
        let d = gate_eval(&g, &[1.0, 2.0], &[3.0, 4.0], 0.5, 0.5, 10).unwrap();
        assert_eq!(d.p, 0.5);
        assert!(!d.committed);
        assert_eq!(d.units_skipped, 0);
    }

    #[test]
    fn one_hidden_unit_by_hand() {
        let mut g = zero_gate(1, 1, 1);
        // z = 0.5*f + 1.0*s - 2*frac + 0.1 ; p = sigmoid(2*relu(z) - 1)
        g.net.w1 = vec![0.5, 1.0, -2.0];
        g.net.b1 = vec![0.1];
        g.net.w2 = vec![2.0];
        g.net.b2 = -1.0;
        let d = gate_eval(&g, &[2.0], &[1.5], 0.5, 0.5, 7).unwrap();
        let z: f64 = 0.5 * 2.0 + 1.5 - 1.0 + 0.1;
        let expect = 1.0 / (1.0 + (-(2.0 * z - 1.0)).exp());
        assert!((d.p - expect).abs() < 1e-15);
        assert!(d.committed);
        assert_eq!(d.units_skipped, 7);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let g = zero_gate(2, 2, 3);
        assert_eq!(
            gate_eval(&g, &[1.0], &[3.0, 4.0], 0.5, 0.5, 1).unwrap_err(),
            GateError::DimensionMismatch { expected: 5, got: 4 }
        );
    }

    #[test]
    fn all_positive_labels_drive_p_to_one() {
        let data: Vec<GateExample> = (0..50)
            .map(|i| GateExample {
                group: i,
                fast: vec![(i % 5) as f64 / 5.0],
                slow_prefix: vec![(i % 3) as f64],
                fraction: 0.5,
                label: true,
            })
            .collect();
        let g = gate_train(&data, &GateHyper { epochs: 300, dropout: 0.0, ..Default::default() }).unwrap();
        assert!(*g.meta.loss_tail.last().unwrap() < 0.01, "{:?}", g.meta.loss_tail);
        for e in &data {
            assert!(sigmoid(g.logit(&e.fast, &e.slow_prefix, e.fraction).unwrap()) > 0.99);
        }
    }

    #[test]
    fn calibration_hits_exact_rate() {
        let mut g = zero_gate(1, 1, 1);
        g.net.w1 = vec![1.0, 0.0, 0.0];
        g.net.w2 = vec![1.0];
        let data: Vec<GateExample> = (0..100)
            .map(|i| GateExample { group: i, fast: vec![i as f64 / 10.0], slow_prefix: vec![0.0], fraction: 0.5, label: true })
            .collect();
        let rate = calibrate(&mut g, &data, 0.762, 0.5).unwrap();
        assert_eq!(rate, 0.76);
    }

    #[test]
    fn json_round_trip() {
        let mut g = zero_gate(3, 2, 4);
        g.net = Mlp::seeded(6, 4, Activation::Relu, 5);
        g.logit_offset = -0.123456789;
        assert_eq!(GateModel::from_json(&g.to_json()).unwrap(), g);
    }
}
