//! Synthetic samples and the task they belong to.
//!
//! A [`World`] fixes one prototype vector per (modality, class). A
//! [`Sample`] regenerates its unit features from `(seed, modality, N, unit)`
//! alone, so payloads are bit-identical wherever they are produced.

use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::model::{Modality, Scenario, TaskSpec};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Share of samples whose partial-window prediction disagrees with the
    /// full-window one.
    pub fn late_switch_rate(self) -> f64 {
        match self {
            Difficulty::Easy => 0.02,
            Difficulty::Medium => 0.06,
            Difficulty::Hard => 0.10,
        }
    }

    /// Probability that a consistent sample shows its true class.
    pub fn fidelity(self) -> f64 {
        match self {
            Difficulty::Easy => 0.96,
            Difficulty::Medium => 0.92,
            Difficulty::Hard => 0.88,
        }
    }

    /// Magnitude of the per-modality distortion, which lowers cross-modal consistency.
    pub fn distortion(self) -> f64 {
        match self {
            Difficulty::Easy => 0.15,
            Difficulty::Medium => 0.35,
            Difficulty::Hard => 0.6,
        }
    }

    pub fn noise(self) -> f64 {
        match self {
            Difficulty::Easy => 0.03,
            Difficulty::Medium => 0.05,
            Difficulty::Hard => 0.08,
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

/// Amplitude of the class signal in a consistent sample.
const SIGNAL: f64 = 1.0;
/// Early and late amplitudes of a late-switch sample. The late evidence is
/// strong enough to flip the full-window decision but the early evidence
/// still wins on any prefix ending before [`LATE_ONSET`].
const EARLY_SIGNAL: f64 = 0.5;
const LATE_SIGNAL: f64 = 3.25;
/// Normalized window time from which late-switch samples carry the late class.
pub const LATE_ONSET: f64 = 0.8;

/// How a sample's evidence evolves over the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "snake_case")]
pub enum EvidencePlan {
    /// Every unit of every modality points at `class`.
    Consistent { class: usize },
    /// Units before [`LATE_ONSET`] weakly show `early`, later ones strongly show `late`.
    LateSwitch { early: usize, late: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub label: usize,
    pub plan: EvidencePlan,
}

/// Class prototypes per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub classes: usize,
    /// `[modality][class][channel]`
    prototypes: Vec<Vec<Vec<f64>>>,
}

impl World {
    /// Prototypes share a common direction per class across modalities; when
    /// every modality has at least `classes` channels they are orthonormal.
    pub fn new(task: &TaskSpec, modalities: &[Modality]) -> Self {
        let width = modalities.iter().map(|m| m.channels).min().unwrap_or(0);
        let mut r = rng::stream(task.seed, "sample/prototype", 0);
        let mut base: Vec<Vec<f64>> = Vec::with_capacity(task.classes);
        for _ in 0..task.classes {
            let mut v: Vec<f64> = (0..width).map(|_| rng::normal(&mut r)).collect();
            if task.classes <= width {
                for b in &base {
                    let d = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
            }
            normalize(&mut v);
            base.push(v);
        }
        let prototypes = modalities
            .iter()
            .map(|m| {
                base.iter()
                    .map(|q| {
                        let mut p = q.clone();
                        p.resize(m.channels, 0.0);
                        p
                    })
                    .collect()
            })
            .collect();
        Self { classes: task.classes, prototypes }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::new(&s.task, &s.modalities)
    }

    pub fn prototype(&self, modality: usize, class: usize) -> &[f64] {
        &self.prototypes[modality][class]
    }

    /// Fusion head: each class scores the sum over modalities of the dot
    /// product between the modality's pooled mean features and the class
    /// prototype. Missing modalities contribute nothing. Ties go to the
    /// lowest class index.
    pub fn predict(&self, modality_means: &[Option<&[f64]>]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..self.classes {
            let score: f64 = modality_means
                .iter()
                .enumerate()
                .filter_map(|(m, v)| v.map(|v| dot(&v[..self.prototypes[m][k].len()], &self.prototypes[m][k])))
                .sum();
            if score > best.1 {
                best = (k, score);
            }
        }
        best.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl Sample {
    /// Draws one sample. `late_switch` selects the evidence plan; the class
    /// choices come from the sample's own stream.
    pub fn generate(world_classes: usize, id: u64, seed: u64, difficulty: Difficulty, late_switch: bool) -> Self {
        let mut r = rng::stream(seed, "sample/plan", id);
        let label = r.random_range(0..world_classes);
        let other = |r: &mut rand_chacha::ChaCha8Rng, not: usize| {
            let o = r.random_range(0..world_classes - 1);
            if o >= not {
                o + 1
            } else {
                o
            }
        };
        let plan = if late_switch {
            let flip: bool = r.random();
            let wrong = other(&mut r, label);
            if flip {
                EvidencePlan::LateSwitch { early: wrong, late: label }
            } else {
                EvidencePlan::LateSwitch { early: label, late: wrong }
            }
        } else if r.random::<f64>() < difficulty.fidelity() {
            EvidencePlan::Consistent { class: label }
        } else {
            EvidencePlan::Consistent { class: other(&mut r, label) }
        };
        let seed = rng::child_seed(seed, "sample/payload", id);
        Sample { id, seed, difficulty, label, plan }
    }

    /// Encoded features of unit `unit` of a window cut into `units` units.
    pub fn unit_features(&self, world: &World, modality: usize, units: u32, unit: u32) -> Vec<f64> {
        let channels = world.prototypes[modality][0].len();
        let t = (f64::from(unit) + 0.5) / f64::from(units);
        let mut x = vec![0.0; channels];
        let (class, amplitude, distortion) = match self.plan {
            EvidencePlan::Consistent { class } => (class, SIGNAL, self.difficulty.distortion()),
            EvidencePlan::LateSwitch { early, .. } if t < LATE_ONSET => (early, EARLY_SIGNAL, 0.0),
            EvidencePlan::LateSwitch { late, .. } => (late, LATE_SIGNAL, 0.0),
        };
        for (xi, p) in x.iter_mut().zip(world.prototype(modality, class)) {
            *xi = amplitude * p;
        }
        if distortion > 0.0 {
            let mut r = rng::stream(self.seed, "sample/distortion", modality as u64);
            let mut d: Vec<f64> = (0..channels).map(|_| rng::normal(&mut r)).collect();
            normalize(&mut d);
            x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += distortion * di);
        }
        let id = ((modality as u64) << 40) | (u64::from(units) << 20) | u64::from(unit);
        let mut r = rng::stream(self.seed, "sample/noise", id);
        let sigma = self.difficulty.noise();
        x.iter_mut().for_each(|xi| *xi += sigma * rng::normal(&mut r));
        x
    }

    /// The first `rows` encoded units of a window of `units` units.
    pub fn window_matrix(&self, world: &World, modality: usize, units: u32, rows: u32) -> FeatureMatrix {
        let channels = world.prototypes[modality][0].len();
        let mut m = FeatureMatrix::zeros(units as usize, channels);
        for u in 0..rows.min(units) {
            m.push_row(&self.unit_features(world, modality, units, u));
        }
        m
    }

    pub fn is_late_switch(&self) -> bool {
        matches!(self.plan, EvidencePlan::LateSwitch { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World {
        let mods = vec![
            Modality { id: 0, name: "a".into(), channels: 10 },
            Modality { id: 1, name: "b".into(), channels: 8 },
        ];
        World::new(&TaskSpec { classes: 6, seed: 5 }, &mods)
    }

    #[test]
    fn prototypes_are_orthonormal_and_aligned() {
        let w = world();
        for a in 0..6 {
            for b in 0..6 {
                let d = dot(w.prototype(1, a), w.prototype(1, b));
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
            assert_eq!(&w.prototype(0, a)[..8], w.prototype(1, a));
        }
    }

    #[test]
    fn payloads_regenerate_identically() {
        let w = world();
        let s1 = Sample::generate(6, 3, 99, Difficulty::Hard, false);
        let s2 = Sample::generate(6, 3, 99, Difficulty::Hard, false);
        assert_eq!(s1, s2);
        let a = s1.unit_features(&w, 0, 25, 7);
        let b = s2.unit_features(&w, 0, 25, 7);
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, s1.unit_features(&w, 0, 25, 8));
    }

    #[test]
    fn consistent_sample_is_predicted_as_its_class() {
        let w = world();
        let s = Sample::generate(6, 1, 7, Difficulty::Easy, false);
        let EvidencePlan::Consistent { class } = s.plan else { panic!() };
        let f0 = s.unit_features(&w, 0, 10, 0);
        let f1 = s.unit_features(&w, 1, 10, 0);
        assert_eq!(w.predict(&[Some(&f0), Some(&f1)]), class);
    }
}
