//! Seeded scenario presets, accuracy surfaces, sample corpora and training sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AggregationSettings, ConfigAssignment, ConfigSpace, ExecutionMode, LatencyProfile, LevelPair, Modality,
    ModelConfig, ProfileKey, ResourceLevel, Scenario, ScheduleEntry, SensingConfig, TaskSpec, UnitCost,
    SCENARIO_SCHEMA,
};
use crate::optimizer::AccuracyModel;
use crate::predictor::{indicators, ModalityIndicators, PredictorExample};
use crate::rng::{self, Rng};
use crate::sample::{Difficulty, Sample, World};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

pub const PRESETS: [&str; 5] = ["motivation-av", "lrw-like", "nuscenes-like", "uav-like", "random"];

struct ModalityPlan<'a> {
    name: &'a str,
    channels: usize,
    units: Vec<u32>,
    /// `(label, encode_us, aggregate_us)` at the fastest resource level.
    models: Vec<(&'a str, u64, u64)>,
}

struct ScenarioPlan<'a> {
    name: &'a str,
    window_us: u64,
    t_max_us: u64,
    fusion_us: u64,
    classes: usize,
    checkpoints: Vec<f64>,
    /// `(label, slowdown factor)`
    resources: Vec<(&'a str, f64)>,
    modalities: Vec<ModalityPlan<'a>>,
}

fn build(plan: ScenarioPlan<'_>, seed: u64) -> Scenario {
    let resource_levels: Vec<String> = plan.resources.iter().map(|(l, _)| l.to_string()).collect();
    let mut profile = LatencyProfile::new(resource_levels, plan.fusion_us);
    let mut modalities = Vec::new();
    let mut spaces = Vec::new();
    for (id, m) in plan.modalities.iter().enumerate() {
        modalities.push(Modality { id, name: m.name.to_string(), channels: m.channels });
        spaces.push(ConfigSpace {
            modality: id,
            sensing: m
                .units
                .iter()
                .enumerate()
                .map(|(level, &u)| SensingConfig { level, units_per_window: u, window_us: plan.window_us })
                .collect(),
            models: m
                .models
                .iter()
                .enumerate()
                .map(|(level, (label, ..))| ModelConfig { level, label: label.to_string() })
                .collect(),
        });
        for sensing in 0..m.units.len() {
            for (model, &(_, encode, aggregate)) in m.models.iter().enumerate() {
                for (r, &(_, factor)) in plan.resources.iter().enumerate() {
                    profile.insert(
                        ProfileKey { modality: id, sensing, model, resource: ResourceLevel(r) },
                        UnitCost {
                            encode_us: (encode as f64 * factor).round() as u64,
                            aggregate_us: (aggregate as f64 * factor).round() as u64,
                        },
                    );
                }
            }
        }
    }
    Scenario {
        schema: SCENARIO_SCHEMA.to_string(),
        name: plan.name.to_string(),
        window_us: plan.window_us,
        t_max_us: plan.t_max_us,
        execution_mode: ExecutionMode::Pipelined,
        skip_checkpoints: plan.checkpoints,
        tau: 0.5,
        accuracy_surface_seed: seed,
        gate_eval_cost_us: 1_000,
        probe_cost_us: 1_000,
        switch_cost_us: 0,
        task: TaskSpec { classes: plan.classes, seed },
        aggregation: AggregationSettings { encoder_seed: seed, ..AggregationSettings::default() },
        modalities,
        config_spaces: spaces,
        profile,
        resource_schedule: vec![ScheduleEntry { time_us: 0, level: plan.resources[0].0.to_string() }],
    }
}

const LRW_RESOURCES: [(&str, f64); 3] = [("high", 1.0), ("medium", 1.5625), ("low", 2.0)];

pub fn gen_scenario(preset: &str, seed: u64) -> Result<Scenario, WorkloadError> {
    let s = match preset {
        "motivation-av" => build(
            ScenarioPlan {
                name: "motivation-av",
                window_us: 1_000_000,
                t_max_us: 250_000,
                fusion_us: 44_000,
                classes: 8,
                checkpoints: vec![],
                resources: vec![("default", 1.0)],
                modalities: vec![
                    ModalityPlan { name: "video", channels: 16, units: vec![25], models: vec![("resnet", 3_120, 120_000)] },
                    ModalityPlan { name: "audio", channels: 12, units: vec![20], models: vec![("cnn", 1_900, 60_000)] },
                ],
            },
            seed,
        ),
        "lrw-like" => build(
            ScenarioPlan {
                name: "lrw-like",
                window_us: 1_000_000,
                t_max_us: 160_000,
                fusion_us: 12_000,
                classes: 8,
                checkpoints: vec![0.5, 0.7],
                resources: LRW_RESOURCES.to_vec(),
                modalities: vec![
                    ModalityPlan {
                        name: "video",
                        channels: 16,
                        units: vec![20, 25, 32],
                        models: vec![("small", 18_000, 8_000), ("medium", 36_000, 10_000), ("large", 52_000, 12_000)],
                    },
                    ModalityPlan {
                        name: "audio",
                        channels: 12,
                        units: vec![10, 16, 20],
                        models: vec![("small", 2_000, 3_000), ("medium", 4_000, 4_000), ("large", 7_000, 5_000)],
                    },
                ],
            },
            seed,
        ),
        "nuscenes-like" => build(
            ScenarioPlan {
                name: "nuscenes-like",
                window_us: 3_000_000,
                t_max_us: 400_000,
                fusion_us: 30_000,
                classes: 6,
                checkpoints: vec![0.5, 0.7],
                resources: LRW_RESOURCES.to_vec(),
                modalities: vec![
                    ModalityPlan {
                        name: "rgb",
                        channels: 16,
                        units: vec![2, 6, 12],
                        models: vec![("small", 60_000, 20_000), ("medium", 150_000, 30_000), ("large", 320_000, 40_000)],
                    },
                    ModalityPlan {
                        name: "lidar",
                        channels: 12,
                        units: vec![6, 30, 60],
                        models: vec![("small", 20_000, 10_000), ("medium", 45_000, 15_000), ("large", 70_000, 20_000)],
                    },
                    ModalityPlan { name: "text", channels: 8, units: vec![1], models: vec![("encoder", 15_000, 2_000)] },
                ],
            },
            seed,
        ),
        "uav-like" => build(
            ScenarioPlan {
                name: "uav-like",
                window_us: 500_000,
                t_max_us: 80_000,
                fusion_us: 8_000,
                classes: 5,
                checkpoints: vec![0.5, 0.7],
                resources: LRW_RESOURCES.to_vec(),
                modalities: vec![
                    ModalityPlan {
                        name: "rgb",
                        channels: 12,
                        units: vec![5, 10, 16],
                        models: vec![("small", 15_000, 5_000), ("medium", 32_000, 7_000), ("large", 60_000, 9_000)],
                    },
                    ModalityPlan {
                        name: "radar",
                        channels: 8,
                        units: vec![2, 5, 10],
                        models: vec![("small", 5_000, 2_000), ("medium", 12_000, 3_000), ("large", 30_000, 4_000)],
                    },
                ],
            },
            seed,
        ),
        "random" => random_scenario(seed),
        other => match other.strip_prefix("scaling-").and_then(|l| l.parse::<usize>().ok()) {
            Some(levels) if (2..=8).contains(&levels) => gen_scaling_scenario(levels, seed),
            _ => return Err(WorkloadError::UnknownPreset(other.to_string())),
        },
    };
    Ok(s)
}

/// Unit counts that divide both a 0.5 s and a 1 s window.
const DIVISORS: [u32; 12] = [1, 2, 4, 5, 8, 10, 16, 20, 25, 32, 40, 50];

fn random_scenario(seed: u64) -> Scenario {
    let mut r = rng::stream(seed, "workload/random", 0);
    let window_us = if r.random::<bool>() { 1_000_000 } else { 500_000 };
    let m_count = r.random_range(2..=3);
    let n_resources = r.random_range(1..=3);
    let names = ["r0", "r1", "r2"];
    let mut resources = vec![(names[0], 1.0)];
    for name in names.iter().take(n_resources).skip(1) {
        let prev = resources.last().map_or(1.0, |p: &(&str, f64)| p.1);
        resources.push((*name, prev * rng::uniform(&mut r, 1.1, 2.0)));
    }
    let mod_names = ["m0", "m1", "m2"];
    let label_names = ["k0", "k1", "k2"];
    let mut modalities = Vec::new();
    for name in mod_names.iter().take(m_count) {
        let mut units: Vec<u32> = Vec::new();
        let n_sensing = r.random_range(1..=3);
        while units.len() < n_sensing {
            let u = DIVISORS[r.random_range(0..DIVISORS.len())];
            if !units.contains(&u) {
                units.push(u);
            }
        }
        units.sort_unstable();
        let n_models = r.random_range(1..=3);
        let mut encode: Vec<u64> = (0..n_models).map(|_| r.random_range(500..80_000)).collect();
        encode.sort_unstable();
        let models = (0..n_models).map(|k| (label_names[k], encode[k], r.random_range(0..20_000))).collect();
        modalities.push(ModalityPlan { name, channels: r.random_range(4..=16), units, models });
    }
    let min_channels = modalities.iter().map(|m| m.channels).min().unwrap_or(4);
    let classes = r.random_range(2..=min_channels.min(8));
    let mut s = build(
        ScenarioPlan {
            name: "random",
            window_us,
            t_max_us: r.random_range(20_000..400_000),
            fusion_us: r.random_range(0..30_000),
            classes,
            checkpoints: vec![0.5, 0.7],
            resources,
            modalities,
        },
        seed,
    );
    let level = r.random_range(0..n_resources);
    s.resource_schedule = vec![ScheduleEntry { time_us: 0, level: s.profile.resource_levels[level].clone() }];
    s
}

/// Two modalities with `levels` sensing and `levels` model choices each,
/// so the search space has `levels^4` assignments.
pub fn gen_scaling_scenario(levels: usize, seed: u64) -> Scenario {
    let video_units = [5, 8, 10, 16, 20, 25, 32, 40];
    let audio_units = [2, 4, 5, 8, 10, 16, 20, 25];
    let labels = ["l0", "l1", "l2", "l3", "l4", "l5", "l6", "l7"];
    let pick = |all: &[u32]| -> Vec<u32> {
        // spread over the list while staying sorted
        (0..levels).map(|i| all[i * (all.len() - 1) / (levels - 1).max(1)]).collect()
    };
    let models = |base: u64, top: u64, agg: u64| -> Vec<(&str, u64, u64)> {
        (0..levels)
            .map(|i| {
                let f = i as f64 / (levels - 1).max(1) as f64;
                (labels[i], (base as f64 * (top as f64 / base as f64).powf(f)).round() as u64, agg + 500 * i as u64)
            })
            .collect()
    };
    let mut s = build(
        ScenarioPlan {
            name: "scaling",
            window_us: 1_000_000,
            t_max_us: 160_000,
            fusion_us: 12_000,
            classes: 8,
            checkpoints: vec![0.5, 0.7],
            resources: LRW_RESOURCES.to_vec(),
            modalities: vec![
                ModalityPlan { name: "video", channels: 16, units: pick(&video_units), models: models(15_000, 60_000, 8_000) },
                ModalityPlan { name: "audio", channels: 12, units: pick(&audio_units), models: models(1_500, 9_000, 3_000) },
            ],
        },
        seed,
    );
    s.name = format!("scaling-{levels}");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    /// Sum of per-coordinate gains plus a consistency offset; affine in the one-hot code.
    Additive,
    /// Additive plus a complementarity-weighted cross-modal product term.
    Interacting,
}

/// Synthetic ground-truth accuracy (percent) of an assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySurface {
    pub kind: SurfaceKind,
    pub base: f64,
    pub consistency_weight: f64,
    /// Cumulative gain per level, `[modality][level]`, starting at 0.
    pub sensing_gain: Vec<Vec<f64>>,
    pub model_gain: Vec<Vec<f64>>,
    pub interaction: f64,
}

fn concave_gains(r: &mut rand_chacha::ChaCha8Rng, levels: usize, budget: f64) -> Vec<f64> {
    let mut inc: Vec<f64> = (1..levels).map(|_| rng::uniform(r, 0.2, 1.0)).collect();
    inc.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = inc.iter().sum();
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for i in inc {
        acc += budget * i / total;
        out.push(acc);
    }
    out
}

pub fn gen_accuracy_surface(scenario: &Scenario, seed: u64) -> AccuracySurface {
    gen_surface(scenario, seed, SurfaceKind::Interacting)
}

pub fn gen_surface(scenario: &Scenario, seed: u64, kind: SurfaceKind) -> AccuracySurface {
    let mut r = rng::stream(seed, "workload/surface", 0);
    let budget = match kind {
        SurfaceKind::Additive => 30.0,
        SurfaceKind::Interacting => 24.0,
    };
    let weights: Vec<f64> = scenario.config_spaces.iter().map(|_| rng::uniform(&mut r, 0.5, 1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut sensing_gain = Vec::new();
    let mut model_gain = Vec::new();
    for (space, w) in scenario.config_spaces.iter().zip(&weights) {
        let share = budget * w / wsum;
        let split = rng::uniform(&mut r, 0.3, 0.7);
        sensing_gain.push(concave_gains(&mut r, space.sensing.len(), share * split));
        model_gain.push(concave_gains(&mut r, space.models.len(), share * (1.0 - split)));
    }
    let interaction = match kind {
        SurfaceKind::Additive => 0.0,
        SurfaceKind::Interacting => rng::uniform(&mut r, 4.0, 8.0),
    };
    AccuracySurface { kind, base: 52.0, consistency_weight: 4.0, sensing_gain, model_gain, interaction }
}

impl AccuracySurface {
    fn modality_gain(&self, m: usize, p: LevelPair) -> f64 {
        self.sensing_gain[m][p.sensing] + self.model_gain[m][p.model]
    }

    pub fn score(&self, ind: &ModalityIndicators, a: &ConfigAssignment) -> f64 {
        let pairs = a.pairs();
        let additive: f64 = pairs.iter().enumerate().map(|(m, &p)| self.modality_gain(m, p)).sum();
        let mut value = self.base + self.consistency_weight * ind.consistency + additive;
        if self.interaction != 0.0 && pairs.len() > 1 {
            let h: Vec<f64> = pairs
                .iter()
                .enumerate()
                .map(|(m, &p)| {
                    let top = self.sensing_gain[m].last().unwrap_or(&0.0) + self.model_gain[m].last().unwrap_or(&0.0);
                    if top > 0.0 {
                        self.modality_gain(m, p) / top
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut total = 0.0;
            let mut count = 0.0;
            for i in 0..h.len() {
                for j in i + 1..h.len() {
                    total += h[i] * h[j];
                    count += 1.0;
                }
            }
            value += self.interaction * (0.5 + 0.5 * ind.complementarity) * total / count;
        }
        value
    }
}

impl AccuracyModel for AccuracySurface {
    fn score(&self, ind: &ModalityIndicators, a: &ConfigAssignment) -> f64 {
        AccuracySurface::score(self, ind, a)
    }
}

/// Relative weights of the three difficulty classes in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyMix {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl DifficultyMix {
    pub const EASY: DifficultyMix = DifficultyMix { easy: 1.0, medium: 0.0, hard: 0.0 };
    pub const HARD: DifficultyMix = DifficultyMix { easy: 0.0, medium: 0.0, hard: 1.0 };
    pub const EVEN: DifficultyMix = DifficultyMix { easy: 1.0, medium: 1.0, hard: 1.0 };

    /// Largest-remainder split of `count` across the three classes.
    fn counts(&self, count: usize) -> [usize; 3] {
        let w = [self.easy.max(0.0), self.medium.max(0.0), self.hard.max(0.0)];
        let total: f64 = w.iter().sum();
        let w = if total > 0.0 { w.map(|x| x / total) } else { [1.0 / 3.0; 3] };
        let exact = w.map(|x| x * count as f64);
        let mut out = exact.map(|x| x.floor() as usize);
        let mut rest: Vec<usize> = (0..3).collect();
        rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let mut left = count - out.iter().sum::<usize>();
        for i in rest {
            if left == 0 {
                break;
            }
            out[i] += 1;
            left -= 1;
        }
        out
    }
}

/// `count` samples; within each difficulty class exactly
/// `round(rate * class_count)` samples carry a late switch, chosen by a
/// seeded shuffle.
pub fn gen_samples(scenario: &Scenario, count: usize, mix: DifficultyMix, seed: u64) -> Vec<Sample> {
    let counts = mix.counts(count);
    let mut out = Vec::with_capacity(count);
    let mut id = 0u64;
    for (d, &n) in Difficulty::ALL.iter().zip(&counts) {
        let switches = (d.late_switch_rate() * n as f64).round() as usize;
        let mut flags: Vec<bool> = (0..n).map(|i| i < switches).collect();
        rng::shuffle(&mut rng::stream(seed, "workload/late-switch", *d as u64), &mut flags);
        for late in flags {
            out.push(Sample::generate(scenario.task.classes, id, seed, *d, late));
            id += 1;
        }
    }
    out
}

/// Indicators from unit 0 of each modality under the scenario's minimal configuration.
pub fn sample_indicators(scenario: &Scenario, world: &World, sample: &Sample) -> ModalityIndicators {
    let first: Vec<Vec<f64>> = (0..scenario.modality_count())
        .map(|m| sample.unit_features(world, m, scenario.config_spaces[m].sensing[0].units_per_window, 0))
        .collect();
    indicators(&first).unwrap_or(ModalityIndicators::from_consistency(0.0))
}

pub fn random_assignment(scenario: &Scenario, r: &mut rand_chacha::ChaCha8Rng) -> ConfigAssignment {
    ConfigAssignment::new(
        scenario
            .config_spaces
            .iter()
            .map(|c| LevelPair::new(r.random_range(0..c.sensing.len()), r.random_range(0..c.models.len())))
            .collect(),
    )
}

/// Labeled examples for the accuracy predictor: indicators of a fresh
/// sample, a uniformly drawn assignment, and the surface value plus
/// Gaussian noise of standard deviation `noise`, clamped to `[0, 100]`.
pub fn predictor_dataset(
    scenario: &Scenario,
    surface: &AccuracySurface,
    count: usize,
    noise: f64,
    seed: u64,
) -> Vec<PredictorExample> {
    let world = World::for_scenario(scenario);
    let samples = gen_samples(scenario, count, DifficultyMix::EVEN, seed);
    let mut r = rng::stream(seed, "workload/predictor", 0);
    samples
        .iter()
        .map(|s| {
            let ind = sample_indicators(scenario, &world, s);
            let assignment = random_assignment(scenario, &mut r);
            let accuracy = (surface.score(&ind, &assignment) + noise * rng::normal(&mut r)).clamp(0.0, 100.0);
            PredictorExample { indicators: ind, assignment, accuracy }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latency::end_to_end_latency;
    use crate::model::validate_scenario;

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            for seed in 0..5 {
                let s = gen_scenario(p, seed).unwrap();
                validate_scenario(s.clone()).unwrap_or_else(|e| panic!("{p}/{seed}: {e}"));
            }
        }
        for l in 2..=8 {
            validate_scenario(gen_scaling_scenario(l, 1)).unwrap();
        }
        assert_eq!(gen_scenario("lrw-like", 0).unwrap().assignment_count(), 81);
        assert_eq!(gen_scaling_scenario(7, 0).assignment_count(), 2401);
        assert!(matches!(gen_scenario("imagenet", 0), Err(WorkloadError::UnknownPreset(_))));
    }

    #[test]
    fn random_preset_is_deterministic() {
        assert_eq!(gen_scenario("random", 9).unwrap(), gen_scenario("random", 9).unwrap());
        assert_ne!(gen_scenario("random", 9).unwrap(), gen_scenario("random", 10).unwrap());
    }

    #[test]
    fn motivation_profile_closed_form() {
        let s = gen_scenario("motivation-av", 0).unwrap();
        let e = end_to_end_latency(&ConfigAssignment::minimal(2), &s, ResourceLevel(0)).unwrap();
        assert_eq!(e.reported_us(s.window_us), 164_000);
    }

    #[test]
    fn surface_shape() {
        let s = gen_scenario("lrw-like", 0).unwrap();
        for seed in 0..20 {
            for kind in [SurfaceKind::Additive, SurfaceKind::Interacting] {
                let f = gen_surface(&s, seed, kind);
                for g in f.sensing_gain.iter().chain(&f.model_gain) {
                    for w in g.windows(3) {
                        assert!(w[2] - w[1] <= w[1] - w[0] + 1e-12, "{g:?}");
                    }
                    assert!(g.windows(2).all(|w| w[1] >= w[0]));
                }
                let ind = ModalityIndicators::from_consistency(0.9);
                let lo = ConfigAssignment::minimal(2);
                let hi = ConfigAssignment::new(vec![LevelPair::new(2, 2); 2]);
                assert!(f.score(&ind, &hi) >= f.score(&ind, &lo));
                for c in [-1.0, 0.0, 1.0] {
                    let ind = ModalityIndicators::from_consistency(c);
                    for a in ConfigAssignment::enumerate(&s) {
                        let v = f.score(&ind, &a);
                        assert!((40.0..=97.0).contains(&v), "{v}");
                    }
                }
            }
        }
    }

    #[test]
    fn difficulty_counts_are_exact() {
        let s = gen_scenario("lrw-like", 0).unwrap();
        let easy = gen_samples(&s, 500, DifficultyMix::EASY, 3);
        assert_eq!(easy.iter().filter(|x| x.is_late_switch()).count(), 10);
        let hard = gen_samples(&s, 500, DifficultyMix::HARD, 3);
        assert_eq!(hard.iter().filter(|x| x.is_late_switch()).count(), 50);
        assert_eq!(DifficultyMix::EVEN.counts(10), [4, 3, 3]);
        assert_eq!(gen_samples(&s, 30, DifficultyMix::EVEN, 1), gen_samples(&s, 30, DifficultyMix::EVEN, 1));
    }

    #[test]
    fn easy_samples_are_more_consistent() {
        let s = gen_scenario("lrw-like", 0).unwrap();
        let w = World::for_scenario(&s);
        let mean = |mix| {
            let v = gen_samples(&s, 200, mix, 4);
            v.iter().map(|x| sample_indicators(&s, &w, x).consistency).sum::<f64>() / v.len() as f64
        };
        assert!(mean(DifficultyMix::EASY) > mean(DifficultyMix::HARD) + 0.1);
    }
}
