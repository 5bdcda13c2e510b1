//! Domain types shared across the crate: modalities, configuration spaces,
//! assignments, the latency lookup table and the scenario document.
//!
//! All durations are integer microseconds of virtual time.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Schema tag carried by every scenario file.
pub const SCENARIO_SCHEMA: &str = "pipefuse-scenario/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modality {
    pub id: usize,
    pub name: String,
    /// Feature width `C` of one encoded unit.
    pub channels: usize,
}

/// One sensing granularity: how many units a window is cut into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub level: usize,
    pub units_per_window: u32,
    pub window_us: u64,
}

impl SensingConfig {
    /// Sensing interval `L_S = window / N`, or `None` when the division is not exact.
    pub fn sensing_interval_us(&self) -> Option<u64> {
        if self.units_per_window == 0 || !self.window_us.is_multiple_of(u64::from(self.units_per_window)) {
            None
        } else {
            Some(self.window_us / u64::from(self.units_per_window))
        }
    }

    /// Like [`Self::sensing_interval_us`] but for configs already validated.
    pub fn interval_us(&self) -> u64 {
        self.window_us / u64::from(self.units_per_window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub level: usize,
    pub label: String,
}

/// Candidate sensing and model configurations of one modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub modality: usize,
    pub sensing: Vec<SensingConfig>,
    pub models: Vec<ModelConfig>,
}

impl ConfigSpace {
    pub fn pair_count(&self) -> usize {
        self.sensing.len() * self.models.len()
    }

    /// All `(sensing, model)` pairs, sensing-major.
    pub fn pairs(&self) -> impl Iterator<Item = LevelPair> + '_ {
        (0..self.sensing.len())
            .flat_map(move |s| (0..self.models.len()).map(move |m| LevelPair::new(s, m)))
    }
}

/// Sensing and model level chosen for one modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LevelPair {
    pub sensing: usize,
    pub model: usize,
}

impl LevelPair {
    pub const fn new(sensing: usize, model: usize) -> Self {
        Self { sensing, model }
    }
}

impl fmt::Display for LevelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}m{}", self.sensing, self.model)
    }
}

/// One `(sensing, model)` pair per modality, indexed by modality id.
///
/// Holding exactly one pair per modality is what makes the "one
/// configuration per modality" constraint hold by construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigAssignment(pub Vec<LevelPair>);

impl ConfigAssignment {
    pub fn new(pairs: Vec<LevelPair>) -> Self {
        Self(pairs)
    }

    /// The all-zero assignment for `modalities` modalities.
    pub fn minimal(modalities: usize) -> Self {
        Self(vec![LevelPair::new(0, 0); modalities])
    }

    pub fn pairs(&self) -> &[LevelPair] {
        &self.0
    }

    pub fn get(&self, modality: usize) -> Option<LevelPair> {
        self.0.get(modality).copied()
    }

    pub fn with(&self, modality: usize, pair: LevelPair) -> Self {
        let mut next = self.clone();
        next.0[modality] = pair;
        next
    }

    pub fn check(&self, scenario: &Scenario) -> Result<(), AssignmentError> {
        if self.0.len() != scenario.modalities.len() {
            return Err(AssignmentError::WrongArity {
                expected: scenario.modalities.len(),
                got: self.0.len(),
            });
        }
        for (modality, pair) in self.0.iter().enumerate() {
            let space = &scenario.config_spaces[modality];
            if pair.sensing >= space.sensing.len() || pair.model >= space.models.len() {
                return Err(AssignmentError::OutOfSpace { modality, pair: *pair });
            }
        }
        Ok(())
    }

    /// Enumerates every assignment of `scenario` in lexicographic order
    /// (modality 0 most significant, sensing before model).
    pub fn enumerate(scenario: &Scenario) -> Vec<ConfigAssignment> {
        let mut out = vec![ConfigAssignment(Vec::new())];
        for space in &scenario.config_spaces {
            let mut next = Vec::with_capacity(out.len() * space.pair_count());
            for prefix in &out {
                for pair in space.pairs() {
                    let mut a = prefix.0.clone();
                    a.push(pair);
                    next.push(ConfigAssignment(a));
                }
            }
            out = next;
        }
        out
    }
}

impl fmt::Display for ConfigAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Parses the display form, e.g. `s1m2/s0m0`.
impl std::str::FromStr for ConfigAssignment {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, String> {
        let pair = |p: &str| -> Option<LevelPair> {
            let (s, m) = p.strip_prefix('s')?.split_once('m')?;
            Some(LevelPair::new(s.parse().ok()?, m.parse().ok()?))
        };
        text.split('/')
            .map(|p| pair(p.trim()).ok_or_else(|| format!("`{p}` is not of the form s<sensing>m<model>")))
            .collect::<Result<Vec<_>, _>>()
            .map(ConfigAssignment)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("assignment has {got} pairs, scenario has {expected} modalities")]
    WrongArity { expected: usize, got: usize },
    #[error("modality {modality}: {pair} is outside the configuration space")]
    OutOfSpace { modality: usize, pair: LevelPair },
}

/// Index into [`LatencyProfile::resource_levels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceLevel(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfileKey {
    pub modality: usize,
    pub sensing: usize,
    pub model: usize,
    pub resource: ResourceLevel,
}

/// Profiled per-unit encode latency `L_E` and aggregation latency `L_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitCost {
    pub encode_us: u64,
    pub aggregate_us: u64,
}

/// Offline latency lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ProfileDoc", into = "ProfileDoc")]
pub struct LatencyProfile {
    pub resource_levels: Vec<String>,
    /// Fusion plus prediction latency `L_F`.
    pub fusion_us: u64,
    table: BTreeMap<ProfileKey, UnitCost>,
    /// Problems found while reading the document; surfaced by validation.
    issues: Vec<Violation>,
}

impl LatencyProfile {
    pub fn new(resource_levels: Vec<String>, fusion_us: u64) -> Self {
        Self { resource_levels, fusion_us, table: BTreeMap::new(), issues: Vec::new() }
    }

    pub fn insert(&mut self, key: ProfileKey, cost: UnitCost) {
        self.table.insert(key, cost);
    }

    pub fn remove(&mut self, key: &ProfileKey) -> Option<UnitCost> {
        self.table.remove(key)
    }

    pub fn get(&self, key: &ProfileKey) -> Option<UnitCost> {
        self.table.get(key).copied()
    }

    pub fn lookup(
        &self,
        modality: usize,
        pair: LevelPair,
        resource: ResourceLevel,
    ) -> Result<UnitCost, MissingProfileEntry> {
        let key = ProfileKey { modality, sensing: pair.sensing, model: pair.model, resource };
        self.get(&key).ok_or(MissingProfileEntry(key))
    }

    pub fn level_index(&self, label: &str) -> Option<ResourceLevel> {
        self.resource_levels.iter().position(|l| l == label).map(ResourceLevel)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ProfileKey, &UnitCost)> {
        self.table.iter()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error(
    "no profile entry for modality {} sensing {} model {} resource {}",
    .0.modality, .0.sensing, .0.model, .0.resource.0
)]
pub struct MissingProfileEntry(pub ProfileKey);

#[derive(Serialize, Deserialize)]
struct ProfileDoc {
    resource_levels: Vec<String>,
    fusion_us: u64,
    #[serde(default)]
    entries: Vec<ProfileEntryDoc>,
}

#[derive(Serialize, Deserialize)]
struct ProfileEntryDoc {
    modality: usize,
    sensing: usize,
    model: usize,
    resource: String,
    encode_us: u64,
    aggregate_us: u64,
}

impl From<ProfileDoc> for LatencyProfile {
    fn from(doc: ProfileDoc) -> Self {
        let mut profile = LatencyProfile::new(doc.resource_levels, doc.fusion_us);
        for e in doc.entries {
            let Some(resource) = profile.level_index(&e.resource) else {
                profile.issues.push(Violation::UnknownResourceLevel { label: e.resource });
                continue;
            };
            let key = ProfileKey { modality: e.modality, sensing: e.sensing, model: e.model, resource };
            let cost = UnitCost { encode_us: e.encode_us, aggregate_us: e.aggregate_us };
            if profile.table.insert(key, cost).is_some() {
                profile.issues.push(Violation::DuplicateProfileEntry {
                    modality: key.modality,
                    sensing: key.sensing,
                    model: key.model,
                    resource: profile.resource_levels[resource.0].clone(),
                });
            }
        }
        profile
    }
}

impl From<LatencyProfile> for ProfileDoc {
    fn from(p: LatencyProfile) -> Self {
        let entries = p
            .table
            .iter()
            .map(|(k, c)| ProfileEntryDoc {
                modality: k.modality,
                sensing: k.sensing,
                model: k.model,
                resource: p.resource_levels[k.resource.0].clone(),
                encode_us: c.encode_us,
                aggregate_us: c.aggregate_us,
            })
            .collect();
        ProfileDoc { resource_levels: p.resource_levels, fusion_us: p.fusion_us, entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Blocking,
    NonBlocking,
    Pipelined,
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionMode::Blocking => "blocking",
            ExecutionMode::NonBlocking => "non_blocking",
            ExecutionMode::Pipelined => "pipelined",
        })
    }
}

impl std::str::FromStr for ExecutionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blocking" => Ok(ExecutionMode::Blocking),
            "non_blocking" | "non-blocking" => Ok(ExecutionMode::NonBlocking),
            "pipelined" => Ok(ExecutionMode::Pipelined),
            other => Err(format!("unknown execution mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub time_us: u64,
    pub level: String,
}

/// Which matrix the temporal differences are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiffSource {
    #[default]
    PreShift,
    PostShift,
}

/// Temporal aggregation settings applied to every modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationSettings {
    pub shift_groups: usize,
    pub shift_distance: usize,
    pub diff_scales: Vec<usize>,
    /// Output width of the per-scale linear temporal encoder.
    pub encoder_width: usize,
    pub encoder_seed: u64,
    #[serde(default)]
    pub diff_source: DiffSource,
}

impl Default for AggregationSettings {
    fn default() -> Self {
        Self {
            shift_groups: 3,
            shift_distance: 1,
            diff_scales: vec![1, 2],
            encoder_width: 4,
            encoder_seed: 0,
            diff_source: DiffSource::PreShift,
        }
    }
}

/// The synthetic classification task samples are drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub classes: usize,
    pub seed: u64,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    pub window_us: u64,
    /// Latency budget `T_max`, compared against reported latency (window excluded).
    pub t_max_us: u64,
    pub execution_mode: ExecutionMode,
    #[serde(default)]
    pub skip_checkpoints: Vec<f64>,
    pub tau: f64,
    pub accuracy_surface_seed: u64,
    /// Virtual cost charged for one gate evaluation.
    #[serde(default = "default_gate_cost")]
    pub gate_eval_cost_us: u64,
    /// Virtual cost of the minimal-config probe encode that precedes an
    /// optimizer decision.
    #[serde(default = "default_probe_cost")]
    pub probe_cost_us: u64,
    /// Extra virtual cost charged when an optimizer decision switches configuration.
    #[serde(default)]
    pub switch_cost_us: u64,
    pub task: TaskSpec,
    pub aggregation: AggregationSettings,
    pub modalities: Vec<Modality>,
    pub config_spaces: Vec<ConfigSpace>,
    pub profile: LatencyProfile,
    pub resource_schedule: Vec<ScheduleEntry>,
}

fn default_gate_cost() -> u64 {
    1_000
}

fn default_probe_cost() -> u64 {
    1_000
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if scenario.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema { found: scenario.schema });
        }
        Ok(validate_scenario(scenario)?)
    }

    /// Canonical text form; parsing it back yields an equal scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Hex SHA-256 of the canonical text.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn modality_count(&self) -> usize {
        self.modalities.len()
    }

    pub fn sensing(&self, modality: usize, pair: LevelPair) -> &SensingConfig {
        &self.config_spaces[modality].sensing[pair.sensing]
    }

    /// Total number of assignments in the configuration space.
    pub fn assignment_count(&self) -> usize {
        self.config_spaces.iter().map(ConfigSpace::pair_count).product()
    }

    pub fn with_mode(&self, mode: ExecutionMode) -> Scenario {
        Scenario { execution_mode: mode, ..self.clone() }
    }

    /// Same scenario with speculative skipping turned off.
    pub fn without_skipping(&self) -> Scenario {
        Scenario { skip_checkpoints: Vec::new(), ..self.clone() }
    }

    /// Resource level active at virtual time `t_us`; intervals are left-closed.
    pub fn resource_at(&self, t_us: u64) -> ResourceLevel {
        let label = self
            .resource_schedule
            .iter()
            .take_while(|e| e.time_us <= t_us)
            .last()
            .or_else(|| self.resource_schedule.first())
            .map(|e| e.level.as_str());
        label.and_then(|l| self.profile.level_index(l)).unwrap_or(ResourceLevel(0))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unsupported scenario schema `{found}` (expected `{SCENARIO_SCHEMA}`)")]
    Schema { found: String },
    #[error(transparent)]
    Invalid(#[from] ValidationReport),
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    NoModalities,
    NonContiguousModalityIds { position: usize, id: usize },
    ZeroChannels { modality: usize },
    ConfigSpaceCount { expected: usize, got: usize },
    EmptyConfigSpace { modality: usize },
    LevelOutOfOrder { modality: usize, kind: String, position: usize, level: usize },
    ZeroUnits { modality: usize, level: usize },
    IndivisibleWindow { modality: usize, level: usize, window_us: u64, units: u32 },
    WindowMismatch { modality: usize, level: usize, window_us: u64 },
    MissingProfileEntry { modality: usize, sensing: usize, model: usize, resource: String },
    DuplicateProfileEntry { modality: usize, sensing: usize, model: usize, resource: String },
    UnknownResourceLevel { label: String },
    NoResourceLevels,
    ZeroEncodeLatency { modality: usize, sensing: usize, model: usize, resource: String },
    BadCheckpointOrder { checkpoints: Vec<f64> },
    TauOutOfRange { tau: f64 },
    NonPositiveTMax,
    NonPositiveWindow,
    EmptyResourceSchedule,
    ScheduleNotAtZero { first_us: u64 },
    ScheduleNotIncreasing { position: usize },
    ShiftGroupsExceedChannels { modality: usize, groups: usize, channels: usize },
    BadShiftSpec,
    BadDiffScales { scales: Vec<usize> },
    TooFewClasses { classes: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&json)
    }
}

/// Every violation found in a scenario, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario has {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

impl ValidationReport {
    pub fn contains(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

/// Returns the scenario unchanged if every invariant holds.
pub fn validate_scenario(s: Scenario) -> Result<Scenario, ValidationReport> {
    let violations = collect_violations(&s);
    if violations.is_empty() {
        Ok(s)
    } else {
        Err(ValidationReport { violations })
    }
}

fn collect_violations(s: &Scenario) -> Vec<Violation> {
    let mut v = Vec::new();

    if s.window_us == 0 {
        v.push(Violation::NonPositiveWindow);
    }
    if s.t_max_us == 0 {
        v.push(Violation::NonPositiveTMax);
    }
    if !(0.0..=1.0).contains(&s.tau) {
        v.push(Violation::TauOutOfRange { tau: s.tau });
    }
    let cps = &s.skip_checkpoints;
    let in_range = cps.iter().all(|&c| c > 0.0 && c < 1.0);
    let increasing = cps.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !increasing {
        v.push(Violation::BadCheckpointOrder { checkpoints: cps.clone() });
    }
    if s.task.classes < 2 {
        v.push(Violation::TooFewClasses { classes: s.task.classes });
    }

    let agg = &s.aggregation;
    if agg.shift_groups == 0 || agg.shift_distance == 0 || agg.encoder_width == 0 {
        v.push(Violation::BadShiftSpec);
    }
    let scales_ok = !agg.diff_scales.is_empty()
        && agg.diff_scales[0] >= 1
        && agg.diff_scales.windows(2).all(|w| w[0] < w[1]);
    if !scales_ok {
        v.push(Violation::BadDiffScales { scales: agg.diff_scales.clone() });
    }

    if s.modalities.is_empty() {
        v.push(Violation::NoModalities);
    }
    for (position, m) in s.modalities.iter().enumerate() {
        if m.id != position {
            v.push(Violation::NonContiguousModalityIds { position, id: m.id });
        }
        if m.channels == 0 {
            v.push(Violation::ZeroChannels { modality: m.id });
        } else if agg.shift_groups > m.channels {
            v.push(Violation::ShiftGroupsExceedChannels {
                modality: m.id,
                groups: agg.shift_groups,
                channels: m.channels,
            });
        }
    }

    if s.config_spaces.len() != s.modalities.len() {
        v.push(Violation::ConfigSpaceCount { expected: s.modalities.len(), got: s.config_spaces.len() });
    }
    for (position, space) in s.config_spaces.iter().enumerate() {
        let modality = space.modality;
        if modality != position {
            v.push(Violation::NonContiguousModalityIds { position, id: modality });
        }
        if space.sensing.is_empty() || space.models.is_empty() {
            v.push(Violation::EmptyConfigSpace { modality });
        }
        for (i, sc) in space.sensing.iter().enumerate() {
            if sc.level != i {
                v.push(Violation::LevelOutOfOrder {
                    modality,
                    kind: "sensing".into(),
                    position: i,
                    level: sc.level,
                });
            }
            if sc.units_per_window == 0 {
                v.push(Violation::ZeroUnits { modality, level: sc.level });
            } else if sc.sensing_interval_us().is_none() {
                v.push(Violation::IndivisibleWindow {
                    modality,
                    level: sc.level,
                    window_us: sc.window_us,
                    units: sc.units_per_window,
                });
            }
            if sc.window_us != s.window_us {
                v.push(Violation::WindowMismatch { modality, level: sc.level, window_us: sc.window_us });
            }
        }
        for (i, mc) in space.models.iter().enumerate() {
            if mc.level != i {
                v.push(Violation::LevelOutOfOrder {
                    modality,
                    kind: "model".into(),
                    position: i,
                    level: mc.level,
                });
            }
        }
    }

    let profile = &s.profile;
    v.extend(profile.issues.iter().cloned());
    if profile.resource_levels.is_empty() {
        v.push(Violation::NoResourceLevels);
    }
    for space in &s.config_spaces {
        for pair in space.pairs() {
            for (r, label) in profile.resource_levels.iter().enumerate() {
                let key = ProfileKey {
                    modality: space.modality,
                    sensing: pair.sensing,
                    model: pair.model,
                    resource: ResourceLevel(r),
                };
                match profile.get(&key) {
                    None => v.push(Violation::MissingProfileEntry {
                        modality: key.modality,
                        sensing: key.sensing,
                        model: key.model,
                        resource: label.clone(),
                    }),
                    Some(c) if c.encode_us == 0 => v.push(Violation::ZeroEncodeLatency {
                        modality: key.modality,
                        sensing: key.sensing,
                        model: key.model,
                        resource: label.clone(),
                    }),
                    Some(_) => {}
                }
            }
        }
    }

    match s.resource_schedule.first() {
        None => v.push(Violation::EmptyResourceSchedule),
        Some(first) if first.time_us != 0 => v.push(Violation::ScheduleNotAtZero { first_us: first.time_us }),
        Some(_) => {}
    }
    for (position, w) in s.resource_schedule.windows(2).enumerate() {
        if w[1].time_us <= w[0].time_us {
            v.push(Violation::ScheduleNotIncreasing { position: position + 1 });
        }
    }
    for e in &s.resource_schedule {
        if profile.level_index(&e.level).is_none() {
            v.push(Violation::UnknownResourceLevel { label: e.level.clone() });
        }
    }
    v
}

#[cfg(test)]
pub(crate) use tests::two_modality_scenario;
