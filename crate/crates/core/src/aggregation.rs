//! Temporal aggregation of per-unit features.
//!
//! Two feature-augmentation steps widen the temporal context of units that
//! were encoded independently:
//!
//! * **alternating shift**: the leading channel group of unit `i` is taken
//!   from unit `i - k` and the trailing group from unit `i + k`; boundary
//!   units keep their own values.
//! * **multi-scale differences**: `X_t - X_{t-s}` for each scale `s`, each
//!   passed through a bias-free linear map and mean-pooled over time.
//!
//! [`aggregate`] concatenates the mean of the shifted rows with the pooled
//! difference encodings. Every step is linear in the input matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::model::{AggregationSettings, DiffSource};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error("{groups} channel groups requested but only {channels} channels")]
    GroupExceedsChannels { groups: usize, channels: usize },
    #[error("shift needs a complete window ({valid_prefix} of {rows} rows valid)")]
    IncompleteWindow { valid_prefix: usize, rows: usize },
    #[error("scale {scale} needs at least {} valid rows, have {valid_prefix}", scale + 1)]
    WindowTooShort { scale: usize, valid_prefix: usize },
    #[error("encoder for scale index {index} expects {expected} channels, features have {got}")]
    EncoderWidth { index: usize, expected: usize, got: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub n_groups: usize,
    pub shift_distance: usize,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self { n_groups: 3, shift_distance: 1 }
    }
}

impl ShiftSpec {
    /// Channel ranges of each group. The first and last groups get
    /// `C / n` channels; the remainder is spread over the middle groups
    /// left to right (onto the first group when there is no middle group).
    pub fn groups(&self, channels: usize) -> Result<Vec<std::ops::Range<usize>>, AggregationError> {
        let n = self.n_groups;
        if n == 0 || self.shift_distance == 0 {
            return Err(AggregationError::InvalidSpec("n_groups and shift_distance must be >= 1"));
        }
        if n > channels {
            return Err(AggregationError::GroupExceedsChannels { groups: n, channels });
        }
        let base = channels / n;
        let mut sizes = vec![base; n];
        let rem = channels % n;
        if n > 2 {
            for i in 0..rem {
                sizes[1 + i % (n - 2)] += 1;
            }
        } else {
            sizes[0] += rem;
        }
        let mut start = 0;
        Ok(sizes
            .into_iter()
            .map(|len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect())
    }
}

/// Bias-free linear map `R^cols -> R^rows`, row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

impl LinearMap {
    pub fn identity(n: usize) -> Self {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, weights }
    }

    /// Weights drawn from `N(0, 1/cols)`.
    pub fn seeded(rows: usize, cols: usize, seed: u64, id: u64) -> Self {
        let mut r = rng::stream(seed, "aggregation/encoder", id);
        let scale = 1.0 / (cols as f64).sqrt();
        let weights = (0..rows * cols).map(|_| rng::normal(&mut r) * scale).collect();
        Self { rows, cols, weights }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weights.chunks(self.cols).map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSpec {
    /// Strictly increasing positive scales.
    pub scales: Vec<usize>,
    /// One temporal encoder per scale.
    pub encoders: Vec<LinearMap>,
}

impl DiffSpec {
    pub fn identity(scales: Vec<usize>, channels: usize) -> Self {
        let encoders = scales.iter().map(|_| LinearMap::identity(channels)).collect();
        Self { scales, encoders }
    }

    pub fn seeded(scales: Vec<usize>, channels: usize, width: usize, seed: u64) -> Self {
        let encoders = (0..scales.len()).map(|i| LinearMap::seeded(width, channels, seed, i as u64)).collect();
        Self { scales, encoders }
    }

    pub fn max_scale(&self) -> usize {
        self.scales.iter().copied().max().unwrap_or(0)
    }

    fn check(&self, channels: usize) -> Result<(), AggregationError> {
        if self.scales.is_empty() || self.scales[0] == 0 || !self.scales.windows(2).all(|w| w[0] < w[1]) {
            return Err(AggregationError::InvalidSpec("scales must be strictly increasing and positive"));
        }
        if self.encoders.len() != self.scales.len() {
            return Err(AggregationError::InvalidSpec("one encoder per scale"));
        }
        for (index, e) in self.encoders.iter().enumerate() {
            if e.cols != channels {
                return Err(AggregationError::EncoderWidth { index, expected: e.cols, got: channels });
            }
        }
        Ok(())
    }

    pub fn output_width(&self) -> usize {
        self.encoders.iter().map(|e| e.rows).sum()
    }
}

/// Everything [`aggregate_with`] needs for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub shift: ShiftSpec,
    pub diff: DiffSpec,
    pub diff_source: DiffSource,
}

impl AggregationSpec {
    pub fn from_settings(settings: &AggregationSettings, channels: usize, modality: usize) -> Self {
        let seed = rng::child_seed(settings.encoder_seed, "aggregation/modality", modality as u64);
        Self {
            shift: ShiftSpec { n_groups: settings.shift_groups, shift_distance: settings.shift_distance },
            diff: DiffSpec::seeded(settings.diff_scales.clone(), channels, settings.encoder_width, seed),
            diff_source: settings.diff_source,
        }
    }

    /// Length of the aggregate vector for `channels` input channels.
    pub fn output_len(&self, channels: usize) -> usize {
        channels + self.diff.output_width()
    }
}

/// Replaces the first channel group of interior unit `i` with unit `i - k`'s
/// and the last group with unit `i + k`'s. Units with `i < k` or
/// `i >= N - k` are copied unchanged, and `n_groups == 1` is the identity.
pub fn alternating_shift(features: &FeatureMatrix, spec: &ShiftSpec) -> Result<FeatureMatrix, AggregationError> {
    if !features.is_complete() {
        return Err(AggregationError::IncompleteWindow { valid_prefix: features.valid_prefix(), rows: features.rows() });
    }
    let groups = spec.groups(features.cols())?;
    let mut out = features.clone();
    let n = features.rows();
    let k = spec.shift_distance;
    if spec.n_groups == 1 || n < 2 * k + 1 {
        return Ok(out);
    }
    let first = groups[0].clone();
    let last = groups[groups.len() - 1].clone();
    for i in k..n - k {
        let back = &features.row(i - k)[first.clone()];
        out.row_mut(i)[first.clone()].copy_from_slice(back);
        let fwd = &features.row(i + k)[last.clone()];
        out.row_mut(i)[last.clone()].copy_from_slice(fwd);
    }
    Ok(out)
}

/// One matrix per scale `s`, with rows `X_t - X_{t-s}` for `t` in `[s, valid_prefix)`.
pub fn temporal_differences(features: &FeatureMatrix, spec: &DiffSpec) -> Result<Vec<FeatureMatrix>, AggregationError> {
    let valid = features.valid_prefix();
    if let Some(&scale) = spec.scales.iter().find(|&&s| valid < s + 1) {
        return Err(AggregationError::WindowTooShort { scale, valid_prefix: valid });
    }
    Ok(spec.scales.iter().map(|&s| differences_at(features, s)).collect())
}

fn differences_at(features: &FeatureMatrix, s: usize) -> FeatureMatrix {
    let valid = features.valid_prefix();
    let cols = features.cols();
    let rows = valid.saturating_sub(s);
    let mut data = Vec::with_capacity(rows * cols);
    for t in s..valid {
        data.extend(features.row(t).iter().zip(features.row(t - s)).map(|(a, b)| a - b));
    }
    FeatureMatrix::from_flat(rows, cols, data, rows).expect("difference matrix shape")
}

fn column_mean(m: &FeatureMatrix) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    let n = m.valid_prefix();
    if n == 0 {
        return acc;
    }
    for r in 0..n {
        for (a, x) in acc.iter_mut().zip(m.row(r)) {
            *a += x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

/// Unimodal feature vector of a window: the mean of the shifted rows
/// followed by, for each scale, the mean-pooled linear encoding of the
/// difference rows.
///
/// Only the valid prefix is used; the shift treats that prefix as its own
/// window. A scale with no difference rows in the prefix contributes a
/// zero block, so partial windows always produce a vector of the full width.
pub fn aggregate(features: &FeatureMatrix, shift: &ShiftSpec, diff: &DiffSpec) -> Result<Vec<f64>, AggregationError> {
    aggregate_with(features, &AggregationSpec { shift: *shift, diff: diff.clone(), diff_source: DiffSource::PreShift })
}

pub fn aggregate_with(features: &FeatureMatrix, spec: &AggregationSpec) -> Result<Vec<f64>, AggregationError> {
    let channels = features.cols();
    spec.shift.groups(channels)?;
    spec.diff.check(channels)?;

    let window = features.prefix();
    let shifted = alternating_shift(&window, &spec.shift)?;
    let mut out = column_mean(&shifted);

    let source = match spec.diff_source {
        DiffSource::PreShift => &window,
        DiffSource::PostShift => &shifted,
    };
    for (&s, encoder) in spec.diff.scales.iter().zip(&spec.diff.encoders) {
        if source.valid_prefix() > s {
            let pooled = column_mean(&differences_at(source, s));
            out.extend(encoder.apply(&pooled));
        } else {
            out.extend(std::iter::repeat_n(0.0, encoder.rows));
        }
    }
    Ok(out)
}
