//! Modality indicators and the accuracy predictor.
//!
//! The predictor maps `[consistency, complementarity, one-hot(config)]` to
//! an expected accuracy in percent. The configuration code concatenates,
//! per modality, a one-hot sensing level and a one-hot model level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConfigAssignment, Scenario};
use crate::nn::{Activation, Adam, Mlp, Pass};
use crate::rng;

pub const PREDICTOR_SCHEMA: &str = "pipefuse-predictor/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityIndicators {
    pub consistency: f64,
    pub complementarity: f64,
}

impl ModalityIndicators {
    pub fn from_consistency(consistency: f64) -> Self {
        Self { consistency, complementarity: 1.0 - consistency }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndicatorError {
    #[error("feature vector has zero norm")]
    ZeroVector,
    #[error("vectors have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("indicators need at least two modalities")]
    SingleModality,
}

/// Cosine similarity of two equal-length, non-zero vectors.
pub fn consistency(f1: &[f64], f2: &[f64]) -> Result<f64, IndicatorError> {
    if f1.len() != f2.len() {
        return Err(IndicatorError::LengthMismatch(f1.len(), f2.len()));
    }
    let n1 = f1.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n2 = f2.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(IndicatorError::ZeroVector);
    }
    let dot: f64 = f1.iter().zip(f2).map(|(a, b)| a * b).sum();
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Mean pairwise cosine of first-unit features, each truncated to the
/// narrowest modality's width.
pub fn indicators(first_units: &[Vec<f64>]) -> Result<ModalityIndicators, IndicatorError> {
    if first_units.len() < 2 {
        return Err(IndicatorError::SingleModality);
    }
    let w = first_units.iter().map(Vec::len).min().unwrap_or(0);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..first_units.len() {
        for j in i + 1..first_units.len() {
            total += consistency(&first_units[i][..w], &first_units[j][..w])?;
            pairs += 1;
        }
    }
    Ok(ModalityIndicators::from_consistency(total / pairs as f64))
}

/// Level counts per modality; fixes the one-hot layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub sensing_levels: Vec<usize>,
    pub model_levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("configuration {0} is outside the predictor's encoding")]
pub struct UnknownConfig(pub String);

impl EncodingSpec {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            sensing_levels: s.config_spaces.iter().map(|c| c.sensing.len()).collect(),
            model_levels: s.config_spaces.iter().map(|c| c.models.len()).collect(),
        }
    }

    pub fn input_len(&self) -> usize {
        2 + self.sensing_levels.iter().sum::<usize>() + self.model_levels.iter().sum::<usize>()
    }

    /// Indices of the active one-hot inputs.
    pub fn code(&self, a: &ConfigAssignment) -> Result<Vec<usize>, UnknownConfig> {
        if a.pairs().len() != self.sensing_levels.len() {
            return Err(UnknownConfig(a.to_string()));
        }
        let mut offset = 2;
        let mut out = Vec::with_capacity(2 * a.pairs().len());
        for (m, p) in a.pairs().iter().enumerate() {
            let (ns, nm) = (self.sensing_levels[m], self.model_levels[m]);
            if p.sensing >= ns || p.model >= nm {
                return Err(UnknownConfig(a.to_string()));
            }
            out.push(offset + p.sensing);
            out.push(offset + ns + p.model);
            offset += ns + nm;
        }
        Ok(out)
    }

    pub fn input(&self, ind: &ModalityIndicators, a: &ConfigAssignment) -> Result<Vec<(usize, f64)>, UnknownConfig> {
        let mut x = vec![(0, ind.consistency), (1, ind.complementarity)];
        x.extend(self.code(a)?.into_iter().map(|i| (i, 1.0)));
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub mse: f64,
    pub r2: f64,
}

impl Fit {
    pub fn of(predicted: &[f64], actual: &[f64]) -> Fit {
        let n = actual.len().max(1) as f64;
        let mean = actual.iter().sum::<f64>() / n;
        let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
        let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
        let r2 = if sst == 0.0 {
            if sse == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - sse / sst
        };
        Fit { mse: sse / n, r2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train: Fit,
    pub holdout: Option<Fit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub schema: String,
    pub encoding: EncodingSpec,
    pub net: Mlp,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorExample {
    pub indicators: ModalityIndicators,
    pub assignment: ConfigAssignment,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorHyper {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub holdout_fraction: f64,
}

impl Default for PredictorHyper {
    fn default() -> Self {
        Self { seed: 0, epochs: 2000, learning_rate: 0.02, hidden: 16, holdout_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("accuracy label {0} is outside [0, 100]")]
    LabelOutOfRange(f64),
    #[error(transparent)]
    UnknownConfig(#[from] UnknownConfig),
}

/// Mean squared error over the batch and its gradient with respect to the
/// flattened parameters.
pub fn mse_loss_and_grad(net: &Mlp, xs: &[Vec<(usize, f64)>], ys: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.param_count()];
    let n = xs.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let pass: Pass = net.forward_sparse(x);
        let e = pass.out - y;
        loss += e * e / n;
        net.accumulate_grad(x, &pass, 2.0 * e / n, None, &mut grad);
    }
    (loss, grad)
}

/// Full-batch Adam on MSE. A seeded shuffle holds out
/// `holdout_fraction` of the examples for the reported fit.
pub fn train(
    dataset: &[PredictorExample],
    encoding: &EncodingSpec,
    hyper: &PredictorHyper,
) -> Result<PredictorModel, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(e) = dataset.iter().find(|e| !(0.0..=100.0).contains(&e.accuracy)) {
        return Err(TrainError::LabelOutOfRange(e.accuracy));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng::shuffle(&mut rng::stream(hyper.seed, "predictor/split", 0), &mut order);
    let holdout_n = ((dataset.len() as f64) * hyper.holdout_fraction).floor() as usize;
    let holdout_n = if holdout_n >= dataset.len() { 0 } else { holdout_n };
    let (held, fit_idx) = order.split_at(holdout_n);

    type Batch = (Vec<Vec<(usize, f64)>>, Vec<f64>);
    let encode = |idx: &[usize]| -> Result<Batch, UnknownConfig> {
        let mut xs = Vec::with_capacity(idx.len());
        let mut ys = Vec::with_capacity(idx.len());
        for &i in idx {
            xs.push(encoding.input(&dataset[i].indicators, &dataset[i].assignment)?);
            ys.push(dataset[i].accuracy);
        }
        Ok((xs, ys))
    };
    let (xs, ys) = encode(fit_idx)?;

    let mut net = Mlp::seeded(encoding.input_len(), hyper.hidden, Activation::Softplus, hyper.seed);
    net.b2 = ys.iter().sum::<f64>() / ys.len() as f64;
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), hyper.learning_rate);
    for epoch in 0..hyper.epochs {
        let (loss, grad) = mse_loss_and_grad(&net, &xs, &ys);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(epoch));
        }
        adam.step(&mut params, &grad);
        net.set_params(&params);
    }

    let fit_on = |xs: &[Vec<(usize, f64)>], ys: &[f64]| {
        let p: Vec<f64> = xs.iter().map(|x| net.forward_sparse(x).out.clamp(0.0, 100.0)).collect();
        Fit::of(&p, ys)
    };
    let train_fit = fit_on(&xs, &ys);
    if !train_fit.mse.is_finite() {
        return Err(TrainError::NonFiniteLoss(hyper.epochs));
    }
    let holdout = if held.is_empty() {
        None
    } else {
        let (hx, hy) = encode(held)?;
        Some(fit_on(&hx, &hy))
    };
    Ok(PredictorModel {
        schema: PREDICTOR_SCHEMA.to_string(),
        encoding: encoding.clone(),
        net,
        meta: TrainingMeta {
            seed: hyper.seed,
            epochs: hyper.epochs,
            learning_rate: hyper.learning_rate,
            train: train_fit,
            holdout,
        },
    })
}

impl PredictorModel {
    /// Unclamped network output.
    pub fn raw(&self, ind: &ModalityIndicators, a: &ConfigAssignment) -> Result<f64, UnknownConfig> {
        Ok(self.net.forward_sparse(&self.encoding.input(ind, a)?).out)
    }

    pub fn evaluate(&self, dataset: &[PredictorExample]) -> Result<Fit, UnknownConfig> {
        let p = dataset.iter().map(|e| predict(self, &e.indicators, &e.assignment)).collect::<Result<Vec<_>, _>>()?;
        let y: Vec<f64> = dataset.iter().map(|e| e.accuracy).collect();
        Ok(Fit::of(&p, &y))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelFileError {
    #[error("model file is not valid JSON: {0}")]
    Parse(String),
    #[error("model schema `{found}` is not `{expected}`")]
    SchemaVersionMismatch { expected: String, found: String },
}

/// Pretty JSON with shortest round-trip float formatting.
pub(crate) fn model_to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("model types serialize");
    s.push('\n');
    s
}

pub(crate) fn model_from_json<T: serde::de::DeserializeOwned>(text: &str, expected: &str) -> Result<T, ModelFileError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelFileError::Parse(e.to_string()))?;
    let found = v.get("schema").and_then(|s| s.as_str()).unwrap_or_default();
    if found != expected {
        return Err(ModelFileError::SchemaVersionMismatch { expected: expected.into(), found: found.into() });
    }
    serde_json::from_str(text).map_err(|e| ModelFileError::Parse(e.to_string()))
}

impl PredictorModel {
    pub fn to_json(&self) -> String {
        model_to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        model_from_json(text, PREDICTOR_SCHEMA)
    }
}

/// Estimated accuracy in percent, clamped to `[0, 100]`.
pub fn predict(model: &PredictorModel, ind: &ModalityIndicators, a: &ConfigAssignment) -> Result<f64, UnknownConfig> {
    Ok(model.raw(ind, a)?.clamp(0.0, 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevelPair;

    #[test]
    fn cosine_cases() {
        assert!((consistency(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(consistency(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((consistency(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(consistency(&[0.0, 0.0], &[1.0, 1.0]), Err(IndicatorError::ZeroVector));
    }

    #[test]
    fn pairwise_mean() {
        let same = vec![vec![1.0, 2.0, 3.0]; 3];
        let i = indicators(&same).unwrap();
        assert!((i.consistency - 1.0).abs() < 1e-12);
        assert_eq!(i.complementarity, 1.0 - i.consistency);
        // cosines (a,b)=1, (a,c)=0, (b,c)=0
        let i = indicators(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((i.consistency - 1.0 / 3.0).abs() < 1e-15);
        assert!((i.complementarity - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(indicators(&[vec![1.0]]), Err(IndicatorError::SingleModality));
    }

    #[test]
    fn mixed_widths_truncate() {
        // scratch computation: [3,4] . [3,0] / (5 * 3) = 0.6
        let i = indicators(&[vec![3.0, 4.0, 9.0], vec![3.0, 0.0]]).unwrap();
        assert!((i.consistency - 0.6).abs() < 1e-15);
    }

    #[test]
    fn one_hot_layout() {
        let e = EncodingSpec { sensing_levels: vec![3, 2], model_levels: vec![3, 1] };
        assert_eq!(e.input_len(), 2 + 6 + 3);
        let a = ConfigAssignment::new(vec![LevelPair::new(2, 1), LevelPair::new(1, 0)]);
        assert_eq!(e.code(&a).unwrap(), vec![4, 6, 9, 10]);
        let bad = ConfigAssignment::new(vec![LevelPair::new(3, 0), LevelPair::new(0, 0)]);
        assert!(e.code(&bad).is_err());
    }

    #[test]
    fn clamps_output() {
        let e = EncodingSpec { sensing_levels: vec![1, 1], model_levels: vec![1, 1] };
        let mut net = Mlp::zeros(e.input_len(), 2, Activation::Softplus);
        net.b2 = 103.2;
        let model = PredictorModel {
            schema: PREDICTOR_SCHEMA.into(),
            encoding: e,
            net,
            meta: TrainingMeta { seed: 0, epochs: 0, learning_rate: 0.0, train: Fit { mse: 0.0, r2: 1.0 }, holdout: None },
        };
        let a = ConfigAssignment::minimal(2);
        let ind = ModalityIndicators::from_consistency(0.5);
        assert_eq!(model.raw(&ind, &a).unwrap(), 103.2);
        assert_eq!(predict(&model, &ind, &a).unwrap(), 100.0);
    }

    #[test]
    fn constant_target_is_learned() {
        let e = EncodingSpec { sensing_levels: vec![2, 2], model_levels: vec![2, 2] };
        let data: Vec<PredictorExample> = (0..40)
            .map(|i| PredictorExample {
                indicators: ModalityIndicators::from_consistency((i % 7) as f64 / 7.0),
                assignment: ConfigAssignment::new(vec![LevelPair::new(i % 2, (i / 2) % 2), LevelPair::new((i / 4) % 2, 0)]),
                accuracy: 71.0,
            })
            .collect();
        let m = train(&data, &e, &PredictorHyper { epochs: 300, ..Default::default() }).unwrap();
        assert!(m.meta.train.mse < 1e-4, "{:?}", m.meta.train);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let e = EncodingSpec { sensing_levels: vec![2, 3], model_levels: vec![3, 2] };
        let model = PredictorModel {
            schema: PREDICTOR_SCHEMA.into(),
            encoding: e.clone(),
            net: Mlp::seeded(e.input_len(), 16, Activation::Softplus, 11),
            meta: TrainingMeta { seed: 11, epochs: 1, learning_rate: 0.1, train: Fit { mse: 0.1, r2: 0.3 }, holdout: None },
        };
        let back = PredictorModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let bits = |m: &PredictorModel| m.net.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&model));
        let wrong = model.to_json().replace(PREDICTOR_SCHEMA, "pipefuse-predictor/0");
        assert!(matches!(PredictorModel::from_json(&wrong), Err(ModelFileError::SchemaVersionMismatch { .. })));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let e = EncodingSpec { sensing_levels: vec![1], model_levels: vec![1] };
        assert_eq!(train(&[], &e, &PredictorHyper::default()).unwrap_err(), TrainError::EmptyDataset);
    }
}
