//! Discrete-event simulator for multimodal inference on one device: latency model,
//! pipelined engine, feature aggregation, accuracy predictor, configuration search
//! and early skipping of the slow modality.

pub mod aggregation;
pub mod engine;
pub mod features;
pub mod latency;
pub mod model;
pub mod nn;
pub mod optimizer;
pub mod predictor;
pub mod rng;
pub mod sample;
pub mod skip;
pub mod trace;
pub mod workload;
