//! Entropic losses for out-of-distribution detection.
//!
//! The crate implements a family of distance-based classification heads
//! (IsoMax, IsoMax+, DisMax) that replace the usual affine softmax layer,
//! the detection scores that go with them (maximum probability, negative
//! entropy, minimum distance, max logit, and the max-mean-logit-entropy
//! composite), post-training temperature calibration, and the standard
//! detection and calibration metrics (AUROC, AUPR, TNR@TPR95, DTACC, ECE).
//!
//! Training runs on a small reverse-mode gradient tape over dense `f64`
//! matrices with a finite-difference checker, driven by SGD with Nesterov
//! momentum. Everything is deterministic under a single seed.

pub mod calibration;
pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod report;
pub mod scores;
pub mod seeding;
pub mod tape;
pub mod train;

pub use calibration::{apply_temperature, calibrate_temperature, CalibrationResult};
pub use data::{LabeledDataset, MosaicBatch};
pub use encoder::{Activation, DenseLayer, EncoderSpec};
pub use error::{Error, Result};
pub use eval::{evaluate, DetectionMetrics, EvalReport};
pub use heads::{HeadParams, LossConfig, LossKind};
pub use matrix::Matrix;
pub use model::{Model, ModelParams, ParamMeta};
pub use optimizer::{Sgd, SgdConfig};
pub use scores::ScoreKind;
pub use tape::{finite_diff_check, GradTape, Var};
pub use train::{train, TrainOptions, TrainOutcome};
