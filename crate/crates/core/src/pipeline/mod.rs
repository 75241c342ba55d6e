//! Orchestration: run configuration, full-map inference, the evaluation
//! protocol and run manifests.

mod config;
mod infer;
mod manifest;
mod protocol;

pub use config::{ModelKind, PipelineConfig};
pub use infer::{
    classify_map_cnn, classify_map_cnn_threads, classify_map_pixel, regularize, worker_threads, THREADS_ENV,
};
pub use manifest::{git_blob_hash, FileRecord, RunManifest};
pub use protocol::{
    evaluate_cnn, evaluate_pixel, evaluate_protocol, train_baseline, ProtocolOptions, ProtocolReport, Readout,
};
