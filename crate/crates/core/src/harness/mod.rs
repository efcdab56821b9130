//! Ingestion, alignment, evaluation and the end-to-end scoring pipeline.

pub mod align;
pub mod eval;
pub mod log;
pub mod pca;
pub mod pipeline;
pub mod tables;

pub use align::{align, AlignedRow, Alignment, DEFAULT_TOLERANCE};
pub use eval::{evaluate, EvalReport};
pub use log::{load_log, parse_log, FrameRef, SensorLog};
pub use pca::{pca_diagnostic, standardize, PcaProjection};
pub use pipeline::{evaluate_scores, run_pipeline, score_log, PipelineConfig, PipelineOutput};
