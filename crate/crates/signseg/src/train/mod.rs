//! Optimization: losses, the Adam optimizer, run configuration, and the
//! three-stage training schedule.
//!
//! Stage 1 trains the segmentation network alone, stage 2 the handshape
//! classifier alone, and stage 3 the fusion module on top of both finished
//! checkpoints. Each stage returns its best checkpoint by a held-out metric
//! together with a structured per-epoch log.

mod adam;
mod config;
mod losses;
mod recognizer;
mod stages;

pub use adam::{Adam, GradAccum};
pub use config::{parse_config_text, read_config_file, EvalOptions, FileConfig, TrainConfig};
pub use losses::{
    boundary_count_loss, frame_loss, handshape_loss, hard_boundary_count_gap, seg_loss,
    seg_loss_parts, LossConfig, SegLossParts,
};
pub use recognizer::{recognize_spans, segment_examples, train_recognizer, SegmentExample};
pub use stages::{
    infer_labels, params_digest, predicted_labels, train_stage1, train_stage2, train_stage3,
    EpochRecord, StageOutcome,
};
