//! Batch toolkit for predicting per-minute attention levels of classroom
//! lecture archives from non-semantic multimodal features.
//!
//! The pipeline runs in stages: playback logs are parsed and filtered
//! ([`log_ingest`]), turned into per-minute segment-access labels
//! ([`labeling`]), while three modality extractors produce per-segment
//! feature maps — instructor action via masked Lucas-Kanade optical flow
//! ([`action`]), voice spectrograms via an in-house STFT ([`audio`]), and
//! slide progression ([`slides`]). Maps are fused into RGB training samples
//! ([`fuse`]), regressed by small CNNs with manual backprop ([`model`]),
//! and scored with regression metrics plus a 3-class attention zoning
//! ([`eval`]). [`smoothing`] provides the post-hoc temporal filters.

pub mod action;
pub mod audio;
pub mod config;
pub mod eval;
pub mod fixtures;
pub mod fuse;
pub mod imaging;
pub mod labeling;
pub mod log_ingest;
pub mod model;
pub mod report;
pub mod slides;
pub mod smoothing;
