//! Thumbnail candidate selection for long-form video.
//!
//! The engine turns decoded frames plus precomputed model outputs
//! (embeddings, face detections, landmarks, saliency) into ranked, diverse
//! thumbnail proposals per aspect ratio.

pub mod config;
pub mod cropper;
pub mod dataset;
pub mod error;
pub mod faceproc;
pub mod grouping;
pub mod ingest;
pub mod keyframe;
pub mod model;
pub mod pipeline;
pub mod scoring;
pub mod selection;
pub mod synthetic;

pub use config::{AspectTag, EngineConfig};
pub use error::{Error, Result};
