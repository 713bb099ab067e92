//! Explanation engine for multimodal (language, audio, vision) sentiment
//! models.

pub mod attribution;
pub mod data;
pub mod fingerprint;
pub mod interactions;
pub mod pipeline;
pub mod projection;
pub mod service;
pub mod stats;
pub mod store;
pub mod synthetic;
pub mod templates;

pub use data::{Dataset, FeatureSchema, Instance, Modality, ModalityFeatures};
