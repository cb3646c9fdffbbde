//! Concept goodness: a weighted four-factor score for candidate medical
//! ontology concepts (brevity, PubMed frequency, German language match and
//! dictionary presence), with the survey loop that fits the weights to
//! expert ratings via Krippendorff's alpha.

pub mod brevity;
pub mod cli;
pub mod config;
pub mod error;
pub mod frequency;
pub mod german;
pub mod ingest;
pub mod lexical;
pub mod net;
pub mod optimize;
pub mod reliability;
pub mod scoring;
pub mod service;
pub mod survey;

pub use error::{Error, Result};
