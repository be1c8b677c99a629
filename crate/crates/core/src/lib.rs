//! Principled image annotation over genus-differentia classification schemas.
//!
//! A classificationist authors a [`schema`] in the [`dsl`], validates it
//! against the canons and freezes it into a controlled vocabulary. Classifiers
//! then localize objects and assert visual properties in an [`engine`]
//! session; labels and concept ids come only from the frozen schema.
//! [`agreement`] measures inter-annotator agreement, [`simulation`] compares
//! ad-hoc labeling with property-grounded classification, [`persist`] holds
//! the file formats, and [`service`] exposes it all over HTTP.

pub mod agreement;
pub mod cli;
pub mod dsl;
pub mod engine;
pub mod fixtures;
pub mod persist;
pub mod schema;
pub mod service;
pub mod simulation;
