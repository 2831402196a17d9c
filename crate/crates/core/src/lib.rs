//! Annotation, feature extraction, classification and evaluation for
//! texts labelled against a hierarchical self-aspect ontology.

pub mod annotation;
pub mod bias;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod interpret;
pub mod models;
pub mod ontology;
pub mod project;
pub mod store;

pub use error::{Error, Result};
