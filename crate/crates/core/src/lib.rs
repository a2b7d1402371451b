//! Core of the soundscape authoring pipeline: scene understanding, sound
//! ideation, generation, localization, mixing and project persistence.

pub mod adapters;
pub mod config;
pub mod ideation;
pub mod localization;
pub mod mixer;
pub mod project;
pub mod scene_context;
pub mod soundgen;
pub mod wav;

pub use config::Config;
pub use project::{MixProject, Pipeline, ProjectError};
