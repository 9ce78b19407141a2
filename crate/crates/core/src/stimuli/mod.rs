//! Deterministic synthesis of every stimulus family: noise-perturbed
//! images, segmentation / crowding / shape line patterns and sine gratings.
//!
//! All functions here are pure in (configuration, label, seed).

mod config;
mod font;
mod grating;
mod noise;
mod patterns;

pub use config::StimulusConfig;
pub use font::Font;
pub use grating::{default_contrasts, default_frequencies, render_grating, GratingSpec, DEFAULT_MEAN_LEVEL};
pub use noise::{apply_field, db_to_std, perturb_image, std_to_db, synth_noise, NoiseMode, NoiseSpec, NOISE_DISABLED};
pub use patterns::{
    enumerate_configs, enumerate_configs_with, render_pattern, CategoryLabel, Condition, Element, Paradigm,
    ParadigmGrid, PatternConfig, PatternGeometry, PatternLayout, PatternRenderer, ShapeLayouts, REFERENCE_CANVAS,
};
