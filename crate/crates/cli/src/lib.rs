//! Declarative experiment runner for `cocycle-core`.

pub mod config;
pub mod run;

pub use run::{run, validate_file, validate_text, ConfigError, Manifest, RunOptions, Status};

/// Shipped example configurations as `(name, toml)`.
pub const EXAMPLES: &[(&str, &str)] = &[
    ("scalar_oracle", include_str!("../../../configs/scalar_oracle.toml")),
    ("conformal_oracle", include_str!("../../../configs/conformal_oracle.toml")),
    ("typical_showcase", include_str!("../../../configs/typical_showcase.toml")),
    ("period_two", include_str!("../../../configs/period_two.toml")),
    ("period_three", include_str!("../../../configs/period_three.toml")),
];
