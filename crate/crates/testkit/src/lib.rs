//! Test support shared by the kfs crates: straight-line reference
//! implementations of the rankers and the cascade, fixture corpora, and
//! seeded synthetic data.

pub mod dataset;
pub mod fixtures;
pub mod oracle;
pub mod synth;
