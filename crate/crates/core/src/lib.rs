//! Typed functional DSL, its interpreter, and synthetic dataset generation.

pub mod datagen;
pub mod interp;
pub mod lang;
pub mod rng;
