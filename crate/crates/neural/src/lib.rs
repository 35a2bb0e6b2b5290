//! Neural synthesis: sequence encoders, R3NN expansion scoring, training and
//! evaluation.

pub mod graph;
pub mod params;
pub mod encoding;
pub mod model;
pub mod r3nn;
pub mod train;
pub mod eval;
pub mod checkpoint;
