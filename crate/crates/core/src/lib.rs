pub mod annotator;
pub mod corpus;
pub mod eval;
pub mod pool;
pub mod rng;
pub mod synth;
pub mod text;
pub mod trainer;
