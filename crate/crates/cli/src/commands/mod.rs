pub mod compile;
pub mod embeddings;
pub mod eval;
pub mod fixtures;
pub mod ground;
pub mod infer;
pub mod synth;
pub mod train;
