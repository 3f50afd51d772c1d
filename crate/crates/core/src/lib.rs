pub mod annotate;
pub mod cli;
pub mod corpus;
pub mod crf;
pub mod drc;
pub mod encoder;
pub mod eval;
mod optim;
pub mod schema;
