pub mod clustering;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod kmeans;
pub mod learning_loop;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod seed;
pub mod similarity;
pub mod strategies;
pub mod tagger;

pub use error::{Error, Result};
