pub mod bands;
pub mod data;
pub mod dataset;
pub mod error;
pub mod kernels;
pub mod model;
pub mod net;
pub mod spectral;

pub use dataset::{ComplexDataset, Dataset};
pub use error::{Error, Result};
