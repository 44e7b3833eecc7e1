//! Product-quantization nearest-neighbor search with a 4-bit fast-scan
//! kernel, a float ADC baseline and an inverted-file layer.

pub mod dataset;
pub mod distance;
pub mod error;
pub mod fastscan;
pub mod ivf;
pub mod kmeans;
pub mod pq;
pub mod rng;
pub mod topk;

pub use dataset::{GroundTruth, IntMatrix, VectorSet};
pub use error::{Error, Result};
pub use fastscan::{Backend, Kernel, PackedCodeBlocks, QuantizedLUT, Reg32};
pub use ivf::{IvfIndex, SearchParams};
pub use pq::{Codebook, LutF, PQCodes};
pub use topk::{Neighbor, TopK};
