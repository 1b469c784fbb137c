pub mod baselines;
pub mod cli;
pub mod color;
pub mod corruption;
pub mod datasets;
pub mod error;
pub mod evaluate;
pub mod filter;
pub mod flow;
pub mod flow_io;
pub mod image;
pub mod ladders;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod psf;
pub mod report;
pub mod seed;
pub mod static_ops;
pub mod temporal;
pub mod video;
pub mod weather;

pub use crate::corruption::{CorruptionClass, CorruptionKind, CorruptionSpec, PairSemantics, Severity};
pub use crate::error::{Error, Result};
pub use crate::flow::{FlowField, ValidMask};
pub use crate::image::{clamp_image, Image, ImagePair};
