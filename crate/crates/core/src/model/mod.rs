//! The multi-task network and its post-processing.

mod config;
mod decode;
mod io;
mod network;

pub use config::{NetworkConfig, TaskSet, ENCODER_STRIDE};
pub use decode::{
    decode_detections, decode_segmentation, decode_soiling, indicator_probability,
    non_max_suppression,
};
pub use io::MAGIC;
pub use network::{Network, NetworkOutputs, OutputVars, ParamGroup, ParamInfo};
