//! Lightweight U-Net segmentation of tumor masks on planar slices of
//! volumetric scans, with hand-written backpropagation, classical baselines
//! and the Pixel Accuracy / Mean Accuracy / Mean IoU / FWIoU metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod config;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod unet;
pub mod volume;

pub use error::{Error, Result};
pub use metrics::{ClassMode, ConfusionAccumulator, MetricsReport};
pub use model::{AnyModel, Architecture, SegmentationModel};
pub use nn::Mode;
pub use tensor::{Real, Tensor};
pub use unet::{UNet, UNetConfig, UpsampleMode};
