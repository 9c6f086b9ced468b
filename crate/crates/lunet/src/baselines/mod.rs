//! Classical comparison methods and the reduced LinkNet.

pub mod fcm;
pub mod kmeans;
pub mod linknet;
pub mod threshold;

pub use fcm::{fcm_1d, fuzzy_cmeans_segment, memberships, FcmFit};
pub use kmeans::{kmeans_1d, kmeans_segment, ClusterConfig, ClusterOutcome, KMeansFit};
pub use linknet::{LinkNetConfig, LinkNetLite};
pub use threshold::{
    closing, histogram256, median_filter, opening, otsu_threshold, threshold_segment, ThresholdConfig,
    ThresholdMode, ThresholdOutcome,
};
