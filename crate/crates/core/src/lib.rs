//! Communication-efficient distributed quantile regression built on
//! convolution-smoothed (conquer) losses.

pub mod data;
pub mod datagen;
pub mod error;
pub mod exact_qr;
pub mod extreme;
pub mod federation;
pub mod highdim;
pub mod inference;
pub mod kernels;
pub mod normal;
pub mod par;
pub mod smoothed_qr;
pub mod stats;

pub use data::{DataShard, FederatedDataset};
pub use error::{ConquerError, Result};
pub use kernels::{Kernel, SmoothedLoss};
pub use smoothed_qr::{ModelFit, StopReason};
