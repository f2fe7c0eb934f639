//! Box-supervised semantic segmentation.
//!
//! Bounding-box annotations are turned into per-pixel supervision by picking,
//! for every box, one segment from a fixed pool of unsupervised region
//! proposals. Selection balances box overlap against the current network's
//! loss on the hypothesised labeling, and alternates with ordinary training
//! epochs of a small fully convolutional pixel classifier.

// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod pixelnet;
pub mod proposals;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{box_iou, mask_iou, tight_bbox, BinaryMask, LabelMap, PixelRect, IGNORE};
