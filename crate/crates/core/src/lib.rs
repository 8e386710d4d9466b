//! Training segmentation models on incompletely labelled data.
//!
//! The crate covers the full loop on synthetic building-like scenes:
//!
//! - [`synthdata`] generates scenes, drops whole objects from the labels and
//!   measures label quality;
//! - [`learner`] holds a small convolutional segmenter with hand-written
//!   gradients, the CE + Dice loss, Adam and the mean-teacher EMA;
//! - [`act`] decides *when* to start correcting labels from the shape of
//!   the training-accuracy curve ([`curvefit`] does the numerics);
//! - [`o2c`] decides *how*: per iteration, predicted objects that do not
//!   touch any labelled object are added as soft pseudo labels;
//! - [`metrics`] scores predictions and tracks memorization of omitted
//!   objects;
//! - [`harness`] runs the training arms end to end.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod act;
pub mod curvefit;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod learner;
pub mod metrics;
pub mod o2c;
pub mod synthdata;

pub use error::{Error, Result};
pub use grid::Raster;
