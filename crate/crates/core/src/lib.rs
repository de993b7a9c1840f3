//! Crop-aware bounding box (CABB) regression.
//!
//! When a training crop cuts through an object, the visible part of its box no
//! longer tells us where the object really ends. Instead of regressing towards
//! the truncated box, the CABB loss regresses towards the *closest* box that is
//! consistent with what the crop shows. This crate provides:
//!
//! * [`geometry`]: boxes, anchor-relative encoding, cropping, IoU and sampling
//!   of crop-consistent boxes.
//! * [`loss`]: the Huber norm and the standard per-box regression loss.
//! * [`solver`]: the exact per-dimension minimizer behind the CABB loss and its
//!   gradient.
//! * [`oracle`]: a brute-force reference minimizer and the fuzz/gradient-check
//!   harnesses that certify the solver against it.
//! * [`isus`]: a simulator of class-uniform and instance scale-uniform crop
//!   sampling over annotation metadata.
//! * [`annotations`]: annotation I/O, synthetic datasets and statistics.
//! * [`report`] and [`bench`]: CSV tables of sampler runs and the solver
//!   throughput benchmark.
//!
//! ```
//! use cabb::geometry::{BBox, CropRect};
//! use cabb::geometry::Delta;
//! use cabb::solver::{cabb_loss, SolverConfig};
//!
//! // An object cut by the right border of a 400x400 crop.
//! let gt = BBox::from_corners([300.0, 100.0, 600.0, 200.0]).unwrap();
//! let anchor = BBox::new([350.0, 150.0], [100.0, 100.0]).unwrap();
//! let crop = CropRect::from_extent([400.0, 400.0]).unwrap();
//! let pred = Delta::new([1.0, 0.0], [3.0, 1.0]).unwrap();
//!
//! let sol = cabb_loss(&pred, &gt, &anchor, &crop, &SolverConfig::default()).unwrap();
//! // Predicting the full extent is consistent with the crop, so it costs nothing.
//! assert!(sol.loss < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotations;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod instance;
pub mod isus;
pub mod loss;
pub mod oracle;
pub mod report;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/crop_aware.md")]
    mod crop_aware {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/gradient.md")]
    mod gradient {}
    #[doc = include_str!("../../../book/src/certification.md")]
    mod certification {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
}
