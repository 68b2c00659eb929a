//! Automatic pose estimation of a relocated bone fragment from a single
//! fluoroscopic view, using two implanted ball-bearing (BB) constellations.
//!
//! The pipeline has two phases:
//!
//! 1. **Reconstruction** ([`recon`]): BBs are detected ([`detect`]) in three
//!    views, matched across views with surface-distance and reprojection
//!    pruning, triangulated, and labeled as ilium or fragment constellations.
//! 2. **Single-view estimation** ([`pose`]): the ilium constellation pose is
//!    found by enumerating 3-BB correspondences through a depth-sampled P3P
//!    solver ([`p3p`]) with anatomical pruning; the fragment pose follows with
//!    a depth window anchored on the ilium. The relative fragment motion is
//!    reported in the anatomical frame along with the LCE angle.
//!
//! [`sim`] provides a deterministic synthetic fluoroscopy harness used for
//! evaluation.

pub mod detect;
pub mod exec;
pub mod geometry;
pub mod numfmt;
pub mod optim;
pub mod p3p;
pub mod pose;
pub mod recon;
pub mod sim;

pub use exec::Execution;
