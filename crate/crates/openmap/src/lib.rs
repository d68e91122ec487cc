//! Escape statistics for open one-dimensional Markov maps.
//!
//! An *open* map is an interval map `f: [0,1] -> [0,1]` with a Markov
//! partition in which some cells are declared holes: orbits are frozen once
//! they enter a hole, and the mass entering the hole is the mass that has
//! escaped. This crate computes, per time step `n`,
//!
//! * the measure escaping exactly at step `n` and by step `n`,
//! * the survival probability `P^n`,
//!
//! exactly for piecewise-affine maps (via the weighted transition matrix)
//! and as rigorous lower/upper bounds for piecewise-polynomial maps (via
//! matrices of derivative extrema). The bounds can then be sharpened by
//! rebuilding the transition structure over a *structural set*: a vertex
//! set whose complement induces no cycles in the transition graph, so that
//! excursions outside it have bounded length and can be collapsed into
//! path states weighted by composed derivatives.
//!
//! Modules:
//! * [`model`] — maps, partitions, holes, validation, itinerary cells.
//! * [`graph`] — transition graphs and structural-set enumeration.
//! * [`kernel`] — matrix series, eigendecomposition, derivative extremization.
//! * [`escape`] — exact/bounded escape series and spectral classification.
//! * [`reduction`] — delayed-first-return systems and sharpened bounds.
//! * [`oracle`] — independent ground truth: cylinder measures, Monte Carlo,
//!   and the delayed-orbit simulator.
//! * [`fixtures`] — bundled example models.

pub use nalgebra;

pub mod escape;
pub mod fixtures;
pub mod graph;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod reduction;

mod polyroot;

pub use escape::{BoundMatrixPair, EscapeSeries, SurvivalClass};
pub use graph::{StructuralSet, TransitionGraph};
pub use model::{Branch, Cell, Interval, ModelError, ModelFile, OpenMapModel, Partition};
pub use reduction::ReducedSystem;
