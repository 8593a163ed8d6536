//! Generative modeling across incomparable spaces with the Gromov-Wasserstein
//! discrepancy.
//!
//! The crate compares distributions *relationally*: instead of measuring
//! distances between points of two spaces, it measures how well the intra-space
//! distance matrices of two sample sets can be aligned by a soft coupling. That
//! makes it possible to train a generator whose output space differs from the
//! data space in dimension or even in kind (a weighted graph vs. a Euclidean
//! cloud).
//!
//! Building blocks:
//!
//! - [`metric_spaces`]: distance matrices from point clouds or graphs
//!   (pairwise Euclidean, k-NN graphs, Floyd-Warshall geodesics) plus the
//!   normalization used inside the Sinkhorn iterates.
//! - [`gw`]: the entropy-regularized Gromov-Wasserstein solver (log-stabilized
//!   Sinkhorn projections), its normalized/debiased variant and
//!   envelope-theorem gradients with respect to the distance matrices.
//! - [`neural`]: a minimal dense-network engine (forward/backward, orthogonal
//!   init, Adam) shared by the generator and the adversary.
//! - [`regularizers`]: the orthogonal-Procrustes adversary penalty, layerwise
//!   orthogonality baselines and generator shaping penalties (l1, total
//!   variation, style adversary).
//! - [`trainer`]: the alternating minimax loop tying everything together.
//! - [`datasets`] / [`eval`]: synthetic reference distributions and the
//!   rotation-invariant evaluation metrics used by the experiment runner.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only toggles the standard library in dependencies. All operations
//! are deterministic for fixed seeds.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod datasets;
pub mod eval;
pub mod gw;
pub mod linalg;
pub mod metric_spaces;
pub mod neural;
pub mod regularizers;
pub mod trainer;

mod error;

pub use error::{Error, Result};
