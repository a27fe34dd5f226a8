//! Stretched polymers in i.i.d. random potentials on the integer lattice.
//!
//! The crate is organised bottom-up:
//!
//! - [`environment`]: potential laws, sampled fields, tilting.
//! - [`path`]: lattice paths, local times and path weights.
//! - [`ensembles`]: brute-force enumeration, transfer DP, conjugate sums, sampling.
//! - [`lyapunov`]: Lyapunov norms, polar norms, critical drifts, rate functions.
//! - [`coarse`]: cones, cone points, skeletons, surcharge and irreducible splits.
//! - [`renewal`]: irreducible tables, renewal identities, the implicit function mu.
//! - [`disorder`]: quenched/annealed ratio tracks, concentration, fractional moments.
//!
//! Everything random is derived from explicit `u64` seeds so that every
//! reported number is reproducible bit for bit, regardless of thread count.

// `!(x > 0.0)` also rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod coarse;
pub mod ensembles;
pub mod environment;
pub mod error;
pub mod lattice;
pub mod lyapunov;
pub mod numerics;
pub mod path;
pub mod renewal;
pub mod disorder;
pub mod seeds;

pub use error::{Error, Result};
pub use lattice::{LatticeBox, Site, MAX_DIM};
