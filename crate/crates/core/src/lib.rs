//! Locally differentially private randomizers with compressed reports.
//!
//! Local randomizers usually need to send their whole (often
//! high-dimensional) output to the aggregator. This crate implements two
//! complementary ways around that cost:
//!
//! * [`compress`]: a generic rejection sampler that replaces any local
//!   randomizer, expressible as a density with respect to a fixed
//!   reference distribution, by a short random seed. The server expands
//!   the seed to recover the report. Privacy degrades only through the
//!   quality of the seed expander, and not at all for an ideal one.
//! * [`freq`]: frequency estimation over k buckets in which each client
//!   sends two field elements describing an affine function, a
//!   pairwise-independent compression of a k-bit randomized response.
//! * [`mean`]: mean estimation of unit vectors via hemisphere flipping
//!   and spherical-cap mixtures, in both send-the-vector and
//!   send-the-seed forms.
//!
//! [`field`] and [`randcore`] supply the prime-field arithmetic and the
//! deterministic bit-level samplers everything else is built from, and
//! [`harness`] contains dataset generators, experiment drivers, a wire
//! format and the entry points used by the `privseed` command line tool.

pub mod compress;
pub mod error;
pub mod field;
pub mod freq;
pub mod harness;
pub mod mean;
pub mod numeric;
pub mod randcore;

pub use error::{Error, Result};
