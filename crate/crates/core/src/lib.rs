//! Erasure entropies of stationary processes and lattice Gibbs measures.
//!
//! The crate is organised bottom-up:
//!
//! * [`entropy`]: Shannon entropy primitives over explicit probability tables.
//! * [`markov`]: exact entropy and erasure-entropy rates of k-step Markov
//!   chains, and the erasure-channel conditional entropy.
//! * [`lattice`] / [`gibbs`]: periodic square and brick-wall honeycomb Ising
//!   systems, their exact Boltzmann measures and finite-volume erasure
//!   entropies.
//! * [`square`]: boundary classes and the correlation-based erasure formula on
//!   the square lattice, with enumeration, transfer-matrix and Monte Carlo
//!   correlation providers.
//! * [`hex`]: the honeycomb pipeline from the exact pressure to the erasure
//!   entropy.
//! * [`montecarlo`]: a heat-bath Gibbs sampler with batch-means error bars.

pub mod entropy;
pub mod error;
pub mod gibbs;
pub mod hex;
pub mod lattice;
pub mod markov;
pub mod montecarlo;
pub mod numerics;
pub mod square;

pub use entropy::{EntropyUnit, EntropyValue};
pub use error::{Error, Result};
