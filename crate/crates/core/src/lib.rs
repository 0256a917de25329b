//! Simulation library for underlay cognitive-radio links.
//!
//! A secondary user (SU) pair shares spectrum with a primary user (PU) and
//! must keep the interference it causes at the primary receiver under an
//! average and/or peak cap. The crate provides:
//!
//! * [`specfun`]: Bessel, Marcum Q, exponential integral and friends.
//! * [`channels`]: Rician/Rayleigh channel models and their closed-form laws.
//! * [`espar`]: ESPAR antenna steering vectors, orthonormal basis patterns
//!   and the beamspace channel matrix.
//! * [`rab`]: random aerial beamforming, which turns a line-of-sight channel
//!   into a fading one by randomising basis-pattern phases.
//! * [`power`]: optimal power allocation and ergodic capacity.
//! * [`multiuser`]: max-SINR scheduling across many SU pairs and the
//!   associated growth-rate formulas.
//! * [`harness`]: configs, figure presets and CSV output.
//!
//! Monte Carlo work is split into fixed-size chunks, each driven by its own
//! counter-based random stream ([`rng::substream`]). With the default
//! `parallel` feature chunks run on a rayon pool; without it they run in a
//! plain loop. Both paths reduce partial results in chunk order, so output
//! depends only on `(seed, runs)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod espar;
pub mod harness;
pub mod multiuser;
pub mod par;
pub mod power;
pub mod quadrature;
pub mod rab;
pub mod rng;
pub mod specfun;
pub mod stats;

pub use num_complex::Complex64;
