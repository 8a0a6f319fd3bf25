//! Tools for deciding whether a two-qubit gate acted as its ideal unitary or
//! as a depolarized copy of it, using product-state inputs and local
//! measurements only.
//!
//! The crate is organised bottom-up:
//!
//! * [`qmath`]: 1- and 2-qubit linear algebra (kets, density matrices,
//!   Schmidt form, trace norm, Haar sampling).
//! * [`kak`]: canonical decomposition `U = (U_A ⊗ U_B) U_d (V_A ⊗ V_B)`.
//! * [`product_finder`]: product inputs whose image under a gate is product.
//! * [`channels`]: depolarized and mixed-unitary channel models.
//! * [`discrimination`]: Helstrom analytics, the local protocol, shot
//!   simulation and noise estimation.
//! * [`cli`]: the `gatecheck` command-line front end.

pub mod channels;
pub mod cli;
pub mod discrimination;
pub mod error;
pub mod kak;
pub mod product_finder;
pub mod qmath;

pub use error::{Error, Result};
