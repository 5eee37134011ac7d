//! Measurement-device-independent verification of quantum memories.
//!
//! The memory under test is modelled as a single-qubit [`channels::Channel`].
//! A verifier plays a semi-quantum signaling game ([`game`]) against it using
//! a Bell-state measurement model ([`bsm`]), and the average payoff certifies
//! that the memory is not entanglement-breaking whenever it is positive.
//! [`predict`] turns measured setup parameters into the expected payoff, and
//! [`tomography`] shows how a faked-state adversary fools ordinary process
//! tomography but not the game.

pub mod bsm;
pub mod channels;
pub mod error;
pub mod game;
pub mod predict;
pub mod qcore;
pub mod stream;
pub mod tomography;

pub use error::{Error, Result};
