//! Global training of feedforward networks with learnable polynomial
//! activations through the moment-SOS hierarchy.
//!
//! The pipeline is: build the network's input-output map symbolically
//! ([`net`]), form the epigraph polynomial optimization problem ([`pop`]),
//! assemble moment relaxations ([`moment`]), solve them ([`sdp`]) and drive
//! the hierarchy with flat-truncation checks and minimizer extraction
//! ([`hierarchy`]). [`experiments`] generates synthetic instances and
//! sweeps over them; [`io`] reads and writes networks, data and reports.

pub mod error;
pub mod experiments;
pub mod fixture;
pub mod hierarchy;
pub mod io;
pub mod local;
pub mod moment;
pub mod net;
pub mod poly;
pub mod pop;
pub mod sdp;

pub use error::{Error, Result};
