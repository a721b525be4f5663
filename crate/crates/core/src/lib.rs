//! Economic-complexity rankings on country-product export networks.
//!
//! The crate computes two competing rankings from a binary country x product
//! matrix, the nonlinear Fitness-Complexity map ([`fitness`]) and the linear
//! ECI/PCI eigenproblem ([`eci`]), runs product-removal experiments that
//! contrast them ([`counterfactual`]), and forecasts country trajectories in the
//! GDPpc-Fitness plane with the method of analogues ([`dynamics`]).

pub mod counterfactual;
pub mod dynamics;
pub mod eci;
pub mod error;
pub mod fitness;
pub mod ingest;
pub mod matrix;
pub mod ranking;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use matrix::BinaryCPMatrix;
