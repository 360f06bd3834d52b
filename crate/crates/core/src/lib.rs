//! Design-space exploration for tiled load/compute/store FPGA accelerators.
//!
//! The flow: parse a [`kernel`] description, check it with [`legalize`],
//! build the tunable design with [`construct`], evaluate points with the
//! analytical [`model`], search with [`dse`] and cross-check with [`sim`].

pub mod construct;
pub mod dse;
pub mod kernel;
pub mod legalize;
pub mod model;
pub mod sim;
