//! Gaussian free fields, random-walk loop soups and first passage sets on finite
//! electrical networks and their metric-graph refinements.
//!
//! The crate is `no_std` and only needs `alloc`. All randomness flows through explicit
//! [`rng::StreamRng`] streams so every sample is a pure function of its inputs.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bridge;
pub mod clusters;
pub mod fps;
pub mod gff;
pub mod lattice;
pub mod linalg;
pub mod network;
pub mod oracle;
pub mod refine;
pub mod rng;
pub mod soups;

pub(crate) mod math {
    use num_traits::Float;

    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        Float::sqrt(x)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        Float::ln(x)
    }
    #[inline]
    pub fn ln_1p(x: f64) -> f64 {
        Float::ln_1p(x)
    }
    #[inline]
    pub fn exp_m1(x: f64) -> f64 {
        Float::exp_m1(x)
    }
    #[inline]
    pub fn floor(x: f64) -> f64 {
        Float::floor(x)
    }
    #[inline]
    pub fn ceil(x: f64) -> f64 {
        Float::ceil(x)
    }
    #[inline]
    pub fn round(x: f64) -> f64 {
        Float::round(x)
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use network::{
    boundary_poisson_kernel, build_network, dirichlet_energy, green_function, harmonic_extension,
    rescale_conductances, BoundaryFunction, Edge, EdgeId, GreenTable, Network, NetworkError,
    NetworkSpec, PoissonKernel, VertexId,
};
