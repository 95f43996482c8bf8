//! Learned iterative solvers for parametric PDEs with physics-informed losses.
//!
//! The crate revolves around a simple pipeline:
//!
//! 1. sample PDE instances from a parametric family and compute reference
//!    solutions ([`dataset`]),
//! 2. discretize each instance with a linear basis ansatz and expose its
//!    physics-informed residual loss, gradient, and normal-equations system
//!    ([`basis`], [`pde`]),
//! 3. run an unrolled gradient-descent solver on that loss, optionally with a
//!    learned conditioner network transforming each gradient step, and train
//!    the conditioner by backpropagating a data loss through the unrolled
//!    steps ([`nnet`], [`optim`], [`solver`]),
//! 4. measure why plain gradient descent struggles — spectra, condition
//!    numbers, step-count laws, learned linear preconditioners, and loss
//!    landscape slices ([`theory`]).
//!
//! The command-line front end ([`cli`], [`config`]) wires these stages into
//! reproducible experiments with manifest-tracked outputs.

pub mod basis;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod nnet;
pub mod optim;
pub mod pde;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};

/// Initialize the rayon thread pool from the `PISOLVER_THREADS` environment
/// variable. With the variable unset rayon's default (one thread per core) is
/// kept. Safe to call more than once; only the first call can take effect.
pub fn init_threads() {
    if let Ok(raw) = std::env::var("PISOLVER_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                // Ignore the error: the global pool may already be built.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
