//! Semi-supervised kernel principal components analysis.
//!
//! Three label-aware generalisations of kernel PCA for transductive
//! classification:
//!
//! - **MV-KPCA** ([`kpca::mvkpca_fit`]) penalises the variance of the
//!   function within prescribed groups and is solved by a symmetric-definite
//!   generalised eigenproblem.
//! - **LS-KPCA** ([`lskpca::lskpca_fit`]) minimises the RKHS norm plus a
//!   squared labeled loss subject to a fixed variance of the function values.
//!   The problem is non-convex; [`cqp::solve_secular`] finds its global
//!   minimiser through the secular equation of the Lagrange multiplier.
//! - **LR-KPCA** ([`lrkpca::lrkpca_fit`]) reweights LS-KPCA iteratively to
//!   realise a sigmoid loss on labeled points, with a proximal safeguard that
//!   makes the monitored objective strictly decrease.
//!
//! Supporting modules build Gaussian, graph-diffusion, mixed and
//! Laplacian-pseudo-inverse kernels ([`kernels`]), dense symmetric
//! eigensolvers ([`eigen`]), classification heads, cross-validation and a
//! transductive risk bound ([`eval`]), and the command-line driver ([`cli`]).
//!
//! ```no_run
//! use sskpca::data::gen_two_moons;
//! use sskpca::kernels::{KernelMatrix, KernelSpec};
//! use sskpca::lskpca::{lskpca_fit, LsConfig};
//!
//! let data = gen_two_moons(200, 0.05, 4, 7).unwrap();
//! let kernel = KernelMatrix::build(&KernelSpec::Gaussian { gamma: 2.0 }, &data.points).unwrap();
//! let fit = lskpca_fit(&kernel, &data, &LsConfig::new(10.0, 200.0)).unwrap();
//! let f = fit.function.training_values(&kernel);
//! # let _ = f;
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod cqp;
pub mod data;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod kpca;
pub mod lrkpca;
pub mod lskpca;
pub mod model;
mod roots;

pub use error::{Error, Result};
