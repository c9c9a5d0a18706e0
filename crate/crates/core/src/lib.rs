//! Coupled-tensor data fusion for hyperspectral super-resolution.
//!
//! A hyperspectral image (HSI, many bands but coarse pixels) and a
//! multispectral image (MSI, few bands but fine pixels) of the same scene
//! are modelled as two degradations of a single super-resolution image
//! (SRI) cube. This crate provides:
//!
//! - dense 3-way tensor arithmetic (unfoldings, mode contractions,
//!   multilinear and polyadic reconstruction) in [`cube`] and [`matrix`];
//! - truncated SVD, HOSVD and generalized Sylvester solvers in [`linalg`];
//! - the degradation pipeline (Gaussian blur, downsampling,
//!   selection-averaging spectral response, seeded noise) in [`degradation`];
//! - SVD-based coupled Tucker fusion (SCOTT, blind SCOTT, B-SCOTT) in
//!   [`fusion::tucker`] and the CP baselines (TenRec, STEREO, the hybrid
//!   algorithm, SCUBA) in [`fusion::cp`];
//! - recoverability classification for the coupled model in
//!   [`recoverability`];
//! - synthetic scene generation from parcel maps in [`synth`];
//! - evaluation metrics (R-SNR, CC, SAM, ERGAS) in [`metrics`];
//! - binary cube/matrix file formats in [`io`] and experiment drivers
//!   (rank sweeps, singular-value profiles, region maps) in [`experiment`].

pub mod cube;
pub mod degradation;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod recoverability;
pub mod synth;

pub use cube::{DataCube, Mode};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use model::{CPModel, TuckerModel};
