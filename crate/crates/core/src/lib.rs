//! Dual-speed ("slow/fast") learning pipeline for snapshot spectral
//! compressive imaging.
//!
//! The crate is organized around the lifecycle of a coded-aperture snapshot
//! spectral imaging (CASSI) reconstructor:
//!
//! * [`sensing`] — the CASSI forward operator, its adjoint, and sensor noise.
//! * [`unfolding`] — a half-quadratic-splitting unfolding reconstructor with
//!   learnable per-stage denoisers and penalty estimators.
//! * [`adapters`] — lightweight per-stage adaptation modules trained while
//!   the backbone stays frozen.
//! * [`wiener`] — an analysis lab relating linear MSE-trained denoisers to
//!   the closed-form Wiener filter.
//! * [`slow`] — supervised pretraining and teacher-to-student distillation.
//! * [`fast`] — self-supervised adapter training and per-sample test-time
//!   adaptation with a dual-domain loss.
//! * [`synth`] / [`metrics`] / [`store`] — synthetic data generation with a
//!   controllable domain shift, PSNR/SSIM, and on-disk formats.
//! * [`harness`] — experiment configs, checkpoints, and the command layer
//!   behind the `sfsci` CLI.
//!
//! All computation is `f64`; learnable parameters and stored cubes are kept
//! on the `f32` grid so file round trips are bit-exact. Every stochastic
//! operation takes an explicit seed and is deterministic for a given seed
//! and execution mode.

pub mod adapters;
pub mod cube;
pub mod error;
pub mod exec;
pub mod fast;
pub mod fft;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod optim;
mod seeds;
pub mod sensing;
pub mod slow;
pub mod store;
pub mod synth;
pub mod tensor;
pub mod unfolding;
pub mod wiener;

pub use cube::{CodedMask, HyperspectralCube, Measurement};
pub use error::{Error, Result};
pub use exec::{exec_mode, set_exec_mode, ExecMode};
pub use tensor::Tensor;
