//! Keypoint-based diffusion motion planning.
//!
//! This crate holds everything that is pure computation: the dense tensor and
//! reverse-mode differentiation substrate, random box scenes, serial-arm
//! kinematics and collision checking, the RRT-Connect oracle planner, plan
//! representations and training samples, the point-cloud autoencoder, the
//! FiLM-conditioned temporal UNet with its DDPM sampler, the batched neural
//! planner and evaluation metrics.
//!
//! It builds without `std` (only `alloc` is required). File formats, the CLI
//! and wall clocks live in the companion `keyplan` crate.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod math;

pub mod arm;
pub mod clock;
pub mod cloud;
pub mod data;
pub mod diffusion;
pub mod geom;
pub mod metrics;
pub mod nd;
pub mod neuro;
pub mod oracle;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
