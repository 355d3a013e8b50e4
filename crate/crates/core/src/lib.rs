//! Gesture generation toolkit for a 14-DoF humanoid upper body.
//!
//! Three capabilities, layered so each is usable on its own:
//!
//! * **Retargeting** ([`retarget`]): converts recorded human skeleton
//!   motion (15 tracked joints) into robot joint trajectories with
//!   direct kinematics, joint-limit clamping and a colored-glove wrist /
//!   hand heuristic ([`glove`]).
//! * **Learning** ([`dataset`], [`neuralnet`], [`gan`]): windows pose
//!   streams into fixed-size Units of Movement and trains a small
//!   from-scratch GAN (hand-written MLPs, plain `f64`) over them.
//! * **Synthesis** ([`sequence`]): samples the trained generator and
//!   assembles gesture sequences of a requested duration, with linear
//!   blending between units.
//!
//! The [`cli`] module wires these into the `gesturegen` binary;
//! [`pipeline`] runs the whole chain in one call. All randomness flows
//! through seeded ChaCha8 streams, and every artifact (recordings, pose
//! streams, corpora, model files, sequences) is byte-deterministic given
//! the same inputs and seeds.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gan;
pub mod glove;
pub mod neuralnet;
pub mod pipeline;
pub mod retarget;
pub mod sequence;
pub mod skeleton;
pub mod synth;

pub use config::Config;
pub use dataset::{Corpus, NormalizationSpec, UnitOfMovement, UM_DIM, UM_POSES};
pub use error::{Error, Result};
pub use gan::GanConfig;
pub use retarget::{Channel, JointLimits, RobotPose, CHANNELS};
pub use skeleton::{Joint, Recording, SkeletonFrame, Vec3};
