//! Desk-scale laboratory for adversarially robust meta reinforcement learning.
//!
//! The crate is organized bottom-up: [`diffcore`] provides a minimal
//! reverse-mode autodiff engine over dense `f64` matrices, [`envs`] the
//! point-mass task families, [`rollout`] Gaussian-policy trajectory
//! collection, [`metapg`] the meta policy-gradient machinery (REINFORCE
//! surrogate, one-step adaptation, trust-region outer step), [`attacks`]
//! the three state perturbations, [`trainers`] the four training regimes
//! plus meta-test evaluation, and [`harness`] configuration, checkpoints,
//! reports and the experiment driver.
//!
//! Everything is deterministic given a master seed: random streams are
//! derived per (purpose, iteration, task, trajectory) via [`seeding`], so
//! results are bit-identical regardless of worker count.

pub mod attacks;
pub mod diffcore;
pub mod envs;
pub mod harness;
pub mod metapg;
pub mod nets;
pub mod rollout;
pub mod seeding;
pub mod trainers;

pub use diffcore::DiffError;
