//! Selective experience replay for lifelong reinforcement learning.
//!
//! The crate is organized around a bounded episodic memory ([`memory::RankedStore`])
//! that decides which experiences to keep under one of four selection strategies,
//! a small from-scratch Q-network ([`nn::QNetwork`]), multi-task environments
//! ([`envs::GridWorld`] and a lifelong digit-classification stream), and an
//! experiment harness that trains tasks in sequence and measures how much of
//! each earlier task survives.

pub mod agent;
pub mod core;
pub mod envs;
pub mod error;
pub mod harness;
pub mod memory;
pub mod nn;
pub mod seeding;

pub use error::{Error, Result};
