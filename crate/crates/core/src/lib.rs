//! Deterministic simulator for clustering in mobile ad hoc networks.
//!
//! Nodes elect cluster heads from periodic Hello broadcasts. The adaptive
//! scheme ([`protocols::abp`]) lengthens the broadcast period of stable
//! clusters; the lowest-ID, highest-degree and vote-based schemes
//! ([`protocols::baseline`]) serve as references.

pub mod codec;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod mobility;
pub mod protocols;
pub mod world;

/// Node identifier as carried in the 8-bit MH_ID field.
pub type NodeId = u8;
