//! Clustering protocols and role classification.

pub mod abp;
pub mod baseline;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec::{MAX_OPTION, NO_CLUSTER};
use crate::world::Graph;
use crate::NodeId;

pub use abp::{admission_filter, AbpNode, AbpParams, Candidate};
pub use baseline::{elect_by_key, hd_assign, lid_assign, vc_assign};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("weights must lie in [0, 1] and sum to 1 (c1={c1}, c2={c2})")]
    Weights { c1: f64, c2: f64 },
    #[error("size threshold T must be in 1..=15, got {0}")]
    Threshold(u32),
}

/// Weights of the cluster-head competence score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChcParams {
    pub c1: f64,
    pub c2: f64,
    /// Handover penalty charged to nodes that are not currently heads.
    pub p: u32,
    /// Most members a head may take on.
    pub t: u8,
}

impl ChcParams {
    pub fn new(c1: f64, c2: f64, p: u32, t: u32) -> Result<Self, ParamError> {
        let in_unit = |c: f64| (0.0..=1.0).contains(&c);
        if !(in_unit(c1) && in_unit(c2) && (c1 + c2 - 1.0).abs() < 1e-9) {
            return Err(ParamError::Weights { c1, c2 });
        }
        if t == 0 || t > MAX_OPTION as u32 {
            return Err(ParamError::Threshold(t));
        }
        Ok(ChcParams { c1, c2, p, t: t as u8 })
    }
}

/// `c1·d + c2·b − p`, with the penalty waived for current cluster heads.
pub fn chc(d: usize, b: f64, is_ch: bool, params: &ChcParams) -> f64 {
    let penalty = if is_ch { 0.0 } else { params.p as f64 };
    params.c1 * d as f64 + params.c2 * b - penalty
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    ClusterHead,
    Gateway,
    Ordinary,
    Unclustered,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::ClusterHead => "CH",
            Role::Gateway => "GATEWAY",
            Role::Ordinary => "ORDINARY",
            Role::Unclustered => "UNCLUSTERED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    pub ch_of: BTreeMap<NodeId, NodeId>,
    pub role_of: BTreeMap<NodeId, Role>,
}

impl ClusterAssignment {
    /// Assignment with head pointers only; call [`classify_roles`] to fill roles.
    pub fn from_heads(ch_of: BTreeMap<NodeId, NodeId>) -> Self {
        ClusterAssignment {
            ch_of,
            role_of: BTreeMap::new(),
        }
    }

    pub fn ch(&self, v: NodeId) -> NodeId {
        self.ch_of.get(&v).copied().unwrap_or(NO_CLUSTER)
    }

    pub fn is_head(&self, v: NodeId) -> bool {
        self.ch_of.get(&v) == Some(&v)
    }

    pub fn heads(&self) -> Vec<NodeId> {
        self.ch_of
            .iter()
            .filter(|(v, c)| v == c)
            .map(|(&v, _)| v)
            .collect()
    }

    pub fn members(&self, head: NodeId) -> Vec<NodeId> {
        self.ch_of
            .iter()
            .filter(|&(&v, &c)| c == head && v != head)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Largest member count over all heads.
    pub fn max_cluster_size(&self) -> usize {
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (&v, &c) in &self.ch_of {
            if v != c && self.is_head(c) {
                *counts.entry(c).or_default() += 1;
            }
        }
        counts.values().copied().max().unwrap_or(0)
    }
}

/// Labels every node: head if it points at itself, unclustered without a
/// head, gateway if it hears two or more heads, ordinary otherwise.
pub fn classify_roles(assignment: &ClusterAssignment, graph: &Graph) -> ClusterAssignment {
    let role_of = assignment
        .ch_of
        .iter()
        .map(|(&v, &c)| {
            let role = if c == v {
                Role::ClusterHead
            } else if c == NO_CLUSTER {
                Role::Unclustered
            } else if graph.neighbors(v).filter(|&u| assignment.is_head(u)).count() >= 2 {
                Role::Gateway
            } else {
                Role::Ordinary
            };
            (v, role)
        })
        .collect();
    ClusterAssignment {
        ch_of: assignment.ch_of.clone(),
        role_of,
    }
}
