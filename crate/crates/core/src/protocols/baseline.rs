//! Elections used by the LID, HD and VC baselines.
//!
//! All three share one rule parameterized by a ranking key. Nodes are taken
//! in rank order (ties to the lower ID); a node no head covers yet becomes a
//! head and covers its neighbors. Every other node then joins the
//! best-ranked head it can hear. The first pass picks exactly the nodes that
//! outrank their whole closed neighborhood; later picks settle the nodes
//! those heads left uncovered.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::{classify_roles, ClusterAssignment};
use crate::world::Graph;
use crate::NodeId;

/// `true` when `a` outranks `b`.
fn outranks<K: PartialOrd>(key_a: &K, a: NodeId, key_b: &K, b: NodeId) -> bool {
    match key_a.partial_cmp(key_b) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => a < b,
    }
}

pub fn elect_by_key<K, F>(graph: &Graph, key: F) -> ClusterAssignment
where
    K: PartialOrd,
    F: Fn(NodeId) -> K,
{
    let keys: BTreeMap<NodeId, K> = graph.vertices().map(|v| (v, key(v))).collect();
    let mut order: Vec<NodeId> = graph.vertices().collect();
    order.sort_by(|&a, &b| {
        if a == b {
            Ordering::Equal
        } else if outranks(&keys[&a], a, &keys[&b], b) {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    });

    let mut covered = BTreeSet::new();
    let mut heads = BTreeSet::new();
    for v in order {
        if covered.insert(v) {
            heads.insert(v);
            covered.extend(graph.neighbors(v));
        }
    }

    let ch_of = graph
        .vertices()
        .map(|v| {
            if heads.contains(&v) {
                return (v, v);
            }
            let best = graph
                .neighbors(v)
                .filter(|u| heads.contains(u))
                .reduce(|a, b| if outranks(&keys[&b], b, &keys[&a], a) { b } else { a })
                .expect("every non-head neighbors a head");
            (v, best)
        })
        .collect();
    classify_roles(&ClusterAssignment::from_heads(ch_of), graph)
}

/// Lowest identifier wins.
pub fn lid_assign(graph: &Graph) -> ClusterAssignment {
    elect_by_key(graph, std::cmp::Reverse)
}

/// Highest degree wins.
pub fn hd_assign(graph: &Graph) -> ClusterAssignment {
    elect_by_key(graph, |v| graph.degree(v))
}

/// Highest vote `c1·d + c2·b` wins; missing batteries count as zero.
pub fn vc_assign(graph: &Graph, batteries: &BTreeMap<NodeId, f64>, c1: f64, c2: f64) -> ClusterAssignment {
    elect_by_key(graph, |v| {
        c1 * graph.degree(v) as f64 + c2 * batteries.get(&v).copied().unwrap_or(0.0)
    })
}
