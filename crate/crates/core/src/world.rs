//! Terrain, node placement, bouncing random-direction motion, unit-disk radio
//! links and the linear battery model.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, SimConfig};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    /// Meters per second.
    pub speed: f64,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    pub battery: f64,
    pub alive: bool,
}

impl NodeState {
    pub fn distance(&self, other: &NodeState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-second battery drain rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    pub e_ordinary: f64,
    pub e_ch_base: f64,
    pub e_ch_per_member: f64,
}

impl EnergyModel {
    pub const ZERO: EnergyModel = EnergyModel {
        e_ordinary: 0.0,
        e_ch_base: 0.0,
        e_ch_per_member: 0.0,
    };

    /// Drain rate of a node; `members` is `Some(m)` for a cluster head with `m` members.
    pub fn rate(&self, members: Option<usize>) -> f64 {
        match members {
            Some(m) => self.e_ch_base + self.e_ch_per_member * m as f64,
            None => self.e_ordinary,
        }
    }
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            e_ordinary: 0.05,
            e_ch_base: 0.05,
            e_ch_per_member: 0.02,
        }
    }
}

/// Undirected graph over an explicit vertex set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn with_vertices(vertices: impl IntoIterator<Item = NodeId>) -> Self {
        Graph {
            adj: vertices.into_iter().map(|v| (v, BTreeSet::new())).collect(),
        }
    }

    /// Builds a graph from an edge list; endpoints become vertices.
    pub fn from_edges(edges: &[(NodeId, NodeId)]) -> Self {
        let mut g = Graph::new();
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_vertex(&mut self, v: NodeId) {
        self.adj.entry(v).or_default();
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        self.add_vertex(a);
        self.add_vertex(b);
        if a != b {
            self.adj.get_mut(&a).unwrap().insert(b);
            self.adj.get_mut(&b).unwrap().insert(a);
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn neighbor_set(&self, v: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.adj.get(&v)
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj.get(&v).map_or(0, |s| s.len())
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adj
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }
}

/// Physical parameters of a world, extracted from a [`SimConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub node_count: usize,
    pub width: f64,
    pub height: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub battery_min: f64,
    pub battery_max: f64,
    pub radio_range: f64,
    /// Seconds between heading re-draws; `0` keeps headings fixed except for bounces.
    pub heading_redraw_interval: f64,
}

impl From<&SimConfig> for WorldParams {
    fn from(c: &SimConfig) -> Self {
        WorldParams {
            node_count: c.node_count,
            width: c.terrain_width,
            height: c.terrain_height,
            speed_min: c.speed_min,
            speed_max: c.speed_max,
            battery_min: c.battery_min,
            battery_max: c.battery_max,
            radio_range: c.radio_range,
            heading_redraw_interval: c.heading_redraw_interval,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub nodes: Vec<NodeState>,
    pub width: f64,
    pub height: f64,
    pub radio_range: f64,
    /// Simulated seconds since start.
    pub clock: f64,
    heading_redraw_interval: f64,
    next_redraw: f64,
    rng: ChaCha8Rng,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.width == other.width
            && self.height == other.height
            && self.radio_range == other.radio_range
            && self.clock == other.clock
            && self.rng == other.rng
    }
}

/// Places nodes on the terrain.
///
/// Draw order from the seeded stream, node by node in ascending ID:
/// x, y, battery, speed, heading.
pub fn init_world(params: &WorldParams, seed: u64) -> Result<World, ConfigError> {
    if params.node_count > 254 {
        return Err(ConfigError::Range {
            key: "node_count".into(),
            message: format!("{} exceeds the 254 identifiers an 8-bit field can carry", params.node_count),
        });
    }
    if !(params.width > 0.0 && params.height > 0.0) {
        return Err(ConfigError::Range {
            key: "terrain_width".into(),
            message: "terrain dimensions must be positive".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(params.node_count);
    for id in 0..params.node_count {
        let x = rng.gen_range(0.0..=params.width);
        let y = rng.gen_range(0.0..=params.height);
        let battery = uniform(&mut rng, params.battery_min, params.battery_max);
        let speed = uniform(&mut rng, params.speed_min, params.speed_max);
        let heading = rng.gen_range(0.0..TAU);
        nodes.push(NodeState {
            id: id as NodeId,
            x,
            y,
            speed,
            heading,
            battery,
            alive: battery > 0.0,
        });
    }
    Ok(World {
        nodes,
        width: params.width,
        height: params.height,
        radio_range: params.radio_range,
        clock: 0.0,
        heading_redraw_interval: params.heading_redraw_interval,
        next_redraw: params.heading_redraw_interval,
        rng,
    })
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Folds a coordinate back into `[0, limit]`; returns whether it bounced an odd
/// number of times.
fn reflect(mut pos: f64, limit: f64) -> (f64, bool) {
    let mut flipped = false;
    loop {
        if pos > limit {
            pos = 2.0 * limit - pos;
        } else if pos < 0.0 {
            pos = -pos;
        } else {
            return (pos, flipped);
        }
        flipped = !flipped;
    }
}

fn normalize_heading(h: f64) -> f64 {
    let h = h.rem_euclid(TAU);
    if h >= TAU {
        0.0
    } else {
        h
    }
}

impl World {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id as usize]
    }

    /// Advances every node `speed * dt` along its heading, reflecting off the
    /// terrain walls.
    pub fn step_motion(&mut self, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        for n in &mut self.nodes {
            if n.speed == 0.0 {
                continue;
            }
            let (dx, dy) = (n.speed * dt * n.heading.cos(), n.speed * dt * n.heading.sin());
            let (x, flip_x) = reflect(n.x + dx, self.width);
            let (y, flip_y) = reflect(n.y + dy, self.height);
            n.x = x;
            n.y = y;
            let mut h = n.heading;
            if flip_x {
                h = std::f64::consts::PI - h;
            }
            if flip_y {
                h = -h;
            }
            n.heading = normalize_heading(h);
        }
        self.clock += dt;
        if self.heading_redraw_interval > 0.0 {
            while self.clock + 1e-9 >= self.next_redraw {
                for n in &mut self.nodes {
                    n.heading = self.rng.gen_range(0.0..TAU);
                }
                self.next_redraw += self.heading_redraw_interval;
            }
        }
    }

    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        let (na, nb) = (self.node(a), self.node(b));
        a != b && na.alive && nb.alive && na.distance(nb) <= self.radio_range
    }

    /// Alive nodes within radio range of `id`, ascending.
    pub fn neighbors_of(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| self.in_range(id, n.id))
            .map(|n| n.id)
            .collect()
    }

    /// Unit-disk graph over alive nodes (closed disk: distance == range links).
    pub fn adjacency(&self) -> Graph {
        let mut g = Graph::with_vertices(self.nodes.iter().filter(|n| n.alive).map(|n| n.id));
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                if self.in_range(a.id, b.id) {
                    g.add_edge(a.id, b.id);
                }
            }
        }
        g
    }

    /// Linear battery drain. `ch_of[v]` is the cluster head of node `v`
    /// (`NO_CLUSTER` if none); heads drain by their number of alive members.
    pub fn drain_energy(&mut self, ch_of: &[NodeId], dt: f64, model: &EnergyModel) {
        let members = member_counts(ch_of, &self.nodes);
        for n in &mut self.nodes {
            if !n.alive {
                continue;
            }
            let is_ch = ch_of.get(n.id as usize) == Some(&n.id);
            let rate = model.rate(is_ch.then(|| members[n.id as usize]));
            n.battery = (n.battery - rate * dt).max(0.0);
            if n.battery <= 0.0 {
                n.alive = false;
            }
        }
    }

    /// Population variance of the battery level over alive nodes.
    pub fn energy_variance(&self) -> f64 {
        let levels: Vec<f64> = self.nodes.iter().filter(|n| n.alive).map(|n| n.battery).collect();
        population_variance(&levels)
    }
}

/// Alive members per cluster head, indexed by head ID.
pub fn member_counts(ch_of: &[NodeId], nodes: &[NodeState]) -> Vec<usize> {
    let mut counts = vec![0usize; nodes.len()];
    for n in nodes.iter().filter(|n| n.alive) {
        if let Some(&ch) = ch_of.get(n.id as usize) {
            if ch != n.id && (ch as usize) < counts.len() {
                counts[ch as usize] += 1;
            }
        }
    }
    counts
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::NO_CLUSTER;

    fn params(n: usize) -> WorldParams {
        WorldParams {
            node_count: n,
            width: 600.0,
            height: 600.0,
            speed_min: 0.0,
            speed_max: 15.0,
            battery_min: 20.0,
            battery_max: 100.0,
            radio_range: 150.0,
            heading_redraw_interval: 0.0,
        }
    }

    fn single(x: f64, y: f64, speed: f64, heading: f64) -> World {
        let mut w = init_world(&params(1), 0).unwrap();
        let n = &mut w.nodes[0];
        n.x = x;
        n.y = y;
        n.speed = speed;
        n.heading = heading;
        w
    }

    #[test]
    fn empty_world() {
        let w = init_world(&params(0), 3).unwrap();
        assert!(w.is_empty());
        assert_eq!(w.adjacency().vertex_count(), 0);
    }

    #[test]
    fn too_many_nodes() {
        assert!(init_world(&params(255), 1).is_err());
        assert!(init_world(&params(254), 1).is_ok());
    }

    #[test]
    fn init_ranges_and_determinism() {
        let a = init_world(&params(50), 1).unwrap();
        let b = init_world(&params(50), 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_world(&params(50), 2).unwrap());
        for n in &a.nodes {
            assert!((0.0..=600.0).contains(&n.x) && (0.0..=600.0).contains(&n.y));
            assert!((20.0..=100.0).contains(&n.battery));
            assert!((0.0..=15.0).contains(&n.speed));
            assert!((0.0..TAU).contains(&n.heading));
        }
    }

    #[test]
    fn zero_speed_is_fixed() {
        let mut w = single(300.0, 300.0, 0.0, 1.0);
        w.step_motion(1.0);
        assert_eq!((w.nodes[0].x, w.nodes[0].y), (300.0, 300.0));
        assert_eq!(w.clock, 1.0);
    }

    #[test]
    fn wall_bounce() {
        let mut w = single(599.0, 300.0, 10.0, 0.0);
        w.step_motion(1.0);
        let n = &w.nodes[0];
        assert!((n.x - 591.0).abs() < 1e-9);
        assert!((n.y - 300.0).abs() < 1e-9);
        assert!((n.heading - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn corner_bounce_flips_both() {
        let h = std::f64::consts::FRAC_PI_4;
        let mut w = single(599.0, 599.0, 10.0, h);
        w.step_motion(1.0);
        let n = &w.nodes[0];
        assert!(n.x < 600.0 && n.y < 600.0);
        assert!((n.heading - (std::f64::consts::PI + h)).abs() < 1e-12);
    }

    #[test]
    fn closed_disk_boundary() {
        let mut w = init_world(&params(2), 0).unwrap();
        w.nodes[0].x = 100.0;
        w.nodes[0].y = 100.0;
        w.nodes[1].x = 250.0;
        w.nodes[1].y = 100.0;
        assert!(w.adjacency().has_edge(0, 1));
        w.nodes[1].x = 250.001;
        assert!(!w.adjacency().has_edge(0, 1));
    }

    #[test]
    fn single_node_has_no_edges() {
        let w = init_world(&params(1), 0).unwrap();
        assert!(w.adjacency().edges().is_empty());
    }

    #[test]
    fn adjacency_matches_brute_force() {
        let w = init_world(&params(10), 11).unwrap();
        let g = w.adjacency();
        for a in &w.nodes {
            for b in &w.nodes {
                let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                assert_eq!(g.has_edge(a.id, b.id), a.id != b.id && d <= 150.0);
            }
        }
    }

    #[test]
    fn dead_nodes_leave_adjacency() {
        let mut w = init_world(&params(2), 0).unwrap();
        w.nodes[1].x = w.nodes[0].x;
        w.nodes[1].y = w.nodes[0].y;
        assert!(w.adjacency().has_edge(0, 1));
        w.nodes[1].alive = false;
        assert!(!w.adjacency().has_edge(0, 1));
        assert!(!w.adjacency().contains(1));
    }

    #[test]
    fn drain_examples() {
        let mut w = init_world(&params(3), 0).unwrap();
        let before = w.clone();
        w.drain_energy(&[0, 0, NO_CLUSTER], 5.0, &EnergyModel::ZERO);
        assert_eq!(w.nodes, before.nodes);

        w.nodes[2].battery = 50.0;
        let model = EnergyModel {
            e_ordinary: 1.0,
            e_ch_base: 1.0,
            e_ch_per_member: 0.5,
        };
        w.drain_energy(&[0, 0, NO_CLUSTER], 5.0, &model);
        assert_eq!(w.nodes[2].battery, 45.0);
        assert!((before.nodes[0].battery - w.nodes[0].battery - 7.5).abs() < 1e-9);
    }

    #[test]
    fn bigger_clusters_drain_heads_faster() {
        let model = EnergyModel::default();
        assert!(model.rate(Some(10)) > model.rate(Some(2)));
        assert!(model.rate(Some(1)) >= model.rate(None));
    }

    #[test]
    fn battery_clamps_and_kills() {
        let mut w = init_world(&params(1), 0).unwrap();
        w.nodes[0].battery = 0.04;
        w.drain_energy(&[NO_CLUSTER], 1.0, &EnergyModel::default());
        assert_eq!(w.nodes[0].battery, 0.0);
        assert!(!w.nodes[0].alive);
    }

    #[test]
    fn variance() {
        assert_eq!(population_variance(&[]), 0.0);
        assert_eq!(population_variance(&[5.0, 5.0]), 0.0);
        assert_eq!(population_variance(&[1.0, 3.0]), 1.0);
    }
}
