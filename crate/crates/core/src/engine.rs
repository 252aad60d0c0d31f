//! Time-stepped simulation of one protocol variant over a mobile world.
//!
//! Time advances in fixed ticks. Each tick, in order:
//!
//! 1. nodes move and drain energy under the current cluster assignment;
//! 2. nodes whose broadcast period ends at this tick process it (ascending
//!    ID), then heads settle admissions;
//! 3. nodes starting a new period draw its send offset from the protocol
//!    stream (ascending ID);
//! 4. due Hellos are encoded, counted on the bus, decoded and delivered to
//!    every alive node in range;
//! 5. at each observation boundary cluster changes are counted.
//!
//! The world and protocol use separate random streams, so all four variants
//! see identical node trajectories for a given seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{decode_hello, encode_hello, packet_size_bits, CodecError, HelloPacket, ProtocolVariant, NO_CLUSTER};
use crate::config::{ConfigError, SimConfig, SweepAxis};
use crate::protocols::abp::{resolve_admissions, NodeEvent};
use crate::protocols::{classify_roles, hd_assign, lid_assign, AbpNode, AbpParams, ClusterAssignment};
use crate::world::{init_world, Graph, World, WorldParams};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("codec failure: {0}")]
    Codec(#[from] CodecError),
    #[error("no seeds given")]
    NoSeeds,
    #[error("sweep needs at least one value and one variant")]
    EmptySweep,
}

impl SimError {
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Config(_) | SimError::NoSeeds | SimError::EmptySweep)
    }
}

/// Cumulative counters at one observation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSample {
    pub cycle: u64,
    pub time: f64,
    pub msgs: u64,
    pub bits: u64,
    pub ch_changes: u64,
    pub energy_var: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub control_msgs: u64,
    pub control_bits: u64,
    /// Nodes whose head differs from the previous observation, not counting
    /// first acquisition.
    pub ch_changes: u64,
    /// Heads that stopped being heads between observations.
    pub head_changes: u64,
    /// Battery variance over alive nodes at the end of the run.
    pub energy_variance: f64,
    /// Most members any head held at any point.
    pub max_cluster_size: usize,
    pub series: Vec<CycleSample>,
}

/// Independent count of what crossed the shared medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BusTap {
    pub packets: u64,
    pub bits: u64,
}

/// Nodes whose head changed, ignoring nodes that had none before.
pub fn count_ch_change(prev: &ClusterAssignment, cur: &ClusterAssignment) -> usize {
    prev.ch_of
        .iter()
        .filter(|&(v, &c)| c != NO_CLUSTER && cur.ch(*v) != c)
        .count()
}

fn count_changes(prev: &[NodeId], cur: &[NodeId]) -> (u64, u64) {
    let mut ch = 0;
    let mut heads = 0;
    for (v, (&p, &c)) in prev.iter().zip(cur).enumerate() {
        if p != NO_CLUSTER && p != c {
            ch += 1;
        }
        if p as usize == v && c as usize != v {
            heads += 1;
        }
    }
    (ch, heads)
}

fn max_members(ch_of: &[NodeId]) -> usize {
    let mut counts = vec![0usize; ch_of.len()];
    for (v, &c) in ch_of.iter().enumerate() {
        if c as usize != v && (c as usize) < ch_of.len() && ch_of[c as usize] == c {
            counts[c as usize] += 1;
        }
    }
    counts.into_iter().max().unwrap_or(0)
}

#[derive(Debug, Clone)]
struct Window {
    end: u64,
    send_at: Option<u64>,
}

#[derive(Debug, Clone)]
enum Protocol {
    /// Per-node state machines: ABP, or VC when `capped` is false.
    Nodes {
        params: AbpParams,
        nodes: Vec<AbpNode>,
        capped: bool,
    },
    /// Graph elections over who heard whom during the last period.
    Baseline {
        period: u64,
        ch_of: Vec<NodeId>,
        heard: Vec<BTreeSet<NodeId>>,
    },
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    variant: ProtocolVariant,
    world: World,
    rng: ChaCha8Rng,
    protocol: Protocol,
    windows: Vec<Window>,
    dt: f64,
    now: u64,
    total: u64,
    obs_ticks: u64,
    last_obs: Vec<NodeId>,
    metrics: MetricsRecord,
    bus: BusTap,
    sent_this_tick: u64,
    events: Vec<(u64, NodeEvent)>,
    started: bool,
}

impl Simulation {
    pub fn new(config: &SimConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let world = init_world(&WorldParams::from(config), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let n = config.node_count;
        let variant = config.variant;
        let protocol = match variant {
            ProtocolVariant::Abp | ProtocolVariant::Vc => {
                let capped = variant == ProtocolVariant::Abp;
                let params = if capped { config.abp_params() } else { config.vc_params() };
                let nodes = world
                    .nodes
                    .iter()
                    .map(|s| AbpNode::new(s.id, s.battery, &params))
                    .collect();
                Protocol::Nodes { params, nodes, capped }
            }
            _ => Protocol::Baseline {
                period: config.ticks_for(config.baseline_bp),
                ch_of: vec![NO_CLUSTER; n],
                heard: vec![BTreeSet::new(); n],
            },
        };
        let obs_ticks = match variant {
            ProtocolVariant::Abp => config.ticks_for(config.bp_min),
            _ => config.ticks_for(config.baseline_bp),
        };
        Ok(Simulation {
            config: config.clone(),
            variant,
            world,
            rng,
            protocol,
            windows: vec![Window { end: 0, send_at: None }; n],
            dt: config.tick_seconds(),
            now: 0,
            total: config.ticks_for(config.duration),
            obs_ticks,
            last_obs: vec![NO_CLUSTER; n],
            metrics: MetricsRecord::default(),
            bus: BusTap::default(),
            sent_this_tick: 0,
            events: Vec::new(),
            started: false,
        })
    }

    pub fn variant(&self) -> ProtocolVariant {
        self.variant
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Current tick; the first call to [`Simulation::step`] handles tick 0.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn total_ticks(&self) -> u64 {
        self.total
    }

    pub fn ticks_per_second(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn is_finished(&self) -> bool {
        self.started && self.now >= self.total
    }

    pub fn metrics(&self) -> &MetricsRecord {
        &self.metrics
    }

    pub fn bus(&self) -> BusTap {
        self.bus
    }

    /// Hellos sent during the last processed tick.
    pub fn sent_last_tick(&self) -> u64 {
        self.sent_this_tick
    }

    /// Protocol events with the tick they happened at (adaptive variant only).
    pub fn events(&self) -> &[(u64, NodeEvent)] {
        &self.events
    }

    pub fn abp_nodes(&self) -> Option<&[AbpNode]> {
        match &self.protocol {
            Protocol::Nodes { nodes, .. } => Some(nodes),
            Protocol::Baseline { .. } => None,
        }
    }

    pub fn abp_params(&self) -> Option<&AbpParams> {
        match &self.protocol {
            Protocol::Nodes { params, .. } => Some(params),
            Protocol::Baseline { .. } => None,
        }
    }

    /// Head of every node, indexed by ID.
    pub fn ch_vector(&self) -> Vec<NodeId> {
        match &self.protocol {
            Protocol::Nodes { nodes, .. } => nodes.iter().map(|n| n.ch_id).collect(),
            Protocol::Baseline { ch_of, .. } => ch_of.clone(),
        }
    }

    /// Current clustering with roles derived from the radio graph.
    pub fn assignment(&self) -> ClusterAssignment {
        let ch_of: BTreeMap<NodeId, NodeId> = self
            .ch_vector()
            .into_iter()
            .enumerate()
            .filter(|&(v, _)| self.world.nodes[v].alive)
            .map(|(v, c)| (v as NodeId, c))
            .collect();
        classify_roles(&ClusterAssignment::from_heads(ch_of), &self.world.adjacency())
    }

    /// Advances one tick. Returns `false` once the run is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if !self.started {
            self.started = true;
            self.sent_this_tick = 0;
            let starting: Vec<usize> = (0..self.windows.len()).collect();
            self.begin_windows(&starting);
            if self.total > 0 {
                self.send_due()?;
            }
            return Ok(self.now < self.total);
        }
        if self.now >= self.total {
            return Ok(false);
        }
        self.now += 1;
        self.sent_this_tick = 0;
        let t = self.now;

        self.world.step_motion(self.dt);
        let before = self.ch_vector();
        self.world.drain_energy(&before, self.dt, &self.config.energy);
        self.sync_nodes();

        let ending: Vec<usize> = (0..self.windows.len())
            .filter(|&v| self.world.nodes[v].alive && self.windows[v].end == t)
            .collect();
        if !ending.is_empty() {
            self.process(&ending, t);
            self.begin_windows(&ending);
        }
        if t < self.total {
            self.send_due()?;
        }
        if t.is_multiple_of(self.obs_ticks) {
            self.observe(t);
        }
        if t == self.total {
            self.metrics.energy_variance = self.world.energy_variance();
        }
        Ok(t < self.total)
    }

    pub fn run_to_end(&mut self) -> Result<&MetricsRecord, SimError> {
        while self.step()? {}
        Ok(&self.metrics)
    }

    pub fn into_metrics(self) -> MetricsRecord {
        self.metrics
    }

    fn sync_nodes(&mut self) {
        match &mut self.protocol {
            Protocol::Nodes { nodes, .. } => {
                for (n, s) in nodes.iter_mut().zip(&self.world.nodes) {
                    n.battery = s.battery;
                    if !s.alive && (n.ch_id != NO_CLUSTER || !n.neighbors().is_empty()) {
                        n.shut_down();
                    }
                }
            }
            Protocol::Baseline { ch_of, .. } => {
                for (c, s) in ch_of.iter_mut().zip(&self.world.nodes) {
                    if !s.alive {
                        *c = NO_CLUSTER;
                    }
                }
            }
        }
    }

    fn process(&mut self, ending: &[usize], t: u64) {
        let alive: Vec<bool> = self.world.nodes.iter().map(|n| n.alive).collect();
        match &mut self.protocol {
            Protocol::Nodes { params, nodes, capped } => {
                let prior: BTreeMap<NodeId, NodeId> = nodes.iter().map(|n| (n.id, n.ch_id)).collect();
                for &v in ending {
                    for e in nodes[v].end_cycle(t, params) {
                        self.events.push((t, e));
                    }
                }
                if *capped {
                    for e in resolve_admissions(nodes, &prior, params.chc.t) {
                        self.events.push((t, e));
                    }
                }
                let ch: Vec<NodeId> = nodes.iter().map(|n| n.ch_id).collect();
                self.metrics.max_cluster_size = self.metrics.max_cluster_size.max(max_members(&ch));
            }
            Protocol::Baseline { ch_of, heard, .. } => {
                let mut g = Graph::with_vertices((0..alive.len()).filter(|&v| alive[v]).map(|v| v as NodeId));
                for (u, senders) in heard.iter().enumerate() {
                    for &s in senders {
                        if alive[u] && alive[s as usize] {
                            g.add_edge(u as NodeId, s);
                        }
                    }
                }
                let a = match self.variant {
                    ProtocolVariant::Lid => lid_assign(&g),
                    _ => hd_assign(&g),
                };
                for (v, c) in ch_of.iter_mut().enumerate() {
                    *c = a.ch(v as NodeId);
                }
                for h in heard.iter_mut() {
                    h.clear();
                }
                self.metrics.max_cluster_size = self.metrics.max_cluster_size.max(a.max_cluster_size());
            }
        }
    }

    fn begin_windows(&mut self, starting: &[usize]) {
        let t = self.now;
        for &v in starting {
            if !self.world.nodes[v].alive {
                self.windows[v].send_at = None;
                continue;
            }
            let len = match &mut self.protocol {
                Protocol::Nodes { params, nodes, .. } => nodes[v].begin_cycle(params),
                Protocol::Baseline { period, .. } => *period,
            };
            let offset = self.rng.gen_range(0..len);
            self.windows[v] = Window {
                end: t + len,
                send_at: Some(t + offset),
            };
        }
    }

    fn make_packet(&mut self, v: usize) -> HelloPacket {
        let variant = self.variant;
        match &mut self.protocol {
            Protocol::Nodes { params, nodes, .. } => nodes[v].make_hello(params).normalized_for(variant),
            Protocol::Baseline { .. } => HelloPacket::bare(v as NodeId),
        }
    }

    fn send_due(&mut self) -> Result<(), SimError> {
        let t = self.now;
        let due: Vec<usize> = (0..self.windows.len())
            .filter(|&v| self.windows[v].send_at == Some(t) && self.world.nodes[v].alive)
            .collect();
        for v in due {
            let packet = self.make_packet(v);
            let bits = encode_hello(&packet, self.variant)?;
            self.bus.packets += 1;
            self.bus.bits += bits.len() as u64;
            self.metrics.control_msgs += 1;
            self.metrics.control_bits += packet_size_bits(self.variant) as u64;
            self.sent_this_tick += 1;
            let received = decode_hello(&bits, self.variant)?;
            let receivers: Vec<usize> = self
                .world
                .neighbors_of(v as NodeId)
                .into_iter()
                .map(|u| u as usize)
                .collect();
            match &mut self.protocol {
                Protocol::Nodes { params, nodes, .. } => {
                    for u in receivers {
                        nodes[u].receive(&received, t, params);
                    }
                }
                Protocol::Baseline { heard, .. } => {
                    for u in receivers {
                        heard[u].insert(received.mh_id);
                    }
                }
            }
        }
        Ok(())
    }

    fn observe(&mut self, t: u64) {
        let mut cur = self.ch_vector();
        for (c, s) in cur.iter_mut().zip(&self.world.nodes) {
            if !s.alive {
                *c = NO_CLUSTER;
            }
        }
        let (ch, heads) = count_changes(&self.last_obs, &cur);
        self.metrics.ch_changes += ch;
        self.metrics.head_changes += heads;
        self.last_obs = cur;
        let energy_var = self.world.energy_variance();
        self.metrics.series.push(CycleSample {
            cycle: t / self.obs_ticks,
            time: t as f64 * self.dt,
            msgs: self.metrics.control_msgs,
            bits: self.metrics.control_bits,
            ch_changes: self.metrics.ch_changes,
            energy_var,
        });
    }
}

/// One complete run.
pub fn run(config: &SimConfig, seed: u64) -> Result<MetricsRecord, SimError> {
    let mut sim = Simulation::new(config, seed)?;
    sim.run_to_end()?;
    Ok(sim.into_metrics())
}

/// Metric means over several runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsSummary {
    pub control_msgs: f64,
    pub control_bits: f64,
    pub ch_changes: f64,
    pub head_changes: f64,
    pub energy_variance: f64,
    pub max_cluster_size: f64,
}

impl MetricsSummary {
    pub const NAMES: [&'static str; 6] = [
        "control_msgs",
        "control_bits",
        "ch_changes",
        "head_changes",
        "energy_variance",
        "max_cluster_size",
    ];

    pub fn from_record(r: &MetricsRecord) -> Self {
        MetricsSummary {
            control_msgs: r.control_msgs as f64,
            control_bits: r.control_bits as f64,
            ch_changes: r.ch_changes as f64,
            head_changes: r.head_changes as f64,
            energy_variance: r.energy_variance,
            max_cluster_size: r.max_cluster_size as f64,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        Some(match metric {
            "control_msgs" => self.control_msgs,
            "control_bits" => self.control_bits,
            "ch_changes" => self.ch_changes,
            "head_changes" => self.head_changes,
            "energy_variance" => self.energy_variance,
            "max_cluster_size" => self.max_cluster_size,
            _ => return None,
        })
    }

    pub fn mean(records: &[MetricsRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let sums = records.iter().map(Self::from_record).fold(MetricsSummary::default(), |a, b| MetricsSummary {
            control_msgs: a.control_msgs + b.control_msgs,
            control_bits: a.control_bits + b.control_bits,
            ch_changes: a.ch_changes + b.ch_changes,
            head_changes: a.head_changes + b.head_changes,
            energy_variance: a.energy_variance + b.energy_variance,
            max_cluster_size: a.max_cluster_size + b.max_cluster_size,
        });
        MetricsSummary {
            control_msgs: sums.control_msgs / n,
            control_bits: sums.control_bits / n,
            ch_changes: sums.ch_changes / n,
            head_changes: sums.head_changes / n,
            energy_variance: sums.energy_variance / n,
            max_cluster_size: sums.max_cluster_size / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub mean: MetricsSummary,
    pub runs: Vec<(u64, MetricsRecord)>,
}

impl BatchResult {
    fn from_runs(runs: Vec<(u64, MetricsRecord)>) -> Self {
        let records: Vec<MetricsRecord> = runs.iter().map(|(_, r)| r.clone()).collect();
        BatchResult {
            mean: MetricsSummary::mean(&records),
            runs,
        }
    }

    /// Population standard deviation of one metric across the runs.
    pub fn stddev(&self, metric: &str) -> f64 {
        let values: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|(_, r)| MetricsSummary::from_record(r).get(metric))
            .collect();
        crate::world::population_variance(&values).sqrt()
    }
}

/// Thread pool honoring `ABP_SIM_THREADS` (unset or `0` means one per core).
pub fn thread_pool() -> rayon::ThreadPool {
    let n = std::env::var("ABP_SIM_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
}

fn run_jobs(jobs: Vec<(SimConfig, u64)>) -> Result<Vec<MetricsRecord>, SimError> {
    thread_pool().install(|| jobs.par_iter().map(|(c, s)| run(c, *s)).collect())
}

/// Runs `config` once per seed and averages.
pub fn run_batch(config: &SimConfig, seeds: &[u64]) -> Result<BatchResult, SimError> {
    if seeds.is_empty() {
        return Err(SimError::NoSeeds);
    }
    config.validate()?;
    let records = run_jobs(seeds.iter().map(|&s| (config.clone(), s)).collect())?;
    Ok(BatchResult::from_runs(seeds.iter().copied().zip(records).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: ProtocolVariant,
    pub axis_value: f64,
    pub batch: BatchResult,
}

/// Configuration for one point of a sweep.
pub fn point_config(base: &SimConfig, axis: SweepAxis, value: f64, variant: ProtocolVariant) -> SimConfig {
    let mut c = match axis {
        SweepAxis::NodeCount => SimConfig {
            node_count: value as usize,
            ..base.clone()
        },
        SweepAxis::MeanSpeed => base.with_mean_speed(value),
    };
    c.variant = variant;
    c
}

/// Every (variant, value) combination, averaged over `seeds`; rows ordered
/// by variant, then value.
pub fn sweep(
    base: &SimConfig,
    axis: SweepAxis,
    values: &[f64],
    variants: &[ProtocolVariant],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, SimError> {
    if values.is_empty() || variants.is_empty() {
        return Err(SimError::EmptySweep);
    }
    if seeds.is_empty() {
        return Err(SimError::NoSeeds);
    }
    let mut points = Vec::new();
    for &variant in variants {
        for &value in values {
            let c = point_config(base, axis, value, variant);
            c.validate()?;
            points.push((variant, value, c));
        }
    }
    let jobs: Vec<(SimConfig, u64)> = points
        .iter()
        .flat_map(|(_, _, c)| seeds.iter().map(move |&s| (c.clone(), s)))
        .collect();
    let mut records = run_jobs(jobs)?.into_iter();
    Ok(points
        .into_iter()
        .map(|(variant, axis_value, _)| {
            let runs = seeds.iter().map(|&s| (s, records.next().expect("one record per job"))).collect();
            SweepRow {
                variant,
                axis_value,
                batch: BatchResult::from_runs(runs),
            }
        })
        .collect())
}
