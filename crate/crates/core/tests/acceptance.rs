//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use abp_sim::codec::{decode_hello, encode_hello, packet_size_bits, BitString, ChcQuantizer, HelloPacket, ProtocolVariant, NO_CLUSTER};
use abp_sim::config::{SimConfig, SweepAxis};
use abp_sim::engine::{sweep, Simulation, SweepRow};
use abp_sim::mobility::{mobility_rate, BpController, TopologyHistoryTable};
use abp_sim::protocols::abp::LockstepNetwork;
use abp_sim::protocols::{chc, hd_assign, lid_assign, AbpParams, ChcParams};
use abp_sim::world::{EnergyModel, Graph};
use abp_sim::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

/// (MH ID, d, b, CHC) as printed in the reference table.
const TABLE_I: [(NodeId, usize, f64, f64); 15] = [
    (1, 6, 4.0, 3.8),
    (2, 4, 5.0, 3.6),
    (3, 4, 3.0, 2.4),
    (4, 3, 4.0, 2.6),
    (5, 2, 2.0, 1.0),
    (6, 5, 4.0, 3.4),
    (7, 5, 2.0, 2.2),
    (8, 5, 1.0, 1.6),
    (9, 5, 4.0, 3.4),
    (10, 5, 5.0, 4.0),
    (11, 2, 4.0, 2.2),
    (12, 5, 2.0, 2.2),
    (13, 3, 4.0, 2.6),
    (14, 2, 7.0, 4.0),
    (15, 4, 2.0, 1.8),
];

/// Placement consistent with every node's degree in the table; heads of the
/// illustrated clustering are 1, 10 and 14.
const FIG4_EDGES: [(NodeId, NodeId); 30] = [
    (1, 2),
    (1, 3),
    (1, 4),
    (1, 5),
    (1, 6),
    (1, 7),
    (10, 8),
    (10, 9),
    (10, 11),
    (10, 12),
    (10, 13),
    (14, 15),
    (14, 9),
    (2, 3),
    (2, 6),
    (2, 7),
    (3, 4),
    (3, 6),
    (4, 5),
    (6, 7),
    (6, 8),
    (7, 8),
    (7, 12),
    (8, 9),
    (8, 12),
    (9, 15),
    (12, 15),
    (13, 15),
    (12, 13),
    (9, 11),
];

fn table_params() -> ChcParams {
    ChcParams::new(0.4, 0.6, 1, 10).unwrap()
}

fn c1_table() -> Outcome {
    let p = table_params();
    let worst = TABLE_I
        .iter()
        .map(|&(_, d, b, want)| (chc(d, b, false, &p) - want).abs())
        .fold(0.0, f64::max);
    check(worst < 1e-9, format!("15 rows, max error {worst:.1e}"), format!("max error {worst:.3e}"))
}

fn c2_figure4() -> Outcome {
    let g = Graph::from_edges(&FIG4_EDGES);
    for &(v, d, _, _) in &TABLE_I {
        if g.degree(v) != d {
            return Err(format!("node {v} has degree {} in the placement, table says {d}", g.degree(v)));
        }
    }
    let batteries: BTreeMap<NodeId, f64> = TABLE_I.iter().map(|&(v, _, b, _)| (v, b)).collect();
    let params = AbpParams {
        chc: table_params(),
        quantizer: ChcQuantizer::new(0.05).unwrap(),
        bp: BpController::new(1.0, 8.0, 8.0).unwrap(),
        bp_min_ticks: 10,
        history_depth: 5,
    };
    let mut net = LockstepNetwork::new(g.clone(), &batteries, params);
    net.round();
    net.round();
    let heads = net.assignment().heads();

    // local-maximum property on the table inputs, independent of the node logic
    let score: BTreeMap<NodeId, f64> = TABLE_I.iter().map(|&(v, _, _, c)| (v, c)).collect();
    let local_max: Vec<NodeId> = g
        .vertices()
        .filter(|&v| {
            g.neighbors(v)
                .all(|u| score[&v] > score[&u] + 1e-12 || ((score[&v] - score[&u]).abs() < 1e-12 && v < u))
        })
        .collect();
    check(
        heads == vec![1, 10, 14] && local_max == heads,
        format!("heads {heads:?} after two cycles"),
        format!("heads {heads:?}, local maxima {local_max:?}"),
    )
}

fn c3_mobility_rate() -> Outcome {
    let mut tht = TopologyHistoryTable::new(5);
    let rows: [&[NodeId]; 4] = [&[2, 3, 4, 5, 8, 12], &[2, 3, 5, 9, 12], &[2, 3, 5], &[3, 8, 12, 14]];
    for (i, r) in rows.iter().enumerate() {
        tht.record(i as u64, r.iter().copied().collect());
    }
    let mr = mobility_rate(&tht);
    check(mr == Some(10.0 / 3.0), format!("MR = {:?}", mr), format!("MR = {mr:?}"))
}

fn random_packet(rng: &mut ChaCha8Rng) -> HelloPacket {
    HelloPacket {
        mh_id: rng.gen_range(0..=254),
        ch_id: rng.gen(),
        chc: rng.gen(),
        option: rng.gen_range(0..=15),
        bp_code: rng.gen(),
    }
}

fn c4_codec() -> Outcome {
    let sizes: Vec<usize> = ProtocolVariant::ALL.iter().map(|&v| packet_size_bits(v)).collect();
    if sizes != vec![8, 8, 32, 36] {
        return Err(format!("packet sizes {sizes:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let per_variant = 10_000;
    for v in ProtocolVariant::ALL {
        for _ in 0..per_variant {
            let p = random_packet(&mut rng).normalized_for(v);
            let bits = encode_hello(&p, v).map_err(|e| format!("{v}: encode {p:?}: {e}"))?;
            if bits.len() != packet_size_bits(v) {
                return Err(format!("{v}: {} bits", bits.len()));
            }
            let back = decode_hello(&bits, v).map_err(|e| format!("{v}: decode: {e}"))?;
            if back != p {
                return Err(format!("{v}: {p:?} came back as {back:?}"));
            }
            // and from the wire side: any decodable bit string re-encodes to itself
            let raw: Vec<bool> = (0..packet_size_bits(v)).map(|_| rng.gen()).collect();
            let raw = BitString::from(raw);
            if let Ok(q) = decode_hello(&raw, v) {
                if encode_hello(&q, v).ok().as_ref() != Some(&raw) {
                    return Err(format!("{v}: {raw} does not re-encode"));
                }
            }
        }
    }
    Ok(format!("{per_variant} packets per variant, sizes {sizes:?}"))
}

fn static_config(seed_nodes: usize) -> SimConfig {
    SimConfig {
        node_count: seed_nodes,
        speed_min: 0.0,
        speed_max: 0.0,
        ..SimConfig::default()
    }
}

fn c5_two_cycle_formation() -> Outcome {
    let c = static_config(50);
    let mut dangling = 0;
    let mut singletons = 0;
    for seed in 1..=20u64 {
        let mut sim = Simulation::new(&c, seed).map_err(|e| e.to_string())?;
        let period = sim.abp_params().unwrap().bp_min_ticks;
        while sim.now() < period {
            sim.step().map_err(|e| e.to_string())?;
        }
        if sim.ch_vector().iter().any(|&c| c != NO_CLUSTER) {
            return Err(format!("seed {seed}: a node picked a head after one cycle"));
        }
        while sim.now() < 2 * period {
            sim.step().map_err(|e| e.to_string())?;
        }
        let ch = sim.ch_vector();
        for (v, &h) in ch.iter().enumerate() {
            if h == NO_CLUSTER {
                return Err(format!("seed {seed}: node {v} has no head after two cycles"));
            }
            if h as usize != v && !sim.world().in_range(v as NodeId, h) {
                return Err(format!("seed {seed}: node {v} picked {h}, which it cannot hear"));
            }
            if h as usize != v && ch[h as usize] != h {
                dangling += 1;
            }
            if h as usize == v && !ch.iter().enumerate().any(|(u, &x)| x == h && u != v) {
                singletons += 1;
            }
        }
    }
    Ok(format!(
        "20 seeds: every node chose a head at the end of cycle 2 ({dangling} picked a neighbor that chose higher, {singletons} singleton heads)"
    ))
}

fn figure_base() -> SimConfig {
    SimConfig {
        node_count: 50,
        seeds: 5,
        ..SimConfig::default()
    }
}

fn seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

fn c6_cluster_bound() -> Outcome {
    let base = figure_base();
    let speeds: Vec<f64> = (0..=15).map(f64::from).collect();
    let counts: Vec<f64> = (1..=6).map(|k| 20.0 * k as f64).collect();
    let mut rows = sweep(&base, SweepAxis::MeanSpeed, &speeds, &[ProtocolVariant::Abp], &seeds(5)).map_err(|e| e.to_string())?;
    rows.extend(sweep(&base, SweepAxis::NodeCount, &counts, &[ProtocolVariant::Abp], &seeds(5)).map_err(|e| e.to_string())?);
    let worst = rows
        .iter()
        .flat_map(|r| r.batch.runs.iter().map(|(_, m)| m.max_cluster_size))
        .max()
        .unwrap_or(0);
    let runs: usize = rows.iter().map(|r| r.batch.runs.len()).sum();
    check(worst <= 10, format!("{runs} runs of 180 s, largest cluster {worst} members"), format!("a head held {worst} members"))
}

fn row(rows: &[SweepRow], v: ProtocolVariant, x: f64) -> &SweepRow {
    rows.iter().find(|r| r.variant == v && r.axis_value == x).expect("sweep row")
}

fn short_runs() -> SimConfig {
    SimConfig {
        duration: 60.0,
        baseline_bp: 1.0,
        bp_min: 1.0,
        ..figure_base()
    }
}

fn c7_messages(rows: &[SweepRow]) -> Outcome {
    use ProtocolVariant::*;
    let mut notes = Vec::new();
    for x in [0.0, 1.0, 2.0] {
        let abp = row(rows, Abp, x).batch.mean.control_msgs;
        let lid = row(rows, Lid, x).batch.mean.control_msgs;
        notes.push(format!("{x}: {abp:.0}/{lid:.0}"));
        if abp >= lid {
            return Err(format!("speed {x}: ABP {abp} >= LID {lid}"));
        }
        if x == 0.0 && abp / lid > 0.7 {
            return Err(format!("speed 0: ratio {:.3} > 0.7", abp / lid));
        }
    }
    for r in rows.iter().filter(|r| r.variant == Lid) {
        let lid: Vec<u64> = r.batch.runs.iter().map(|(_, m)| m.control_msgs).collect();
        for v in [Hd, Vc] {
            let other: Vec<u64> = row(rows, v, r.axis_value).batch.runs.iter().map(|(_, m)| m.control_msgs).collect();
            if other != lid {
                return Err(format!("speed {}: {v} sent {other:?}, LID {lid:?}", r.axis_value));
            }
        }
    }
    Ok(format!("ABP/LID messages {}; baselines equal per seed", notes.join(", ")))
}

fn c8_bits(rows: &[SweepRow], speeds: &[f64]) -> Outcome {
    use ProtocolVariant::*;
    let mut notes = Vec::new();
    for &x in speeds {
        let abp = row(rows, Abp, x).batch.mean.control_bits;
        let vc = row(rows, Vc, x).batch.mean.control_bits;
        let lid = row(rows, Lid, x).batch.mean.control_bits;
        notes.push(format!("{x}: {abp:.0}/{lid:.0}/{vc:.0}"));
        if abp >= vc {
            return Err(format!("speed {x}: ABP {abp} >= VC {vc}"));
        }
        if [0.0, 2.0, 5.0].contains(&x) && abp >= lid {
            return Err(format!("speed {x}: ABP {abp} >= LID {lid}"));
        }
    }
    Ok(format!("ABP/LID/VC bits {}", notes.join(", ")))
}

fn ordering(label: &str, pairs: &[(&str, f64)], strict: &[bool]) -> Outcome {
    let text = pairs.iter().map(|(n, v)| format!("{n} {v:.2}")).collect::<Vec<_>>().join(", ");
    for (i, w) in pairs.windows(2).enumerate() {
        let ok = if strict[i] { w[0].1 < w[1].1 } else { w[0].1 <= w[1].1 };
        if !ok {
            let op = if strict[i] { "<" } else { "<=" };
            return Err(format!("{label}: expected {} {op} {} ({text})", w[0].0, w[1].0));
        }
    }
    Ok(format!("{label}: {text}"))
}

fn c9_c10() -> (Outcome, Outcome) {
    use ProtocolVariant::*;
    let rows = match sweep(&figure_base(), SweepAxis::MeanSpeed, &[5.0], &ProtocolVariant::ALL, &seeds(5)) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let m = |v| row(&rows, v, 5.0).batch.mean;
    let c9 = ordering(
        "CH changes",
        &[("LID", m(Lid).ch_changes), ("ABP", m(Abp).ch_changes), ("HD", m(Hd).ch_changes), ("VC", m(Vc).ch_changes)],
        &[false, true, true],
    );
    let c10 = ordering(
        "energy variance",
        &[
            ("VC", m(Vc).energy_variance),
            ("ABP", m(Abp).energy_variance),
            ("HD", m(Hd).energy_variance),
            ("LID", m(Lid).energy_variance),
        ],
        &[false, true, true],
    );
    (c9, c10)
}

fn c11_static_convergence() -> Outcome {
    let mut c = static_config(50);
    c.energy = EnergyModel::ZERO;
    let mut worst_ratio = f64::INFINITY;
    for seed in 1..=5u64 {
        let mut sim = Simulation::new(&c, seed).map_err(|e| e.to_string())?;
        let params = *sim.abp_params().unwrap();
        let l = params.bp_min_ticks;
        let max_code = params.bp_max_code();
        let formed = 2 * l;
        let settled = formed + (c.n as u64 + 2) * l;

        let mut first_period = 0;
        let mut changes_after = None;
        let mut tail_start_msgs = 0;
        let tail_start = settled + max_code as u64 * l;
        while !sim.is_finished() {
            sim.step().map_err(|e| e.to_string())?;
            let t = sim.now();
            if t == l - 1 {
                first_period = sim.metrics().control_msgs;
            }
            if t == settled {
                changes_after = Some(sim.metrics().ch_changes);
            }
            if t >= settled {
                let nodes = sim.abp_nodes().unwrap();
                if let Some(n) = nodes.iter().find(|n| n.window_code() != max_code || n.cluster_bp_code(&params) != max_code) {
                    return Err(format!("seed {seed}: node {} runs period code {} at tick {t}", n.id, n.window_code()));
                }
            }
            if t == tail_start - 1 {
                tail_start_msgs = sim.metrics().control_msgs;
            }
        }
        let m = sim.metrics();
        if Some(m.ch_changes) != changes_after {
            return Err(format!("seed {seed}: {} head changes after convergence", m.ch_changes - changes_after.unwrap_or(0)));
        }
        // every node sends once per window of `max_code` periods, so over k
        // full windows each node sends k - 1, k or k + 1 times
        let tail_periods = (sim.total_ticks() - tail_start) / l;
        let k = tail_periods as f64 / max_code as f64;
        let tail_rate = (m.control_msgs - tail_start_msgs) as f64 / tail_periods as f64;
        let ratio = first_period as f64 / tail_rate;
        let factor = params.bp.bp_max() / params.bp.bp_min();
        let (lo, hi) = (factor * k / (k + 1.0), factor * k / (k - 1.0));
        if !(lo..=hi).contains(&ratio) {
            return Err(format!("seed {seed}: message drop factor {ratio:.2} outside [{lo:.2}, {hi:.2}]"));
        }
        worst_ratio = worst_ratio.min(ratio);
    }
    Ok(format!("5 seeds: all clusters at bp_max by n + 2 periods after formation, no later changes, drop factor >= {worst_ratio:.2}"))
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: u8) -> Graph {
    let n = rng.gen_range(1..=max_nodes);
    let density: f64 = rng.gen_range(0.1..0.8);
    let mut g = Graph::with_vertices(0..n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// Election in synchronous rounds over an adjacency matrix: each round,
/// every undecided node that outranks all its undecided neighbors becomes a
/// head and settles its neighborhood. Members then join their best head.
fn brute_force(g: &Graph, highest_degree: bool) -> BTreeMap<NodeId, NodeId> {
    let ids: Vec<NodeId> = g.vertices().collect();
    let n = ids.len();
    let mut adj = vec![vec![false; n]; n];
    for (i, &a) in ids.iter().enumerate() {
        for (j, &b) in ids.iter().enumerate() {
            adj[i][j] = g.has_edge(a, b);
        }
    }
    let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|&&x| x).count()).collect();
    // strictly better: higher degree (HD) with lower ID on ties, or lower ID (LID)
    let better = |i: usize, j: usize| {
        if highest_degree && deg[i] != deg[j] {
            deg[i] > deg[j]
        } else {
            ids[i] < ids[j]
        }
    };
    let mut undecided = vec![true; n];
    let mut head = vec![false; n];
    while undecided.iter().any(|&u| u) {
        let winners: Vec<usize> = (0..n)
            .filter(|&i| undecided[i] && (0..n).all(|j| !(adj[i][j] && undecided[j]) || better(i, j)))
            .collect();
        for &i in &winners {
            head[i] = true;
            undecided[i] = false;
            for j in 0..n {
                if adj[i][j] {
                    undecided[j] = false;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        let mut choice = i;
        if !head[i] {
            let mut best: Option<usize> = None;
            for j in 0..n {
                if adj[i][j] && head[j] && best.is_none_or(|b| better(j, b)) {
                    best = Some(j);
                }
            }
            choice = best.unwrap_or(i);
        }
        out.insert(ids[i], ids[choice]);
    }
    out
}

fn c12_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..200 {
        let g = random_graph(&mut rng, 10);
        if lid_assign(&g).ch_of != brute_force(&g, false) {
            return Err(format!("graph {k}: lowest-ID election disagrees on {:?}", g.edges()));
        }
        if hd_assign(&g).ch_of != brute_force(&g, true) {
            return Err(format!("graph {k}: highest-degree election disagrees on {:?}", g.edges()));
        }
    }
    Ok("200 random graphs of at most 10 nodes agree".into())
}

fn c13_hd_reduction() -> Outcome {
    let params = AbpParams {
        chc: ChcParams::new(1.0, 0.0, 0, 15).unwrap(),
        quantizer: ChcQuantizer::new(1.0).unwrap(),
        bp: BpController::new(1.0, 8.0, 8.0).unwrap(),
        bp_min_ticks: 10,
        history_depth: 5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut rounds_needed = 0;
    for k in 0..50 {
        let g = random_graph(&mut rng, 16);
        let batteries: BTreeMap<NodeId, f64> = g.vertices().map(|v| (v, rng.gen_range(20.0..100.0))).collect();
        let mut net = LockstepNetwork::new(g.clone(), &batteries, params);
        let mut quiet = 0;
        while quiet < 3 && net.rounds_run() < 30 {
            quiet = if net.round().is_empty() { quiet + 1 } else { 0 };
        }
        rounds_needed = rounds_needed.max(net.rounds_run() - 3);
        let abp: BTreeSet<NodeId> = net.assignment().heads().into_iter().collect();
        let hd: BTreeSet<NodeId> = hd_assign(&g).heads().into_iter().collect();
        if abp != hd {
            return Err(format!("graph {k}: ABP heads {abp:?}, HD heads {hd:?}"));
        }
    }
    Ok(format!("50 static graphs, identical head sets (settled within {rounds_needed} cycles)"))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "reference competence table", c1_table()),
        (2, "illustrated election", c2_figure4()),
        (3, "mobility rate worked example", c3_mobility_rate()),
        (4, "codec round trip and sizes", c4_codec()),
        (5, "two-cycle formation", c5_two_cycle_formation()),
        (6, "cluster size bound", c6_cluster_bound()),
    ];

    let speeds = [0.0, 1.0, 2.0, 5.0, 10.0];
    match sweep(&short_runs(), SweepAxis::MeanSpeed, &speeds, &ProtocolVariant::ALL, &seeds(5)) {
        Ok(rows) => {
            results.push((7, "message count trend", c7_messages(&rows)));
            results.push((8, "control bits trend", c8_bits(&rows, &speeds)));
        }
        Err(e) => {
            results.push((7, "message count trend", Err(e.to_string())));
            results.push((8, "control bits trend", Err(e.to_string())));
        }
    }
    let (c9, c10) = c9_c10();
    results.push((9, "head change ordering", c9));
    results.push((10, "energy variance ordering", c10));
    results.push((11, "static period convergence", c11_static_convergence()));
    results.push((12, "election oracle", c12_oracle()));
    results.push((13, "highest-degree reduction", c13_hd_reduction()));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(msg) => println!("criterion {n:>2} PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {msg}");
            }
        }
    }
    println!("{} of {} criteria passed in {:.1?}", results.len() - failed, results.len(), started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
