//! Sweep orchestration and plot-ready CSV output.
//!
//! A sweep produces one aggregated file per figure (`variant, axis value,
//! mean, stddev`) and one long-format file with every per-seed value, from
//! which the aggregates can be recomputed. Numbers use the shortest decimal
//! form that reads back to the same `f64`, so identical inputs give
//! byte-identical files.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::codec::ProtocolVariant;
use crate::config::{ConfigError, ExperimentSpec, SweepAxis};
use crate::engine::{sweep, CycleSample, MetricsSummary, SimError, SweepRow};
use crate::protocols::{chc, ChcParams};
use crate::world::World;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Figure {
    Messages,
    Bits,
    ChChanges,
    EnergyVariance,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Messages, Figure::Bits, Figure::ChChanges, Figure::EnergyVariance];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Messages => "fig6",
            Figure::Bits => "fig7",
            Figure::ChChanges => "fig8",
            Figure::EnergyVariance => "fig9",
        }
    }

    /// Metric plotted on the y axis, as named in [`MetricsSummary::NAMES`].
    pub fn metric(self) -> &'static str {
        match self {
            Figure::Messages => "control_msgs",
            Figure::Bits => "control_bits",
            Figure::ChChanges => "ch_changes",
            Figure::EnergyVariance => "energy_variance",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Messages => "fig6_messages.csv",
            Figure::Bits => "fig7_bits.csv",
            Figure::ChChanges => "fig8_ch_changes.csv",
            Figure::EnergyVariance => "fig9_energy_var.csv",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s.trim() || f.metric() == s.trim())
            .ok_or(())
    }
}

/// Shortest round-trip decimal, always with `.` as separator.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub variant: ProtocolVariant,
    pub axis_value: f64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureDataset {
    pub figure: Figure,
    pub axis: SweepAxis,
    pub rows: Vec<FigureRow>,
}

impl FigureDataset {
    /// One row per sweep point, in sweep order.
    pub fn from_sweep(figure: Figure, axis: SweepAxis, rows: &[SweepRow]) -> Self {
        let metric = figure.metric();
        let rows = rows
            .iter()
            .map(|r| FigureRow {
                variant: r.variant,
                axis_value: r.axis_value,
                mean: r.batch.mean.get(metric).expect("known metric"),
                stddev: r.batch.stddev(metric),
            })
            .collect();
        FigureDataset { figure, axis, rows }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = writer(out);
        w.write_record(["variant", self.axis.name(), "mean", "stddev"])?;
        for r in &self.rows {
            w.write_record([r.variant.name().to_string(), fmt_num(r.axis_value), fmt_num(r.mean), fmt_num(r.stddev)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// Every per-seed value of the figures' metrics:
/// `variant,axis,value,seed,metric,value`.
pub fn write_long_csv<W: Write>(out: W, axis: SweepAxis, rows: &[SweepRow], figures: &[Figure]) -> Result<(), csv::Error> {
    let mut w = writer(out);
    w.write_record(["variant", "axis", "value", "seed", "metric", "value"])?;
    for r in rows {
        for (seed, record) in &r.batch.runs {
            let summary = MetricsSummary::from_record(record);
            for f in figures {
                w.write_record([
                    r.variant.name().to_string(),
                    axis.name().to_string(),
                    fmt_num(r.axis_value),
                    seed.to_string(),
                    f.metric().to_string(),
                    fmt_num(summary.get(f.metric()).expect("known metric")),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-cycle counters of one run: `cycle,variant,msgs,bits,ch_changes,energy_var`.
pub fn write_trace_csv<W: Write>(out: W, variant: ProtocolVariant, series: &[CycleSample]) -> Result<(), csv::Error> {
    let mut w = writer(out);
    w.write_record(["cycle", "variant", "msgs", "bits", "ch_changes", "energy_var"])?;
    for s in series {
        w.write_record([
            s.cycle.to_string(),
            variant.name().to_string(),
            s.msgs.to_string(),
            s.bits.to_string(),
            s.ch_changes.to_string(),
            fmt_num(s.energy_var),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one line per node of the world at `tick`:
/// `tick,node_id,x,y,battery,role`. `roles` holds each node's role name.
pub fn write_world_rows<W: Write>(out: &mut W, tick: u64, world: &World, roles: &dyn Fn(NodeId) -> String) -> io::Result<()> {
    for n in &world.nodes {
        writeln!(out, "{tick},{},{},{},{},{}", n.id, fmt_num(n.x), fmt_num(n.y), fmt_num(n.battery), roles(n.id))?;
    }
    Ok(())
}

/// Seeds of every data point.
pub fn seed_list(spec: &ExperimentSpec) -> Vec<u64> {
    (0..spec.config.seeds as u64).map(|i| spec.seed + i).collect()
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    sweep(&spec.config, spec.axis, &spec.values, &spec.variants, &seed_list(spec))
}

/// Writes the resolved configuration, the figure files and the long-format
/// file into `dir`; returns the paths written.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, rows: &[SweepRow]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let conf = dir.join("resolved.conf");
    fs::write(&conf, spec.echo())?;
    written.push(conf);
    for &f in &spec.figures {
        let path = dir.join(f.file_name());
        let mut buf = Vec::new();
        FigureDataset::from_sweep(f, spec.axis, rows).write_csv(&mut buf).map_err(io::Error::other)?;
        fs::write(&path, buf)?;
        written.push(path);
    }
    let path = dir.join("long.csv");
    let mut buf = Vec::new();
    write_long_csv(&mut buf, spec.axis, rows, &spec.figures).map_err(io::Error::other)?;
    fs::write(&path, buf)?;
    written.push(path);
    Ok(written)
}

/// The fifteen hosts of the illustrated example: (MH ID, d, b).
pub const TABLE1_FIXTURE: [(NodeId, usize, f64); 15] = [
    (1, 6, 4.0),
    (2, 4, 5.0),
    (3, 4, 3.0),
    (4, 3, 4.0),
    (5, 2, 2.0),
    (6, 5, 4.0),
    (7, 5, 2.0),
    (8, 5, 1.0),
    (9, 5, 4.0),
    (10, 5, 5.0),
    (11, 2, 4.0),
    (12, 5, 2.0),
    (13, 3, 4.0),
    (14, 2, 7.0),
    (15, 4, 2.0),
];

/// Coefficients the example table was computed with.
pub fn table1_params() -> ChcParams {
    ChcParams::new(0.4, 0.6, 1, 10).expect("valid coefficients")
}

/// Rows numbered from 1 for user-supplied degree and battery lists.
pub fn table1_rows(d: &[usize], b: &[f64]) -> Result<Vec<(NodeId, usize, f64)>, ConfigError> {
    if d.len() != b.len() {
        return Err(ConfigError::Range {
            key: "b".into(),
            message: format!("{} battery values for {} degrees", b.len(), d.len()),
        });
    }
    if d.len() > 255 {
        return Err(ConfigError::Range {
            key: "d".into(),
            message: "at most 255 rows".into(),
        });
    }
    Ok(d.iter().zip(b).enumerate().map(|(i, (&d, &b))| (i as NodeId + 1, d, b)).collect())
}

/// Tab-separated competence table for ordinary hosts. `decimal_comma`
/// prints `3,8` instead of `3.8`.
pub fn table1_text(rows: &[(NodeId, usize, f64)], params: &ChcParams, decimal_comma: bool) -> String {
    let num = |x: f64| {
        // drop binary noise such as 3.8000000000000003
        let s = fmt_num((x * 1e9).round() / 1e9);
        if decimal_comma {
            s.replace('.', ",")
        } else {
            s
        }
    };
    let mut out = String::from("MH ID\td\tb\tCHC\n");
    for &(id, d, b) in rows {
        out.push_str(&format!("{id}\t{d}\t{}\t{}\n", num(b), num(chc(d, b, false, params))));
    }
    out
}
