use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use abp_sim::codec::{decode_hello, encode_hello, BitString, HelloPacket, ProtocolVariant};
use abp_sim::config::{ConfigError, ExperimentSpec};
use abp_sim::engine::{MetricsSummary, SimError, Simulation};
use abp_sim::experiment::{self, fmt_num};
use abp_sim::protocols::ChcParams;
use clap::{Args, Parser, Subcommand};

/// Clustering simulator for mobile ad hoc networks.
#[derive(Parser)]
#[command(name = "abp-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write the per-cycle counters as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write positions, batteries and roles of every node at every tick.
        #[arg(long)]
        world_trace: Option<PathBuf>,
    },
    /// Sweep one axis for several variants and write the figure CSVs.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Print the competence table for a set of hosts.
    Table1 {
        /// Degrees, comma separated (defaults to the built-in example).
        #[arg(long, value_delimiter = ',', requires = "b")]
        d: Vec<usize>,
        /// Batteries, comma separated.
        #[arg(long, value_delimiter = ',', requires = "d")]
        b: Vec<f64>,
        #[arg(long, default_value_t = 0.4)]
        c1: f64,
        #[arg(long, default_value_t = 0.6)]
        c2: f64,
        #[arg(long, default_value_t = 1)]
        p: u32,
        /// Print decimals with a comma.
        #[arg(long)]
        comma: bool,
    },
    /// Hello packet utilities.
    Codec {
        #[command(subcommand)]
        command: CodecCommand,
    },
}

#[derive(Subcommand)]
enum CodecCommand {
    /// Show a packet's bit layout, from fields or from a bit string.
    Dump {
        #[arg(long, default_value = "ABP")]
        variant: ProtocolVariant,
        /// Decode this bit string instead of encoding fields.
        #[arg(long)]
        bits: Option<String>,
        #[arg(long, default_value_t = 0)]
        mh: u8,
        #[arg(long, default_value_t = 255)]
        ch: u8,
        #[arg(long, default_value_t = 0)]
        chc: u8,
        #[arg(long, default_value_t = 0)]
        option: u8,
        #[arg(long, default_value_t = 1)]
        bp: u8,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(common: &Common) -> Result<ExperimentSpec, Failure> {
    let mut spec = ExperimentSpec::load(common.config.as_deref(), &common.set)?;
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn cmd_run(common: &Common, trace: Option<&PathBuf>, world_trace: Option<&PathBuf>) -> Result<(), Failure> {
    let spec = load(common)?;
    let mut out = io::stdout().lock();
    write!(out, "{}", spec.echo())?;

    let mut sim = Simulation::new(&spec.config, spec.seed)?;
    let mut world_out = world_trace.map(File::create).transpose()?.map(BufWriter::new);
    if let Some(w) = world_out.as_mut() {
        writeln!(w, "tick,node_id,x,y,battery,role")?;
    }
    loop {
        if let Some(w) = world_out.as_mut() {
            let roles = sim.assignment();
            let role = |v| roles.role_of.get(&v).map_or("DEAD".to_string(), |r| r.to_string());
            experiment::write_world_rows(w, sim.now(), sim.world(), &role)?;
        }
        if !sim.step()? {
            break;
        }
    }
    if let Some(mut w) = world_out {
        w.flush()?;
    }

    let variant = sim.variant();
    let metrics = sim.into_metrics();
    let summary = MetricsSummary::from_record(&metrics);
    writeln!(out, "# seed {} variant {variant}", spec.seed)?;
    for name in MetricsSummary::NAMES {
        writeln!(out, "# {name} = {}", fmt_num(summary.get(name).expect("listed metric")))?;
    }
    if let Some(path) = trace {
        experiment::write_trace_csv(File::create(path)?, variant, &metrics.series)?;
    }
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved.conf"), spec.echo())?;
        experiment::write_trace_csv(File::create(dir.join("trace.csv"))?, variant, &metrics.series)?;
    }
    Ok(())
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let spec = load(common)?;
    let mut out = io::stdout().lock();
    write!(out, "{}", spec.echo())?;
    let rows = experiment::run_experiment(&spec)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    for path in experiment::write_outputs(&dir, &spec, &rows)? {
        writeln!(out, "# wrote {}", path.display())?;
    }
    Ok(())
}

fn cmd_table1(d: &[usize], b: &[f64], c1: f64, c2: f64, p: u32, comma: bool) -> Result<(), Failure> {
    let params = ChcParams::new(c1, c2, p, 10).map_err(|e| Failure::Config(e.to_string()))?;
    let rows = if d.is_empty() && b.is_empty() {
        experiment::TABLE1_FIXTURE.to_vec()
    } else {
        experiment::table1_rows(d, b)?
    };
    print!("{}", experiment::table1_text(&rows, &params, comma));
    Ok(())
}

fn cmd_dump(variant: ProtocolVariant, bits: Option<&str>, packet: HelloPacket) -> Result<(), Failure> {
    let (packet, bits) = match bits {
        Some(text) => {
            let bits: BitString = text.parse().map_err(|e| Failure::Config(format!("bits: {e}")))?;
            let p = decode_hello(&bits, variant).map_err(|e| Failure::Config(e.to_string()))?;
            (p, bits)
        }
        None => {
            let bits = encode_hello(&packet, variant).map_err(|e| Failure::Config(e.to_string()))?;
            (packet.normalized_for(variant), bits)
        }
    };
    let names: Vec<&str> = variant.layout().iter().map(|(n, _)| *n).collect();
    println!("{variant} {} bits", bits.len());
    println!("{}", names.join(" "));
    println!("{}", bits.grouped(variant));
    println!("{packet:?}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run {
            common,
            trace,
            world_trace,
        } => cmd_run(common, trace.as_ref(), world_trace.as_ref()),
        Command::Sweep { common } => cmd_sweep(common),
        Command::Table1 { d, b, c1, c2, p, comma } => cmd_table1(d, b, *c1, *c2, *p, *comma),
        Command::Codec {
            command:
                CodecCommand::Dump {
                    variant,
                    bits,
                    mh,
                    ch,
                    chc,
                    option,
                    bp,
                },
        } => cmd_dump(
            *variant,
            bits.as_deref(),
            HelloPacket {
                mh_id: *mh,
                ch_id: *ch,
                chc: *chc,
                option: *option,
                bp_code: *bp,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
