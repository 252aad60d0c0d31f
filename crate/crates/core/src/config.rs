//! Simulation configuration: defaults, `key = value` files, overrides and echo.
//!
//! Files are line oriented. `#` starts a comment, `[section]` prefixes the
//! keys that follow with `section.`, and dotted keys may also be written out
//! in full (`energy.e_ordinary = 0.05`). Every key must be known; values are
//! type-checked when set and range-checked once all layers are applied.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{ChcQuantizer, ProtocolVariant, MAX_NODE_ID};
use crate::experiment::Figure;
use crate::mobility::BpController;
use crate::protocols::{AbpParams, ChcParams};
use crate::world::EnergyModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("config key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config key `{key}`: {message}")]
    Range { key: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    fn range(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Range {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub node_count: usize,
    pub terrain_width: f64,
    pub terrain_height: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub battery_min: f64,
    pub battery_max: f64,
    /// Simulated seconds per run.
    pub duration: f64,
    /// Runs averaged per data point.
    pub seeds: usize,
    pub variant: ProtocolVariant,
    pub c1: f64,
    pub c2: f64,
    pub p: u32,
    pub t: u32,
    pub bp_min: f64,
    pub bp_max: f64,
    pub mr_ref: f64,
    /// Rows in the topology history table.
    pub n: usize,
    /// Fixed Hello period of the LID, HD and VC baselines.
    pub baseline_bp: f64,
    pub radio_range: f64,
    pub energy: EnergyModel,
    /// Quantization step of the 8-bit competence field.
    pub chc_scale: f64,
    /// Seconds per simulation tick; `0` picks a tenth of the shortest period.
    pub tick: f64,
    pub heading_redraw_interval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            node_count: 50,
            terrain_width: 600.0,
            terrain_height: 600.0,
            speed_min: 0.0,
            speed_max: 15.0,
            battery_min: 20.0,
            battery_max: 100.0,
            duration: 180.0,
            seeds: 5,
            variant: ProtocolVariant::Abp,
            c1: 0.5,
            c2: 0.5,
            p: 2,
            t: 10,
            bp_min: 1.0,
            bp_max: 8.0,
            mr_ref: 11.0,
            n: 5,
            baseline_bp: 1.0,
            radio_range: 150.0,
            energy: EnergyModel::default(),
            chc_scale: 0.5,
            tick: 0.0,
            heading_redraw_interval: 0.0,
        }
    }
}

pub const SIM_KEYS: &[&str] = &[
    "node_count",
    "terrain_width",
    "terrain_height",
    "speed_min",
    "speed_max",
    "battery_min",
    "battery_max",
    "duration",
    "seeds",
    "variant",
    "c1",
    "c2",
    "p",
    "T",
    "bp_min",
    "bp_max",
    "mr_ref",
    "n",
    "baseline_bp",
    "radio_range",
    "energy.e_ordinary",
    "energy.e_ch_base",
    "energy.e_ch_per_member",
    "chc_scale",
    "tick",
    "heading_redraw_interval",
];

fn parse<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Type {
        key: key.into(),
        value: value.into(),
        expected,
    })
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value, "a number")?;
    if !v.is_finite() {
        return Err(ConfigError::range(key, "must be finite"));
    }
    Ok(v)
}

fn count<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    parse(key, value, "a non-negative integer")
}

fn multiple_of(x: f64, step: f64) -> bool {
    let r = x / step;
    (r - r.round()).abs() < 1e-6 && r.round() >= 1.0
}

impl SimConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "node_count" => self.node_count = count(key, value)?,
            "terrain_width" => self.terrain_width = number(key, value)?,
            "terrain_height" => self.terrain_height = number(key, value)?,
            "speed_min" => self.speed_min = number(key, value)?,
            "speed_max" => self.speed_max = number(key, value)?,
            "battery_min" => self.battery_min = number(key, value)?,
            "battery_max" => self.battery_max = number(key, value)?,
            "duration" => self.duration = number(key, value)?,
            "seeds" => self.seeds = count(key, value)?,
            "variant" => self.variant = parse(key, value, "one of LID, HD, VC, ABP")?,
            "c1" => self.c1 = number(key, value)?,
            "c2" => self.c2 = number(key, value)?,
            "p" => self.p = count(key, value)?,
            "T" | "t" => self.t = count(key, value)?,
            "bp_min" => self.bp_min = number(key, value)?,
            "bp_max" => self.bp_max = number(key, value)?,
            "mr_ref" => self.mr_ref = number(key, value)?,
            "n" => self.n = count(key, value)?,
            "baseline_bp" => self.baseline_bp = number(key, value)?,
            "radio_range" => self.radio_range = number(key, value)?,
            "energy.e_ordinary" => self.energy.e_ordinary = number(key, value)?,
            "energy.e_ch_base" => self.energy.e_ch_base = number(key, value)?,
            "energy.e_ch_per_member" => self.energy.e_ch_per_member = number(key, value)?,
            "chc_scale" => self.chc_scale = number(key, value)?,
            "tick" => self.tick = number(key, value)?,
            "heading_redraw_interval" => self.heading_redraw_interval = number(key, value)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Textual value of a key, in a form [`SimConfig::set`] reads back exactly.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "node_count" => self.node_count.to_string(),
            "terrain_width" => self.terrain_width.to_string(),
            "terrain_height" => self.terrain_height.to_string(),
            "speed_min" => self.speed_min.to_string(),
            "speed_max" => self.speed_max.to_string(),
            "battery_min" => self.battery_min.to_string(),
            "battery_max" => self.battery_max.to_string(),
            "duration" => self.duration.to_string(),
            "seeds" => self.seeds.to_string(),
            "variant" => self.variant.to_string(),
            "c1" => self.c1.to_string(),
            "c2" => self.c2.to_string(),
            "p" => self.p.to_string(),
            "T" | "t" => self.t.to_string(),
            "bp_min" => self.bp_min.to_string(),
            "bp_max" => self.bp_max.to_string(),
            "mr_ref" => self.mr_ref.to_string(),
            "n" => self.n.to_string(),
            "baseline_bp" => self.baseline_bp.to_string(),
            "radio_range" => self.radio_range.to_string(),
            "energy.e_ordinary" => self.energy.e_ordinary.to_string(),
            "energy.e_ch_base" => self.energy.e_ch_base.to_string(),
            "energy.e_ch_per_member" => self.energy.e_ch_per_member.to_string(),
            "chc_scale" => self.chc_scale.to_string(),
            "tick" => self.tick.to_string(),
            "heading_redraw_interval" => self.heading_redraw_interval.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count == 0 || self.node_count > MAX_NODE_ID as usize {
            return Err(ConfigError::range("node_count", format!("must be in 1..={MAX_NODE_ID}, got {}", self.node_count)));
        }
        for (key, v) in [("terrain_width", self.terrain_width), ("terrain_height", self.terrain_height)] {
            if v <= 0.0 {
                return Err(ConfigError::range(key, "must be positive"));
            }
        }
        if self.speed_min < 0.0 {
            return Err(ConfigError::range("speed_min", "must be non-negative"));
        }
        if self.speed_max < self.speed_min {
            return Err(ConfigError::range("speed_max", "must not be below speed_min"));
        }
        if self.battery_min < 0.0 {
            return Err(ConfigError::range("battery_min", "must be non-negative"));
        }
        if self.battery_max < self.battery_min {
            return Err(ConfigError::range("battery_max", "must not be below battery_min"));
        }
        if self.duration < 0.0 {
            return Err(ConfigError::range("duration", "must be non-negative"));
        }
        if self.seeds == 0 {
            return Err(ConfigError::range("seeds", "need at least one run per point"));
        }
        if ChcParams::new(self.c1, self.c2, self.p, 1).is_err() {
            return Err(ConfigError::range("c2", format!("c1 and c2 must lie in [0, 1] and sum to 1 (c1={}, c2={})", self.c1, self.c2)));
        }
        if self.t == 0 || self.t > 15 {
            return Err(ConfigError::range("T", format!("must be in 1..=15 to fit the 4-bit Option field, got {}", self.t)));
        }
        if self.bp_min <= 0.0 {
            return Err(ConfigError::range("bp_min", "must be positive"));
        }
        if BpController::new(self.bp_min, self.bp_max, 1.0).is_err() {
            return Err(ConfigError::range("bp_max", "must lie in [bp_min, 255·bp_min]"));
        }
        if self.mr_ref <= 0.0 {
            return Err(ConfigError::range("mr_ref", "must be positive"));
        }
        if self.n < 2 {
            return Err(ConfigError::range("n", "history needs at least 2 rows"));
        }
        if self.baseline_bp <= 0.0 {
            return Err(ConfigError::range("baseline_bp", "must be positive"));
        }
        if self.radio_range <= 0.0 {
            return Err(ConfigError::range("radio_range", "must be positive"));
        }
        for (key, v) in [
            ("energy.e_ordinary", self.energy.e_ordinary),
            ("energy.e_ch_base", self.energy.e_ch_base),
            ("energy.e_ch_per_member", self.energy.e_ch_per_member),
        ] {
            if v < 0.0 {
                return Err(ConfigError::range(key, "must be non-negative"));
            }
        }
        if ChcQuantizer::new(self.chc_scale).is_err() {
            return Err(ConfigError::range("chc_scale", "must be positive"));
        }
        if self.tick < 0.0 {
            return Err(ConfigError::range("tick", "must be non-negative"));
        }
        let tick = self.tick_seconds();
        if !multiple_of(self.bp_min, tick) {
            return Err(ConfigError::range("tick", format!("bp_min={} is not a whole number of ticks of {tick}", self.bp_min)));
        }
        if !multiple_of(self.baseline_bp, tick) {
            return Err(ConfigError::range("tick", format!("baseline_bp={} is not a whole number of ticks of {tick}", self.baseline_bp)));
        }
        if self.heading_redraw_interval < 0.0 {
            return Err(ConfigError::range("heading_redraw_interval", "must be non-negative"));
        }
        Ok(())
    }

    /// Effective tick length in seconds.
    pub fn tick_seconds(&self) -> f64 {
        if self.tick > 0.0 {
            self.tick
        } else {
            0.1 * self.bp_min.min(self.baseline_bp)
        }
    }

    pub fn ticks_for(&self, seconds: f64) -> u64 {
        (seconds / self.tick_seconds()).round().max(0.0) as u64
    }

    pub fn chc_params(&self) -> ChcParams {
        ChcParams::new(self.c1, self.c2, self.p, self.t).expect("validated config")
    }

    pub fn abp_params(&self) -> AbpParams {
        AbpParams {
            chc: self.chc_params(),
            quantizer: ChcQuantizer::new(self.chc_scale).expect("validated config"),
            bp: BpController::new(self.bp_min, self.bp_max, self.mr_ref).expect("validated config"),
            bp_min_ticks: self.ticks_for(self.bp_min),
            history_depth: self.n,
        }
    }

    /// Vote-based clustering: the same node logic without penalty or size
    /// cap, broadcasting every `baseline_bp`.
    pub fn vc_params(&self) -> AbpParams {
        AbpParams {
            chc: ChcParams::new(self.c1, self.c2, 0, 15).expect("validated config"),
            quantizer: ChcQuantizer::new(self.chc_scale).expect("validated config"),
            bp: BpController::new(self.baseline_bp, self.baseline_bp, self.mr_ref).expect("validated config"),
            bp_min_ticks: self.ticks_for(self.baseline_bp),
            history_depth: self.n,
        }
    }

    /// Speed range centered on `mean`, as wide as `[0, 15]` allows.
    pub fn with_mean_speed(&self, mean: f64) -> SimConfig {
        let w = mean.min(15.0 - mean).max(0.0);
        SimConfig {
            speed_min: (mean - w).max(0.0),
            speed_max: mean + w,
            ..self.clone()
        }
    }
}

/// Splits `key = value` text into pairs, applying `[section]` prefixes.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("unterminated section header `{line}`"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Parses one `--set key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::Syntax {
            line: 0,
            message: format!("override `{arg}` is not of the form key=value"),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NodeCount,
    MeanSpeed,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NodeCount => "node_count",
            SweepAxis::MeanSpeed => "mean_speed",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "node_count" => Ok(SweepAxis::NodeCount),
            "mean_speed" | "speed" => Ok(SweepAxis::MeanSpeed),
            _ => Err(()),
        }
    }
}

/// A sweep over one axis for a set of protocol variants.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub config: SimConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub variants: Vec<ProtocolVariant>,
    /// First seed; a data point uses `seed .. seed + config.seeds`.
    pub seed: u64,
    pub figures: Vec<Figure>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            config: SimConfig::default(),
            axis: SweepAxis::MeanSpeed,
            values: (0..=15).map(f64::from).collect(),
            variants: ProtocolVariant::ALL.to_vec(),
            seed: 1,
            figures: Figure::ALL.to_vec(),
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s, expected))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::range(key, "list must not be empty"));
    }
    Ok(items)
}

impl ExperimentSpec {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "name" => self.name = value.to_string(),
            "seed" => self.seed = count(key, value)?,
            "sweep.axis" => self.axis = parse(key, value, "node_count or mean_speed")?,
            "sweep.values" => self.values = list(key, value, "a number")?,
            "sweep.variants" => self.variants = list(key, value, "one of LID, HD, VC, ABP")?,
            "figures" => self.figures = list(key, value, "one of fig6, fig7, fig8, fig9")?,
            _ => return self.config.set(key, value),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Defaults, then the file (if any), then `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut spec = ExperimentSpec::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            spec.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = parse_override(o)?;
            spec.set(&k, &v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config.validate()?;
        if self.values.is_empty() {
            return Err(ConfigError::range("sweep.values", "list must not be empty"));
        }
        if self.variants.is_empty() {
            return Err(ConfigError::range("sweep.variants", "list must not be empty"));
        }
        for &v in &self.values {
            match self.axis {
                SweepAxis::NodeCount if v < 1.0 || v > MAX_NODE_ID as f64 || v.fract() != 0.0 => {
                    return Err(ConfigError::range("sweep.values", format!("node count {v} is not in 1..=254")));
                }
                SweepAxis::MeanSpeed if !(0.0..=15.0).contains(&v) => {
                    return Err(ConfigError::range("sweep.values", format!("mean speed {v} is outside [0, 15]")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Fully resolved configuration in the file format it was read from.
    pub fn echo(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "sweep.axis = {}", self.axis);
        let _ = writeln!(out, "sweep.values = {}", join(self.values.iter().map(f64::to_string).collect()));
        let _ = writeln!(out, "sweep.variants = {}", join(self.variants.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(out, "figures = {}", join(self.figures.iter().map(|f| f.to_string()).collect()));
        for key in SIM_KEYS {
            let _ = writeln!(out, "{key} = {}", self.config.get(key).expect("listed key"));
        }
        out
    }
}
