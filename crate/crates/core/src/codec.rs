//! Bit-exact Hello packet codec.
//!
//! Layouts (most-significant bit first, fields left to right):
//!
//! | variant | layout                                              | bits |
//! |---------|-----------------------------------------------------|------|
//! | LID     | `MH_ID(8)`                                          | 8    |
//! | HD      | `MH_ID(8)`                                          | 8    |
//! | VC      | `MH_ID(8) CH_ID(8) Vote(8) Reserved(8)`             | 32   |
//! | ABP     | `MH_ID(8) CH_ID(8) CHC(8) Option(4) BP(8)`          | 36   |
//!
//! Node identifiers live in `0..=254`; the code `255` in a CH_ID field means
//! the sender belongs to no cluster.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// CH_ID code carried by a node that is not a member of any cluster.
pub const NO_CLUSTER: u8 = 255;

/// Largest identifier a node may carry.
pub const MAX_NODE_ID: u8 = 254;

/// Largest value of the 4-bit Option field.
pub const MAX_OPTION: u8 = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("field `{field}` value {value} does not fit (max {max})")]
    FieldOverflow {
        field: &'static str,
        value: u32,
        max: u32,
    },
    #[error("{variant} packet must be {expected} bits, got {actual}")]
    Length {
        variant: ProtocolVariant,
        expected: usize,
        actual: usize,
    },
    #[error("reserved bits must be zero")]
    ReservedBits,
    #[error("invalid bit character {0:?}")]
    BadBitChar(char),
    #[error("value is not finite")]
    NonFinite,
    #[error("quantizer scale must be positive and finite, got {0}")]
    BadScale(f64),
}

/// The four clustering protocols the simulator can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolVariant {
    Lid,
    Hd,
    Vc,
    Abp,
}

impl ProtocolVariant {
    pub const ALL: [ProtocolVariant; 4] = [
        ProtocolVariant::Lid,
        ProtocolVariant::Hd,
        ProtocolVariant::Vc,
        ProtocolVariant::Abp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolVariant::Lid => "LID",
            ProtocolVariant::Hd => "HD",
            ProtocolVariant::Vc => "VC",
            ProtocolVariant::Abp => "ABP",
        }
    }

    /// Field names and widths in wire order.
    pub fn layout(self) -> &'static [(&'static str, usize)] {
        match self {
            ProtocolVariant::Lid | ProtocolVariant::Hd => &[("MH_ID", 8)],
            ProtocolVariant::Vc => &[("MH_ID", 8), ("CH_ID", 8), ("Vote", 8), ("Reserved", 8)],
            ProtocolVariant::Abp => &[
                ("MH_ID", 8),
                ("CH_ID", 8),
                ("CHC", 8),
                ("Option", 4),
                ("BP", 8),
            ],
        }
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LID" => Ok(ProtocolVariant::Lid),
            "HD" => Ok(ProtocolVariant::Hd),
            "VC" => Ok(ProtocolVariant::Vc),
            "ABP" => Ok(ProtocolVariant::Abp),
            other => Err(format!("unknown protocol variant `{other}`")),
        }
    }
}

/// Size of one Hello packet on the wire.
pub fn packet_size_bits(variant: ProtocolVariant) -> usize {
    variant.layout().iter().map(|(_, w)| w).sum()
}

/// One Hello control message.
///
/// `chc` holds the quantized competence for ABP and the quantized vote for VC.
/// Fields a variant does not carry decode to `ch_id = NO_CLUSTER` and zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HelloPacket {
    pub mh_id: u8,
    pub ch_id: u8,
    pub chc: u8,
    pub option: u8,
    pub bp_code: u8,
}

impl HelloPacket {
    /// Packet of a node that carries nothing beyond its identifier.
    pub fn bare(mh_id: u8) -> Self {
        HelloPacket {
            mh_id,
            ch_id: NO_CLUSTER,
            chc: 0,
            option: 0,
            bp_code: 0,
        }
    }

    /// Keeps only the fields `variant` puts on the wire.
    pub fn normalized_for(self, variant: ProtocolVariant) -> Self {
        match variant {
            ProtocolVariant::Lid | ProtocolVariant::Hd => HelloPacket::bare(self.mh_id),
            ProtocolVariant::Vc => HelloPacket {
                option: 0,
                bp_code: 0,
                ..self
            },
            ProtocolVariant::Abp => self,
        }
    }

    pub fn is_cluster_head(&self) -> bool {
        self.ch_id == self.mh_id
    }
}

/// An MSB-first sequence of bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        BitString(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    fn push_field(&mut self, value: u32, width: usize) {
        for shift in (0..width).rev() {
            self.0.push((value >> shift) & 1 == 1);
        }
    }

    /// Packs into bytes, MSB first, zero-padding the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
            })
            .collect()
    }

    /// Reads the first `len` bits of `bytes`; `None` if there are too few.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() * 8 < len {
            return None;
        }
        Some(BitString(
            (0..len)
                .map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1)
                .collect(),
        ))
    }

    /// Renders the bits split into the fields of `variant`, e.g. `00000001 11111111 ...`.
    /// Falls back to plain rendering when the length does not match.
    pub fn grouped(&self, variant: ProtocolVariant) -> String {
        if self.len() != packet_size_bits(variant) {
            return self.to_string();
        }
        let mut out = Vec::new();
        let mut pos = 0;
        for &(_, width) in variant.layout() {
            out.push(
                self.0[pos..pos + width]
                    .iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect::<String>(),
            );
            pos += width;
        }
        out.join(" ")
    }
}

impl From<Vec<bool>> for BitString {
    fn from(bits: Vec<bool>) -> Self {
        BitString(bits)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Parses `0`/`1` characters; spaces, tabs and `_` are ignored as separators.
impl FromStr for BitString {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                ' ' | '\t' | '_' => {}
                other => return Err(CodecError::BadBitChar(other)),
            }
        }
        Ok(BitString(bits))
    }
}

fn check(field: &'static str, value: u8, max: u8) -> Result<(), CodecError> {
    if value > max {
        Err(CodecError::FieldOverflow {
            field,
            value: value as u32,
            max: max as u32,
        })
    } else {
        Ok(())
    }
}

pub fn encode_hello(packet: &HelloPacket, variant: ProtocolVariant) -> Result<BitString, CodecError> {
    check("MH_ID", packet.mh_id, MAX_NODE_ID)?;
    let mut out = BitString(Vec::with_capacity(packet_size_bits(variant)));
    out.push_field(packet.mh_id as u32, 8);
    match variant {
        ProtocolVariant::Lid | ProtocolVariant::Hd => {}
        ProtocolVariant::Vc => {
            out.push_field(packet.ch_id as u32, 8);
            out.push_field(packet.chc as u32, 8);
            out.push_field(0, 8);
        }
        ProtocolVariant::Abp => {
            check("Option", packet.option, MAX_OPTION)?;
            out.push_field(packet.ch_id as u32, 8);
            out.push_field(packet.chc as u32, 8);
            out.push_field(packet.option as u32, 4);
            out.push_field(packet.bp_code as u32, 8);
        }
    }
    debug_assert_eq!(out.len(), packet_size_bits(variant));
    Ok(out)
}

struct Reader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, width: usize) -> u8 {
        let v = self.bits[self.pos..self.pos + width]
            .iter()
            .fold(0u8, |acc, &b| (acc << 1) | b as u8);
        self.pos += width;
        v
    }
}

pub fn decode_hello(bits: &BitString, variant: ProtocolVariant) -> Result<HelloPacket, CodecError> {
    let expected = packet_size_bits(variant);
    if bits.len() != expected {
        return Err(CodecError::Length {
            variant,
            expected,
            actual: bits.len(),
        });
    }
    let mut r = Reader {
        bits: bits.bits(),
        pos: 0,
    };
    let mh_id = r.take(8);
    check("MH_ID", mh_id, MAX_NODE_ID)?;
    let packet = match variant {
        ProtocolVariant::Lid | ProtocolVariant::Hd => HelloPacket::bare(mh_id),
        ProtocolVariant::Vc => {
            let ch_id = r.take(8);
            let chc = r.take(8);
            if r.take(8) != 0 {
                return Err(CodecError::ReservedBits);
            }
            HelloPacket {
                mh_id,
                ch_id,
                chc,
                option: 0,
                bp_code: 0,
            }
        }
        ProtocolVariant::Abp => HelloPacket {
            mh_id,
            ch_id: r.take(8),
            chc: r.take(8),
            option: r.take(4),
            bp_code: r.take(8),
        },
    };
    Ok(packet)
}

/// Fixed-point mapping of competence values onto the 8-bit CHC field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChcQuantizer {
    scale: f64,
}

impl ChcQuantizer {
    pub const DEFAULT_SCALE: f64 = 0.05;

    pub fn new(scale: f64) -> Result<Self, CodecError> {
        if scale.is_finite() && scale > 0.0 {
            Ok(ChcQuantizer { scale })
        } else {
            Err(CodecError::BadScale(scale))
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn max_value(&self) -> f64 {
        255.0 * self.scale
    }

    pub fn quantize(&self, chc: f64) -> Result<u8, CodecError> {
        if !chc.is_finite() {
            return Err(CodecError::NonFinite);
        }
        let clamped = chc.clamp(0.0, self.max_value());
        Ok((clamped / self.scale).round().min(255.0) as u8)
    }

    pub fn dequantize(&self, code: u8) -> f64 {
        code as f64 * self.scale
    }
}

impl Default for ChcQuantizer {
    fn default() -> Self {
        ChcQuantizer {
            scale: Self::DEFAULT_SCALE,
        }
    }
}

pub fn quantize_chc(chc: f64, q: &ChcQuantizer) -> Result<u8, CodecError> {
    q.quantize(chc)
}

/// BP field code: the broadcast period in units of `bp_min`, clamped to `1..=255`.
pub fn bp_to_code(bp: f64, bp_min: f64) -> u8 {
    (bp / bp_min).round().clamp(1.0, 255.0) as u8
}

pub fn bp_from_code(code: u8, bp_min: f64) -> f64 {
    code as f64 * bp_min
}
