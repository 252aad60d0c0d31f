//! Decodes arbitrary bytes as a Hello packet of every variant. Anything that
//! decodes must encode back to the same bits.

#![no_main]

use abp_sim::codec::{decode_hello, encode_hello, packet_size_bits, BitString, ProtocolVariant};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for v in ProtocolVariant::ALL {
        // first byte trims the length so short and long inputs are both tried
        let len = match data.first() {
            Some(&k) if k % 4 == 0 => packet_size_bits(v) + (k as usize / 4) % 9,
            _ => packet_size_bits(v),
        };
        let Some(bits) = BitString::from_bytes(data.get(1..).unwrap_or(&[]), len) else {
            continue;
        };
        if let Ok(p) = decode_hello(&bits, v) {
            assert_eq!(bits.len(), packet_size_bits(v));
            assert_eq!(encode_hello(&p, v).unwrap(), bits);
        }
    }
});
