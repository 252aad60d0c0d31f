#![no_main]

use abp_sim::codec::{decode_hello, BitString, ProtocolVariant};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(bits) = text.parse::<BitString>() else {
        return;
    };
    for v in ProtocolVariant::ALL {
        let _ = decode_hello(&bits, v);
    }
});
