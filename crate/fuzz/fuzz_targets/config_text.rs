//! Config files and `--set` overrides. Whatever is accepted must echo to
//! text that loads back to the same settings.

#![no_main]

use abp_sim::config::{parse_override, parse_pairs, ExperimentSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 64 * 1024 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_pairs(text);
    for line in text.lines() {
        let _ = parse_override(line);
    }

    let mut spec = ExperimentSpec::default();
    if spec.apply_text(text).is_err() || spec.validate().is_err() {
        return;
    }
    let echo = spec.echo();
    let mut again = ExperimentSpec::default();
    again.apply_text(&echo).expect("echo parses");
    assert_eq!(again.echo(), echo);
});
