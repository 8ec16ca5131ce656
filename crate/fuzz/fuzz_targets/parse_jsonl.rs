#![no_main]

use libfuzzer_sys::fuzz_target;
use lrscale::data::{parse_jsonl_with, to_jsonl, IngestOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = parse_jsonl_with(text, IngestOptions { lenient: true }) else {
        return;
    };
    // Accepted records survive a write and re-read unchanged.
    let again =
        parse_jsonl_with(&to_jsonl(&parsed.records), IngestOptions::default()).expect("serialized records parse");
    assert_eq!(again.records, parsed.records);
});
