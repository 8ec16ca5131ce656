#![no_main]

use libfuzzer_sys::fuzz_target;
use lrscale::data::{group, parse_csv_with, IngestOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = parse_csv_with(text, IngestOptions { lenient: true }) {
        let completed = parsed.records.iter().filter(|r| r.is_completed()).count();
        let grouped: usize = group(&parsed.records).iter().map(|g| g.points.len()).sum();
        assert!(grouped <= completed);
    }
});
