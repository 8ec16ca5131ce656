#![no_main]

use libfuzzer_sys::fuzz_target;
use lrscale::scaling::PowerLaw;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(law) = text.parse::<PowerLaw>() else { return };
    assert_eq!(law.to_string().parse::<PowerLaw>(), Ok(law));
});
