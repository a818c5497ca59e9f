#![no_main]

use libfuzzer_sys::fuzz_target;
use opfree::distribution::Distribution;

fuzz_target!(|data: &[u8]| {
    let _ = Distribution::parse(data);
});
