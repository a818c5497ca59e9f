#![no_main]

use libfuzzer_sys::fuzz_target;
use opfree::algebra::{half_plane_margin, LevelMatrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = LevelMatrix::parse(data) {
        let _ = half_plane_margin(&b);
        let _ = b.inverse();
    }
});
