#![no_main]

use libfuzzer_sys::fuzz_target;
use opfree::algebra::PSD_TOL;
use opfree::divisibility::CPMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(rho) = CPMap::parse(data) {
        assert!(!rho.completely_positive || rho.choi_min_eig >= -PSD_TOL);
        let again = serde_json::to_vec(&rho.to_json()).unwrap();
        assert!(CPMap::parse(&again).is_ok());
    }
});
