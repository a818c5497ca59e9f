#![no_main]

use libfuzzer_sys::fuzz_target;
use opfree::ncseries::NCSeries;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = NCSeries::parse(data) {
        // accepted input must serialize back to something the parser accepts
        let again = serde_json::to_vec(&s.to_json()).unwrap();
        assert!(NCSeries::parse(&again).is_ok());
    }
});
