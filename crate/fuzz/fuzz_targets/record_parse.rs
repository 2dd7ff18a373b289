#![no_main]

use libfuzzer_sys::fuzz_target;
use pinlab_cli::{emit_report, ResultRecord};

fuzz_target!(|data: &[u8]| {
    if let Ok(record) = serde_json::from_slice::<ResultRecord>(data) {
        let _ = emit_report(std::slice::from_ref(&record));
    }
});
