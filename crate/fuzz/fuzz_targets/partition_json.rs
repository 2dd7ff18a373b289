#![no_main]

use libfuzzer_sys::fuzz_target;
use pinlab::pinning::PartitionTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = PartitionTable::from_json(text) {
        assert_eq!(PartitionTable::from_json(&table.to_json()), Ok(table));
    }
});
