#![no_main]
use libfuzzer_sys::fuzz_target;

use evex::index::FlatIndex;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = FlatIndex::from_bytes(data) {
        let bytes = index.to_bytes();
        let back = FlatIndex::from_bytes(&bytes).expect("re-encoded index loads");
        assert_eq!(back.to_bytes(), bytes);
    }
});
