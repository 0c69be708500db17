#![no_main]
use libfuzzer_sys::fuzz_target;

use evex::llm::MockBackend;

fuzz_target!(|data: &str| {
    let _ = MockBackend::from_jsonl_str(data);
});
