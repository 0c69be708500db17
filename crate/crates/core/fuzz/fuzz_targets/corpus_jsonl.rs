#![no_main]
use libfuzzer_sys::fuzz_target;

use evex::corpus::{Corpus, Split};
use evex::schema::EventSchema;

fuzz_target!(|data: &str| {
    let schema = EventSchema::maritime();
    let _ = Corpus::from_jsonl_str(data, &schema, Split::Test);
});
