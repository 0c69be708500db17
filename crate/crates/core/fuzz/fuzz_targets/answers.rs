#![no_main]
use libfuzzer_sys::fuzz_target;

use evex::answer::{parse_argument_answer, parse_detection_answer, parse_synthesis_answer};

fuzz_target!(|data: &str| {
    let _ = parse_detection_answer(data);
    let _ = parse_argument_answer(data);
    let _ = parse_synthesis_answer(data);
});
