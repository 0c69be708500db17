#![no_main]
use libfuzzer_sys::fuzz_target;

use evex::prompt::{PromptTemplate, TaskKind};

fuzz_target!(|data: &[u8]| {
    let Some((&tag, rest)) = data.split_first() else {
        return;
    };
    let Ok(src) = std::str::from_utf8(rest) else {
        return;
    };
    let kind = match tag % 4 {
        0 => TaskKind::Ed,
        1 => TaskKind::Eae,
        2 => TaskKind::Joint,
        _ => TaskKind::Synthesis,
    };
    let _ = PromptTemplate::parse(kind, src);
});
