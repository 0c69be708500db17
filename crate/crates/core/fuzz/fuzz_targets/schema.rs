#![no_main]
use libfuzzer_sys::fuzz_target;

use evex::schema::EventSchema;

fuzz_target!(|data: &str| {
    if let Ok(schema) = EventSchema::from_json_str(data) {
        let again = serde_json::to_string(&schema).unwrap();
        let back = EventSchema::from_json_str(&again).expect("serialized schema reparses");
        assert_eq!(back, schema);
    }
});
