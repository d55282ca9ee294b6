#![no_main]

use blowup_core::io::{Report, RunManifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<RunManifest>(data) {
        let text = serde_json::to_string(&m).expect("encode");
        let _: RunManifest = serde_json::from_str(&text).expect("decode");
    }
    let _ = serde_json::from_slice::<Report<serde_json::Value>>(data);
});
