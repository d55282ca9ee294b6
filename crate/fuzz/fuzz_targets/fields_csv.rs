#![no_main]

use blowup_core::io::{read_fields_csv, write_fields_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(fields) = read_fields_csv(data) {
        let mut buf = Vec::new();
        write_fields_csv(&mut buf, "manifest.json", &fields).expect("write");
        let back = read_fields_csv(buf.as_slice()).expect("reread");
        assert_eq!(back.len(), fields.len());
    }
});
