#![no_main]

use blowup_core::io::{read_trajectory_csv, write_trajectory_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = read_trajectory_csv(data) {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, "manifest.json", &samples).expect("write");
        let back = read_trajectory_csv(buf.as_slice()).expect("reread");
        assert_eq!(back.len(), samples.len());
    }
});
