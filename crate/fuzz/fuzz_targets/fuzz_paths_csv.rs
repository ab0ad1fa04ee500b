#![no_main]
use libfuzzer_sys::fuzz_target;
use sparkspread_core::io::read_paths_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_paths_csv(data);
});
