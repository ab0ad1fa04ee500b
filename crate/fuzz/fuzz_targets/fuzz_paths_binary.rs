#![no_main]
use libfuzzer_sys::fuzz_target;
use sparkspread_core::io::{decode_paths_binary, encode_paths_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(paths) = decode_paths_binary(data) {
        let bytes = encode_paths_binary(&paths);
        assert_eq!(decode_paths_binary(&bytes).expect("re-decode"), paths);
    }
});
