#![no_main]

use libfuzzer_sys::fuzz_target;

// Sidecar JSON, a newline, then the raw payload.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let Ok(sidecar) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let raw = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(t) = conv_core::decode_fixture(sidecar, raw) {
        let (_, back) = conv_core::encode_fixture(&t);
        assert_eq!(back, raw);
    }
});
