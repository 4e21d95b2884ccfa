#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scenes) = bench_cli::scenes::parse_scene_file(text) {
        for s in scenes {
            assert!(s.shape.out_h >= 1 && s.shape.out_w >= 1);
        }
    }
});
