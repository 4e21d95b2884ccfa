#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = sw_sim::MachineConfig::from_json(text) {
        let again = sw_sim::MachineConfig::from_json(&cfg.to_json()).expect("valid config reparses");
        assert_eq!(again, cfg);
    }
});
