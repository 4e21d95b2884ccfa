#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sections) = sw_sim::parse_trace(text) {
        let again = sw_sim::parse_trace(&sw_sim::format_trace(sections.iter().map(|(c, p)| (*c, p.as_slice())))).expect("formatted trace reparses");
        assert_eq!(again, sections);
    }
});
